//! Trainee onboarding: a step-gated tutorial and a guided annotation task
//! with scripted feedback on every cluster decision.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{ActionEffect, AnnotationAction, AnnotationError, AnnotationState, AnnotationTask};
use crate::ids::{ClusterId, MentionId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ScriptIssue {
    InvalidTask { message: String },
    UnknownMention { step: usize, mention: usize },
    DuplicateStep { step: usize, mention: usize },
    MissingStep { mention: usize },
    ForwardReference { mention: usize, same_as: usize },
    MissingFeedback { mention: usize },
    ReplayFailed { mention: usize, message: String },
    NoSteps,
    EmptyPrompt { step: usize },
}

impl fmt::Display for ScriptIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptIssue::InvalidTask { message } => write!(f, "invalid task: {message}"),
            ScriptIssue::UnknownMention { step, mention } => {
                write!(f, "step {step}: mention {mention} does not exist")
            }
            ScriptIssue::DuplicateStep { step, mention } => {
                write!(f, "step {step}: mention {mention} already has a step")
            }
            ScriptIssue::MissingStep { mention } => {
                write!(f, "incomplete coverage: mention {mention} has no step")
            }
            ScriptIssue::ForwardReference { mention, same_as } => write!(
                f,
                "forward reference: mention {mention} expects the cluster of mention {same_as}, which is not presented before it"
            ),
            ScriptIssue::MissingFeedback { mention } => {
                write!(f, "mention {mention} has no on_wrong feedback")
            }
            ScriptIssue::ReplayFailed { mention, message } => {
                write!(f, "replaying the expected decision for mention {mention} failed: {message}")
            }
            ScriptIssue::NoSteps => f.write_str("script has no steps"),
            ScriptIssue::EmptyPrompt { step } => write!(f, "step {step} has an empty prompt"),
        }
    }
}

fn issue_list(issues: &[ScriptIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OnboardingError {
    #[error("invalid script: {}", issue_list(.0))]
    Script(Vec<ScriptIssue>),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// Expected cluster decision for one mention. Mentions are referred to by
/// their index in the task's mention list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expectation {
    New(crate::review::NewTag),
    SameAs { same_as: usize },
}

impl Expectation {
    pub const NEW: Expectation = Expectation::New(crate::review::NewTag::New);
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidedStep {
    pub mention: usize,
    pub expect: Expectation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_wrong: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_right: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidedScript {
    pub task: AnnotationTask,
    pub steps: Vec<GuidedStep>,
}

/// Per-mention check resolved against session mention ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub mention: MentionId,
    /// `None` means a new cluster is expected.
    pub same_as: Option<MentionId>,
    pub on_wrong: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_right: Option<String>,
}

/// Checks a guided script and resolves its steps to session mention ids.
///
/// The session numbers mentions in presentation order, so a script index
/// maps to the id of its rank after sorting.
pub fn validate_guided(script: &GuidedScript) -> Result<BTreeMap<MentionId, Gate>, Vec<ScriptIssue>> {
    let mut issues = Vec::new();
    let initial = match script.task.start() {
        Ok(state) => state,
        Err(e) => {
            return Err(vec![ScriptIssue::InvalidTask {
                message: e.to_string(),
            }])
        }
    };
    let n = script.task.mentions.len();
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by_key(|&i| script.task.mentions[i]);
    let mut rank = vec![0; n];
    for (r, &i) in by_rank.iter().enumerate() {
        rank[i] = r;
    }
    let id_of = |index: usize| MentionId(rank[index] as u32);

    let mut gates: BTreeMap<MentionId, Gate> = BTreeMap::new();
    for (step_no, step) in script.steps.iter().enumerate() {
        if step.mention >= n {
            issues.push(ScriptIssue::UnknownMention {
                step: step_no,
                mention: step.mention,
            });
            continue;
        }
        let id = id_of(step.mention);
        if gates.contains_key(&id) {
            issues.push(ScriptIssue::DuplicateStep {
                step: step_no,
                mention: step.mention,
            });
            continue;
        }
        let same_as = match step.expect {
            Expectation::New(_) => None,
            Expectation::SameAs { same_as } => {
                if same_as >= n || rank[same_as] >= rank[step.mention] {
                    issues.push(ScriptIssue::ForwardReference {
                        mention: step.mention,
                        same_as,
                    });
                    continue;
                }
                Some(id_of(same_as))
            }
        };
        let on_wrong = step.on_wrong.clone().unwrap_or_default();
        if on_wrong.trim().is_empty() && rank[step.mention] > 0 {
            issues.push(ScriptIssue::MissingFeedback {
                mention: step.mention,
            });
        }
        gates.insert(
            id,
            Gate {
                mention: id,
                same_as,
                on_wrong,
                on_right: step.on_right.clone(),
            },
        );
    }
    for &index in by_rank.iter().skip(1) {
        if !gates.contains_key(&id_of(index)) {
            issues.push(ScriptIssue::MissingStep { mention: index });
        }
    }
    if !issues.is_empty() {
        return Err(issues);
    }

    // replaying the expected decisions must give a complete, valid state
    let mut state = initial;
    while let Some(current) = state.current().map(|m| m.id) {
        let gate = &gates[&current];
        let index = by_rank[current.0 as usize];
        let target = match gate.same_as {
            None => crate::annotation::Target::New,
            Some(m) => match state.cluster_of(m) {
                Some(c) => crate::annotation::Target::Existing(c),
                None => {
                    return Err(vec![ScriptIssue::ReplayFailed {
                        mention: index,
                        message: format!("{m} is not assigned"),
                    }])
                }
            },
        };
        if let Err(e) = state.assign_current(target) {
            return Err(vec![ScriptIssue::ReplayFailed {
                mention: index,
                message: e.to_string(),
            }]);
        }
    }
    if let Err(e) = state.check_invariants() {
        return Err(vec![ScriptIssue::ReplayFailed {
            mention: n.saturating_sub(1),
            message: e.to_string(),
        }]);
    }
    Ok(gates)
}

/// The clustering a trainee should end up with.
pub fn expected_state(script: &GuidedScript) -> Result<AnnotationState, OnboardingError> {
    let gates = validate_guided(script).map_err(OnboardingError::Script)?;
    let mut state = script.task.start()?;
    while let Some(current) = state.current().map(|m| m.id) {
        let target = match gates[&current].same_as {
            None => crate::annotation::Target::New,
            Some(m) => crate::annotation::Target::Existing(state.cluster_of(m).expect("validated")),
        };
        state.assign_current(target)?;
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum GuidedResponse {
    Accepted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        toast: Option<String>,
    },
    Rejected {
        feedback: String,
    },
    /// A cluster was highlighted; no decision was made.
    Selected { cluster: ClusterId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    NewCluster,
    SameClusterAs(MentionId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub mention: MentionId,
    pub attempts: u32,
    pub decision: Decision,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnboardingOutcome {
    pub errors: BTreeMap<MentionId, u32>,
    pub total_attempts: u32,
    pub completed: bool,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidedSession {
    gates: BTreeMap<MentionId, Gate>,
    state: AnnotationState,
    outcome: OnboardingOutcome,
    /// Attempts on the current mention so far.
    attempts: u32,
}

impl GuidedSession {
    pub fn new(script: &GuidedScript) -> Result<Self, OnboardingError> {
        let gates = validate_guided(script).map_err(OnboardingError::Script)?;
        let state = script.task.start()?;
        let mut outcome = OnboardingOutcome::default();
        for (id, _) in state.assigned() {
            outcome.transcript.push(TranscriptEntry {
                mention: *id,
                attempts: 0,
                decision: Decision::NewCluster,
            });
        }
        outcome.completed = state.is_complete();
        Ok(Self {
            gates,
            state,
            outcome,
            attempts: 0,
        })
    }

    pub fn state(&self) -> &AnnotationState {
        &self.state
    }

    pub fn outcome(&self) -> &OnboardingOutcome {
        &self.outcome
    }

    pub fn is_complete(&self) -> bool {
        self.state.is_complete()
    }

    pub fn current_gate(&self) -> Option<&Gate> {
        self.state.current().map(|m| &self.gates[&m.id])
    }

    /// Grades one trainee action on the current mention. The annotation only
    /// moves forward on a correct decision.
    pub fn guided_step(&mut self, action: &AnnotationAction) -> Result<GuidedResponse, OnboardingError> {
        let Some(current) = self.state.current().map(|m| m.id) else {
            return Err(OnboardingError::Protocol("guided annotation is finished".into()));
        };
        let chosen = match action {
            AnnotationAction::Select { cluster } => {
                self.state.select_cluster(*cluster)?;
                return Ok(GuidedResponse::Selected { cluster: *cluster });
            }
            AnnotationAction::AssignNew => None,
            AnnotationAction::Assign { cluster } => {
                let cluster = cluster
                    .or(self.state.selected())
                    .ok_or(AnnotationError::NoSelection)?;
                if self.state.cluster(cluster).is_none() {
                    return Err(AnnotationError::UnknownCluster(cluster).into());
                }
                Some(cluster)
            }
            AnnotationAction::Reassign { mention, .. } => {
                return Err(OnboardingError::Protocol(format!(
                    "{mention} is not the current mention ({current})"
                )))
            }
            other => {
                return Err(OnboardingError::Protocol(format!(
                    "{} is not graded in guided annotation",
                    other.op_name()
                )))
            }
        };
        let gate = self.gates[&current].clone();
        let correct = match (gate.same_as, chosen) {
            (None, None) => true,
            (Some(m), Some(c)) => self.state.cluster_of(m) == Some(c),
            _ => false,
        };
        self.attempts += 1;
        self.outcome.total_attempts += 1;
        if !correct {
            *self.outcome.errors.entry(current).or_default() += 1;
            return Ok(GuidedResponse::Rejected {
                feedback: gate.on_wrong,
            });
        }
        let effect = self.state.apply(action)?;
        debug_assert!(matches!(effect, ActionEffect::Assigned { .. }));
        self.outcome.transcript.push(TranscriptEntry {
            mention: current,
            attempts: self.attempts,
            decision: gate
                .same_as
                .map_or(Decision::NewCluster, Decision::SameClusterAs),
        });
        self.attempts = 0;
        self.outcome.completed = self.state.is_complete();
        Ok(GuidedResponse::Accepted { toast: gate.on_right })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighlightTarget {
    CurrentMention,
    ClusterBank,
    CandidateRow,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Fix,
    Add,
    Assign,
    AssignNew,
    Reassign,
    Select,
}

impl ActionKind {
    pub fn of(action: &AnnotationAction) -> Self {
        match action {
            AnnotationAction::Fix { .. } => ActionKind::Fix,
            AnnotationAction::Add { .. } => ActionKind::Add,
            AnnotationAction::Assign { .. } => ActionKind::Assign,
            AnnotationAction::AssignNew => ActionKind::AssignNew,
            AnnotationAction::Reassign { .. } => ActionKind::Reassign,
            AnnotationAction::Select { .. } => ActionKind::Select,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckTag {
    Ack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Requirement {
    Acknowledge(AckTag),
    Action { op: ActionKind },
}

impl Requirement {
    pub const ACK: Requirement = Requirement::Acknowledge(AckTag::Ack);
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorialStep {
    pub prompt: String,
    pub target: HighlightTarget,
    pub require: Requirement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorialScript {
    pub steps: Vec<TutorialStep>,
    /// Practice task the trainee's actions are applied to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<AnnotationTask>,
}

pub fn validate_tutorial(script: &TutorialScript) -> Result<(), Vec<ScriptIssue>> {
    let mut issues = Vec::new();
    if script.steps.is_empty() {
        issues.push(ScriptIssue::NoSteps);
    }
    for (i, step) in script.steps.iter().enumerate() {
        if step.prompt.trim().is_empty() {
            issues.push(ScriptIssue::EmptyPrompt { step: i });
        }
    }
    if let Some(task) = &script.task {
        if let Err(e) = task.start() {
            issues.push(ScriptIssue::InvalidTask {
                message: e.to_string(),
            });
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TutorialEvent {
    Ack,
    #[serde(untagged)]
    Action(AnnotationAction),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum TutorialResponse {
    Advanced { passed: bool },
    Blocked,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorialOutcome {
    pub steps: usize,
    pub completed_steps: usize,
    pub blocked_events: u32,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorialSession {
    script: TutorialScript,
    step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sandbox: Option<AnnotationState>,
    blocked: u32,
}

impl TutorialSession {
    pub fn new(script: TutorialScript) -> Result<Self, OnboardingError> {
        validate_tutorial(&script).map_err(OnboardingError::Script)?;
        let sandbox = script.task.as_ref().map(|t| t.start()).transpose()?;
        Ok(Self {
            script,
            step: 0,
            sandbox,
            blocked: 0,
        })
    }

    pub fn current_step(&self) -> Option<&TutorialStep> {
        self.script.steps.get(self.step)
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn sandbox(&self) -> Option<&AnnotationState> {
        self.sandbox.as_ref()
    }

    pub fn is_passed(&self) -> bool {
        self.step >= self.script.steps.len()
    }

    pub fn tutorial_step(&mut self, event: &TutorialEvent) -> TutorialResponse {
        let Some(step) = self.current_step() else {
            self.blocked += 1;
            return TutorialResponse::Blocked;
        };
        let matches = match (step.require, event) {
            (Requirement::Acknowledge(_), TutorialEvent::Ack) => true,
            (Requirement::Action { op }, TutorialEvent::Action(action)) => {
                op == ActionKind::of(action)
                    && match &mut self.sandbox {
                        // try on a copy so a rejected action leaves no trace
                        Some(sandbox) => {
                            let mut trial = sandbox.clone();
                            let ok = trial.apply(action).is_ok();
                            if ok {
                                *sandbox = trial;
                            }
                            ok
                        }
                        None => true,
                    }
            }
            _ => false,
        };
        if matches {
            self.step += 1;
            TutorialResponse::Advanced {
                passed: self.is_passed(),
            }
        } else {
            self.blocked += 1;
            TutorialResponse::Blocked
        }
    }

    pub fn outcome(&self) -> TutorialOutcome {
        TutorialOutcome {
            steps: self.script.steps.len(),
            completed_steps: self.step,
            blocked_events: self.blocked,
            passed: self.is_passed(),
        }
    }
}

/// Mentions grouped by expected cluster, as sets of script indices.
pub fn expected_groups(script: &GuidedScript) -> Result<BTreeSet<BTreeSet<usize>>, OnboardingError> {
    let state = expected_state(script)?;
    let index_of: BTreeMap<_, _> = script
        .task
        .mentions
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, i))
        .collect();
    Ok(state
        .partition()
        .into_iter()
        .map(|c| c.iter().map(|s| index_of[s]).collect())
        .collect())
}
