//! Sequential review of a finished annotation.
//!
//! The original mentions are replayed in span order from a stack. For each
//! one the reviewer first settles the span (accept, shrink, split, extend
//! over later mentions, or insert a new span), then picks a cluster in their
//! own clustering. Candidate clusters come from two token-level maps:
//!
//! * the antecedent map, built once from the original: each token maps to
//!   every token of the same original cluster that precedes it;
//! * `t2c`, which grows with every reviewer decision: each committed token
//!   maps to the reviewer cluster it was put in.
//!
//! A candidate is any reviewer cluster holding an antecedent of a token of
//! the span under review. Working per token is what lets split and merged
//! spans keep a sensible link back to the original assignment.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    pop_split_push, AnnotationError, AnnotationState, Spanned, Target,
};
use crate::corpus::{spans_overlap, MentionSpan, TokenRef};
use crate::ids::{ClusterId, MentionId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReviewError {
    #[error("the original annotation is incomplete ({remaining} mention(s) pending)")]
    IncompleteOriginal { remaining: usize },
    #[error("the original annotation has no mentions")]
    EmptyOriginal,
    #[error("review is finished")]
    Finished,
    #[error("a span decision is needed before choosing a cluster")]
    SpanNotReviewed,
    #[error("the span under review still needs a cluster decision")]
    ClusterPending,
    #[error("span {span} overlaps reviewed mention {existing}")]
    Overlap {
        span: MentionSpan,
        existing: MentionSpan,
    },
    #[error("span {span} starts before the last reviewed mention {last}")]
    Backward { span: MentionSpan, last: MentionSpan },
    #[error("candidate index {index} out of range ({available} candidate(s))")]
    CandidateOutOfRange { index: usize, available: usize },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("script step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<ReviewError>,
    },
    #[error("script ended after {steps} step(s) with {remaining} original mention(s) unreviewed")]
    ScriptExhausted { steps: usize, remaining: usize },
    #[error("script has {extra} step(s) left after the review finished at step {steps}")]
    ScriptOverrun { steps: usize, extra: usize },
    #[error("inconsistent review state: {0}")]
    Corrupt(String),
}

/// Static token-level antecedent map of an original annotation.
///
/// Stored as one token list per original cluster (in token order) plus each
/// token's position in its list; the antecedents of a token are the prefix
/// of its list before it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AntecedentMap {
    chains: Vec<Vec<TokenRef>>,
    position: BTreeMap<TokenRef, (usize, usize)>,
}

impl AntecedentMap {
    pub fn antecedents(&self, token: TokenRef) -> &[TokenRef] {
        match self.position.get(&token) {
            Some(&(chain, rank)) => &self.chains[chain][..rank],
            None => &[],
        }
    }

    /// Tokens covered by some original mention.
    pub fn tokens(&self) -> impl Iterator<Item = TokenRef> + '_ {
        self.position.keys().copied()
    }
}

pub fn create_antecedent_mapping(
    original: &AnnotationState,
) -> Result<AntecedentMap, ReviewError> {
    if !original.is_complete() {
        return Err(ReviewError::IncompleteOriginal {
            remaining: original.pending_len(),
        });
    }
    let mut map = AntecedentMap::default();
    for spans in original.partition() {
        let mut tokens: Vec<TokenRef> = spans.iter().flat_map(|s| s.tokens()).collect();
        tokens.sort();
        let chain = map.chains.len();
        for (rank, t) in tokens.iter().enumerate() {
            map.position.insert(*t, (chain, rank));
        }
        map.chains.push(tokens);
    }
    Ok(map)
}

/// An original mention (or a leftover piece of one) awaiting review.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackEntry {
    pub span: MentionSpan,
    pub original_cluster: ClusterId,
    /// The original mention this entry came from.
    pub source: MentionId,
    /// True for a tail left behind when the reviewer cut the entry short.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub remainder: bool,
}

impl Spanned for StackEntry {
    fn span(&self) -> MentionSpan {
        self.span
    }
    fn set_span(&mut self, span: MentionSpan) {
        self.span = span;
        self.remainder = true;
    }
}

/// The reviewer's span decision for the mention on top of the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpanDecision {
    Accept(AcceptTag),
    Span(MentionSpan),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcceptTag {
    Accept,
}

impl SpanDecision {
    pub const ACCEPT: SpanDecision = SpanDecision::Accept(AcceptTag::Accept);
}

/// The reviewer's cluster decision, as written in review scripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterDecision {
    New(NewTag),
    Candidate { candidate_index: usize },
    Cluster { cluster_id: ClusterId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NewTag {
    New,
}

impl ClusterDecision {
    pub const NEW: ClusterDecision = ClusterDecision::New(NewTag::New);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewStep {
    pub span: SpanDecision,
    pub cluster: ClusterDecision,
}

impl ReviewStep {
    pub fn new(span: SpanDecision, cluster: ClusterDecision) -> Self {
        Self { span, cluster }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanChange {
    Accepted,
    /// The reviewed span is a proper prefix of the presented one; the tail
    /// stays on the stack.
    Split,
    Edited,
    /// A brand-new span placed before the presented mention.
    Inserted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanReview {
    pub presented: StackEntry,
    pub span: MentionSpan,
    pub change: SpanChange,
    /// Stack entries consumed by the reviewed span.
    pub popped: Vec<StackEntry>,
    /// Original span of the entry that was cut to start after the reviewed span.
    pub truncated: Option<MentionSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum ReviewPhase {
    AwaitingSpan,
    AwaitingCluster {
        review: SpanReview,
        candidates: Vec<ClusterId>,
    },
}

/// Session-level review operations, as carried in protocol messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReviewAction {
    Span {
        span: SpanDecision,
    },
    SelectCandidate {
        index: usize,
    },
    Assign {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cluster: Option<ClusterId>,
    },
    AssignNew,
    Reassign {
        mention: MentionId,
        cluster: Target,
    },
    Select {
        cluster: ClusterId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReviewEffect {
    SpanReviewed(SpanReview),
    Committed {
        mention: MentionId,
        cluster: ClusterId,
        created: bool,
    },
    Reassigned {
        mention: MentionId,
        to: ClusterId,
    },
    Selected {
        cluster: ClusterId,
    },
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewSession {
    original: AnnotationState,
    antecedents: AntecedentMap,
    stack: VecDeque<StackEntry>,
    t2c: BTreeMap<TokenRef, ClusterId>,
    reviewed: AnnotationState,
    phase: ReviewPhase,
}

impl ReviewSession {
    pub fn new(original: AnnotationState) -> Result<Self, ReviewError> {
        let antecedents = create_antecedent_mapping(&original)?;
        if original.num_assigned() == 0 {
            return Err(ReviewError::EmptyOriginal);
        }
        let mut stack: Vec<StackEntry> = original
            .assigned()
            .map(|(id, a)| StackEntry {
                span: a.span,
                original_cluster: a.cluster,
                source: *id,
                remainder: false,
            })
            .collect();
        stack.sort_by_key(|e| e.span);
        let reviewed = AnnotationState::empty(original.corpus().clone());
        Ok(Self {
            original,
            antecedents,
            stack: stack.into(),
            t2c: BTreeMap::new(),
            reviewed,
            phase: ReviewPhase::AwaitingSpan,
        })
    }

    pub fn original(&self) -> &AnnotationState {
        &self.original
    }

    pub fn antecedents(&self) -> &AntecedentMap {
        &self.antecedents
    }

    pub fn reviewed(&self) -> &AnnotationState {
        &self.reviewed
    }

    pub fn into_reviewed(self) -> AnnotationState {
        self.reviewed
    }

    pub fn stack(&self) -> impl ExactSizeIterator<Item = &StackEntry> {
        self.stack.iter()
    }

    pub fn top(&self) -> Option<&StackEntry> {
        self.stack.front()
    }

    pub fn phase(&self) -> &ReviewPhase {
        &self.phase
    }

    pub fn token_clusters(&self) -> &BTreeMap<TokenRef, ClusterId> {
        &self.t2c
    }

    /// Candidates for the span currently awaiting a cluster decision.
    pub fn current_candidates(&self) -> &[ClusterId] {
        match &self.phase {
            ReviewPhase::AwaitingCluster { candidates, .. } => candidates,
            ReviewPhase::AwaitingSpan => &[],
        }
    }

    /// The span awaiting a cluster decision, or else the stack top.
    pub fn current_span(&self) -> Option<MentionSpan> {
        match &self.phase {
            ReviewPhase::AwaitingCluster { review, .. } => Some(review.span),
            ReviewPhase::AwaitingSpan => self.top().map(|e| e.span),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.stack.is_empty() && matches!(self.phase, ReviewPhase::AwaitingSpan)
    }

    /// Original mentions (or pieces) still waiting, counting the one in hand.
    pub fn remaining(&self) -> usize {
        self.stack.len() + usize::from(!matches!(self.phase, ReviewPhase::AwaitingSpan))
    }

    fn last_committed(&self) -> Option<MentionSpan> {
        self.reviewed.assigned().map(|(_, a)| a.span).max()
    }

    /// Reviewer clusters linked to `span` through the original annotation,
    /// deduplicated, in cluster creation order.
    pub fn get_candidates(&self, span: MentionSpan) -> Vec<ClusterId> {
        let found: BTreeSet<ClusterId> = span
            .tokens()
            .flat_map(|t| self.antecedents.antecedents(t))
            .filter_map(|a| self.t2c.get(a).copied())
            .collect();
        found.into_iter().collect()
    }

    /// Settles the span of the mention on top of the stack and computes its
    /// candidate clusters.
    pub fn review_span(&mut self, decision: SpanDecision) -> Result<&SpanReview, ReviewError> {
        if !matches!(self.phase, ReviewPhase::AwaitingSpan) {
            return Err(ReviewError::ClusterPending);
        }
        let presented = *self.top().ok_or(ReviewError::Finished)?;
        let span = match decision {
            SpanDecision::Accept(_) => presented.span,
            SpanDecision::Span(span) => span,
        };
        self.reviewed
            .corpus()
            .check_span(span)
            .map_err(AnnotationError::from)?;
        if let Some(existing) = self
            .reviewed
            .assigned()
            .map(|(_, a)| a.span)
            .find(|s| spans_overlap(s, &span))
        {
            return Err(ReviewError::Overlap { span, existing });
        }
        if let Some(last) = self.last_committed() {
            if span.start_ref() <= last.end_ref() {
                return Err(ReviewError::Backward { span, last });
            }
        }

        let change = if span == presented.span {
            SpanChange::Accepted
        } else if span.end_ref() < presented.span.start_ref() {
            SpanChange::Inserted
        } else if span.doc == presented.span.doc
            && span.start == presented.span.start
            && span.end < presented.span.end
        {
            SpanChange::Split
        } else {
            SpanChange::Edited
        };
        let edit = pop_split_push(&mut self.stack, span);
        let review = SpanReview {
            presented,
            span,
            change,
            popped: edit.popped,
            truncated: edit.truncated,
        };
        let candidates = self.get_candidates(span);
        self.phase = ReviewPhase::AwaitingCluster { review, candidates };
        match &self.phase {
            ReviewPhase::AwaitingCluster { review, .. } => Ok(review),
            ReviewPhase::AwaitingSpan => unreachable!(),
        }
    }

    /// Commits the reviewed span to `choice`. Any reviewer cluster may be
    /// chosen, not only a candidate.
    pub fn select_cluster(&mut self, choice: Target) -> Result<ClusterId, ReviewError> {
        let span = match &self.phase {
            ReviewPhase::AwaitingCluster { review, .. } => review.span,
            ReviewPhase::AwaitingSpan if self.stack.is_empty() => {
                return Err(ReviewError::Finished)
            }
            ReviewPhase::AwaitingSpan => return Err(ReviewError::SpanNotReviewed),
        };
        let (_, cluster) = self.reviewed.commit(span, choice)?;
        for t in span.tokens() {
            self.t2c.insert(t, cluster);
        }
        self.phase = ReviewPhase::AwaitingSpan;
        Ok(cluster)
    }

    pub fn select_candidate(&mut self, index: usize) -> Result<ClusterId, ReviewError> {
        let candidates = match &self.phase {
            ReviewPhase::AwaitingCluster { candidates, .. } => candidates,
            ReviewPhase::AwaitingSpan => return Err(ReviewError::SpanNotReviewed),
        };
        let cluster = *candidates
            .get(index)
            .ok_or(ReviewError::CandidateOutOfRange {
                index,
                available: candidates.len(),
            })?;
        self.select_cluster(Target::Existing(cluster))
    }

    /// Moves an already reviewed mention to another reviewer cluster.
    pub fn reassign(&mut self, mention: MentionId, target: Target) -> Result<ReviewEffect, ReviewError> {
        let span = self
            .reviewed
            .mention_span(mention)
            .ok_or(AnnotationError::UnknownMention(mention))?;
        let effect = self.reviewed.reassign(mention, target)?;
        let crate::annotation::ActionEffect::Reassigned { to, .. } = effect else {
            return Ok(ReviewEffect::NoOp);
        };
        for t in span.tokens() {
            self.t2c.insert(t, to);
        }
        // a cluster deleted by the move may have been offered as a candidate
        if let ReviewPhase::AwaitingCluster { review, .. } = &self.phase {
            let fresh = self.get_candidates(review.span);
            if let ReviewPhase::AwaitingCluster { candidates, .. } = &mut self.phase {
                *candidates = fresh;
            }
        }
        Ok(ReviewEffect::Reassigned { mention, to })
    }

    pub fn select(&mut self, cluster: ClusterId) -> Result<(), ReviewError> {
        self.reviewed.select_cluster(cluster)?;
        Ok(())
    }

    pub fn apply(&mut self, action: &ReviewAction) -> Result<ReviewEffect, ReviewError> {
        let committed = |session: &Self, cluster: ClusterId, created: bool| {
            let mention = session
                .reviewed
                .assigned()
                .max_by_key(|(id, _)| **id)
                .map(|(id, _)| *id)
                .expect("a mention was just committed");
            ReviewEffect::Committed {
                mention,
                cluster,
                created,
            }
        };
        match *action {
            ReviewAction::Span { span } => self
                .review_span(span)
                .map(|r| ReviewEffect::SpanReviewed(r.clone())),
            ReviewAction::SelectCandidate { index } => {
                let cluster = self.select_candidate(index)?;
                Ok(committed(self, cluster, false))
            }
            ReviewAction::Assign { cluster } => {
                let cluster = cluster
                    .or(self.reviewed.selected())
                    .ok_or(AnnotationError::NoSelection)?;
                let cluster = self.select_cluster(Target::Existing(cluster))?;
                Ok(committed(self, cluster, false))
            }
            ReviewAction::AssignNew => {
                let cluster = self.select_cluster(Target::New)?;
                Ok(committed(self, cluster, true))
            }
            ReviewAction::Reassign { mention, cluster } => self.reassign(mention, cluster),
            ReviewAction::Select { cluster } => {
                self.select(cluster)?;
                Ok(ReviewEffect::Selected { cluster })
            }
        }
    }

    fn resolve(&self, decision: ClusterDecision) -> Result<Target, ReviewError> {
        match decision {
            ClusterDecision::New(_) => Ok(Target::New),
            ClusterDecision::Cluster { cluster_id } => Ok(Target::Existing(cluster_id)),
            ClusterDecision::Candidate { candidate_index } => {
                let candidates = self.current_candidates();
                candidates
                    .get(candidate_index)
                    .map(|c| Target::Existing(*c))
                    .ok_or(ReviewError::CandidateOutOfRange {
                        index: candidate_index,
                        available: candidates.len(),
                    })
            }
        }
    }

    fn cluster_view(&self, id: ClusterId) -> CandidateView {
        let cluster = self.reviewed.cluster(id).expect("live reviewer cluster");
        CandidateView {
            cluster: id,
            label: cluster.label.clone(),
            mentions: cluster
                .mentions
                .iter()
                .filter_map(|m| self.reviewed.mention_text(*m))
                .collect(),
        }
    }

    fn stack_texts(&self, head: Option<MentionSpan>) -> Vec<String> {
        let corpus = self.reviewed.corpus();
        head.into_iter()
            .chain(self.stack.iter().map(|e| e.span))
            .map(|s| corpus.span_text(s))
            .collect()
    }

    /// Checks everything that deserialisation cannot: the original is
    /// complete, the stack is sorted and ahead of all reviewed spans, and
    /// `t2c` covers exactly the reviewed tokens.
    fn check(&self) -> Result<(), ReviewError> {
        let bad = |m: &str| Err(ReviewError::Corrupt(m.to_string()));
        if self.original.corpus() != self.reviewed.corpus() {
            return bad("original and reviewed corpora differ");
        }
        if self.stack.iter().zip(self.stack.iter().skip(1)).any(|(a, b)| a.span >= b.span) {
            return bad("stack is not sorted");
        }
        let mut expected = BTreeMap::new();
        for (_, a) in self.reviewed.assigned() {
            for t in a.span.tokens() {
                expected.insert(t, a.cluster);
            }
        }
        if expected != self.t2c {
            return bad("token map does not match reviewed mentions");
        }
        if let (Some(last), Some(top)) = (self.last_committed(), self.top()) {
            if top.span.start_ref() <= last.end_ref() {
                return bad("stack top precedes a reviewed mention");
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ReviewSessionRepr {
    original: AnnotationState,
    stack: VecDeque<StackEntry>,
    token_clusters: Vec<(TokenRef, ClusterId)>,
    reviewed: AnnotationState,
    #[serde(flatten)]
    phase: ReviewPhase,
}

impl Serialize for ReviewSession {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ReviewSessionRepr {
            original: self.original.clone(),
            stack: self.stack.clone(),
            token_clusters: self.t2c.iter().map(|(t, c)| (*t, *c)).collect(),
            reviewed: self.reviewed.clone(),
            phase: self.phase.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ReviewSession {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = ReviewSessionRepr::deserialize(deserializer)?;
        let antecedents = create_antecedent_mapping(&repr.original).map_err(D::Error::custom)?;
        let session = ReviewSession {
            original: repr.original,
            antecedents,
            stack: repr.stack,
            t2c: repr.token_clusters.into_iter().collect(),
            reviewed: repr.reviewed,
            phase: repr.phase,
        };
        session.check().map_err(D::Error::custom)?;
        Ok(session)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateView {
    pub cluster: ClusterId,
    pub label: String,
    pub mentions: Vec<String>,
}

/// One row of a review walkthrough.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "row", rename_all = "snake_case")]
pub enum TraceRow {
    /// The reviewer changed the presented span.
    Span {
        step: usize,
        stack: Vec<String>,
        presented: String,
        change: SpanChange,
        reviewed: String,
        /// Stack texts right after the change, reviewed span first.
        result: Vec<String>,
    },
    /// Cluster decision for the reviewed span.
    Assign {
        step: usize,
        stack: Vec<String>,
        mention: String,
        candidates: Vec<CandidateView>,
        decision: ClusterDecision,
        cluster: CandidateView,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewOutcome {
    pub reviewed: AnnotationState,
    pub trace: Vec<TraceRow>,
}

/// Runs a whole review from a script of decisions, one step per presented
/// mention.
pub fn run_review(
    original: AnnotationState,
    script: &[ReviewStep],
) -> Result<ReviewOutcome, ReviewError> {
    let mut session = ReviewSession::new(original)?;
    let mut trace = Vec::new();
    let mut used = 0;
    while !session.is_complete() {
        let Some(step) = script.get(used) else {
            return Err(ReviewError::ScriptExhausted {
                steps: used,
                remaining: session.remaining(),
            });
        };
        let at = |e: ReviewError| ReviewError::Step {
            step: used,
            source: Box::new(e),
        };
        let stack_before = session.stack_texts(None);
        let review = session.review_span(step.span).map_err(at)?.clone();
        let corpus = session.reviewed.corpus();
        let mention = corpus.span_text(review.span);
        if review.change != SpanChange::Accepted {
            trace.push(TraceRow::Span {
                step: trace.len() + 1,
                stack: stack_before.clone(),
                presented: corpus.span_text(review.presented.span),
                change: review.change,
                reviewed: mention.clone(),
                result: session.stack_texts(Some(review.span)),
            });
        }
        let stack = if review.change == SpanChange::Accepted {
            stack_before
        } else {
            session.stack_texts(Some(review.span))
        };
        let candidates: Vec<CandidateView> = session
            .current_candidates()
            .iter()
            .map(|c| session.cluster_view(*c))
            .collect();
        let target = session.resolve(step.cluster).map_err(at)?;
        let cluster = session.select_cluster(target).map_err(at)?;
        trace.push(TraceRow::Assign {
            step: trace.len() + 1,
            stack,
            mention,
            candidates,
            decision: step.cluster,
            cluster: session.cluster_view(cluster),
        });
        used += 1;
    }
    if used < script.len() {
        return Err(ReviewError::ScriptOverrun {
            steps: used,
            extra: script.len() - used,
        });
    }
    Ok(ReviewOutcome {
        reviewed: session.into_reviewed(),
        trace,
    })
}

/// The script that agrees with everything: accept each span, take the sole
/// candidate, open a new cluster when there is none.
pub fn identity_review(original: AnnotationState) -> Result<(ReviewOutcome, Vec<usize>), ReviewError> {
    let mut session = ReviewSession::new(original)?;
    let mut sizes = Vec::new();
    let mut script = Vec::new();
    while !session.is_complete() {
        session.review_span(SpanDecision::ACCEPT)?;
        let n = session.current_candidates().len();
        sizes.push(n);
        let decision = if n == 0 {
            ClusterDecision::NEW
        } else {
            ClusterDecision::Candidate { candidate_index: 0 }
        };
        let target = session.resolve(decision)?;
        session.select_cluster(target)?;
        script.push(ReviewStep::new(SpanDecision::ACCEPT, decision));
    }
    let outcome = run_review(session.original.clone(), &script)?;
    Ok((outcome, sizes))
}
