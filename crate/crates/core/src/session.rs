//! Message protocol over the engines.
//!
//! A session wraps one engine (annotate, review, tutorial or guided) behind
//! JSON requests `{session_id, seq, op, params}` and responses
//! `{seq, ok, error?, result?, view_delta?}`. Every accepted request bumps the
//! session version; a request is accepted only when `seq == version + 1`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, PoisonError, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::annotation::{AnnotationAction, AnnotationError, AnnotationState, AnnotationTask};
use crate::conll::{to_conll_string, ConllError};
use crate::corpus::MentionSpan;
use crate::ids::{ClusterId, MentionId};
use crate::json::{decode_html_attribute, from_json, from_json_value, to_json, JsonError};
use crate::onboarding::{
    GuidedResponse, GuidedScript, GuidedSession, HighlightTarget, OnboardingError, Requirement,
    TutorialEvent, TutorialResponse, TutorialScript, TutorialSession,
};
use crate::review::{ReviewAction, ReviewError, ReviewSession};

pub const SNAPSHOT_FORMAT: &str = "coref-session";
pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SESSION_ID: &str = "session";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Annotate,
    Review,
    Tutorial,
    Guided,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Annotate, Mode::Review, Mode::Tutorial, Mode::Guided];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Annotate => "annotate",
            Mode::Review => "review",
            Mode::Tutorial => "tutorial",
            Mode::Guided => "guided",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Conll,
    Json,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conll" => Ok(Self::Conll),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown export format {s:?}")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid {what}: {source}")]
    Json {
        what: &'static str,
        #[source]
        source: JsonError,
    },
    #[error("action log line {line}: {source}")]
    LogLine {
        line: usize,
        #[source]
        source: JsonError,
    },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Onboarding(#[from] OnboardingError),
    #[error(transparent)]
    Conll(#[from] ConllError),
    #[error("cannot export: annotation incomplete, {remaining} mention(s) still pending")]
    Incomplete { remaining: usize },
    #[error("{mode} sessions cannot export {format:?}")]
    UnsupportedFormat { mode: Mode, format: ExportFormat },
    #[error("unsupported snapshot format {format:?} version {version}")]
    SnapshotFormat { format: String, version: u32 },
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {0:?} already exists")]
    DuplicateSession(String),
    #[error("message for session {got:?} sent to session {expected:?}")]
    WrongSession { expected: String, got: String },
    #[error("sequence conflict: expected seq {expected}, got {got}")]
    Conflict { expected: u64, got: u64 },
    #[error("action at seq {seq} rejected: {source}")]
    Replay {
        seq: u64,
        #[source]
        source: Box<SessionError>,
    },
}

impl SessionError {
    fn json(what: &'static str, source: JsonError) -> Self {
        Self::Json { what, source }
    }

    /// Stable machine-readable category, as carried in protocol errors.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Json { .. } | Self::LogLine { .. } => "bad_request",
            Self::Annotation(_) | Self::Review(_) | Self::Onboarding(_) => "rejected",
            Self::Conll(_) => "export_failed",
            Self::Incomplete { .. } => "incomplete",
            Self::UnsupportedFormat { .. } => "unsupported_format",
            Self::SnapshotFormat { .. } => "snapshot_format",
            Self::UnknownSession(_) => "unknown_session",
            Self::DuplicateSession(_) => "duplicate_session",
            Self::WrongSession { .. } => "wrong_session",
            Self::Conflict { .. } => "conflict",
            Self::Replay { source, .. } => source.code(),
        }
    }

    pub fn pointer(&self) -> Option<&str> {
        match self {
            Self::Json { source, .. } | Self::LogLine { source, .. } => Some(&source.pointer),
            Self::Replay { source, .. } => source.pointer(),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub task: AnnotationTask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    /// A complete prior annotation.
    pub original: AnnotationState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TutorialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub script: TutorialScript,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidedConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub script: GuidedScript,
}

/// A task definition; on the wire, an object with a `mode` key plus the
/// fields of the mode's config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionConfig {
    Annotate(AnnotateConfig),
    Review(ReviewConfig),
    Tutorial(TutorialConfig),
    Guided(GuidedConfig),
}

impl SessionConfig {
    pub fn mode(&self) -> Mode {
        match self {
            Self::Annotate(_) => Mode::Annotate,
            Self::Review(_) => Mode::Review,
            Self::Tutorial(_) => Mode::Tutorial,
            Self::Guided(_) => Mode::Guided,
        }
    }

    pub fn session_id(&self) -> Option<&str> {
        match self {
            Self::Annotate(c) => c.session_id.as_deref(),
            Self::Review(c) => c.session_id.as_deref(),
            Self::Tutorial(c) => c.session_id.as_deref(),
            Self::Guided(c) => c.session_id.as_deref(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, SessionError> {
        let value: Value = from_json(text).map_err(|e| SessionError::json("config", e))?;
        Self::from_value(value)
    }

    /// Parses a config taken from an HTML attribute value.
    pub fn parse_html_attribute(raw: &str) -> Result<Self, SessionError> {
        Self::parse(&decode_html_attribute(raw))
    }

    pub fn from_value(value: Value) -> Result<Self, SessionError> {
        let bad = |pointer: &str, message: String| {
            SessionError::json(
                "config",
                JsonError {
                    pointer: pointer.to_string(),
                    message,
                },
            )
        };
        let Value::Object(mut obj) = value else {
            return Err(bad("", "expected an object".into()));
        };
        let mode = match obj.remove("mode") {
            Some(Value::String(s)) => s.parse::<Mode>().map_err(|e| bad("/mode", e))?,
            Some(_) => return Err(bad("/mode", "expected a string".into())),
            None => return Err(bad("", "missing field `mode`".into())),
        };
        let body = Value::Object(obj);
        let parse_err = |e| SessionError::json("config", e);
        Ok(match mode {
            Mode::Annotate => Self::Annotate(from_json_value(body).map_err(parse_err)?),
            Mode::Review => Self::Review(from_json_value(body).map_err(parse_err)?),
            Mode::Tutorial => Self::Tutorial(from_json_value(body).map_err(parse_err)?),
            Mode::Guided => Self::Guided(from_json_value(body).map_err(parse_err)?),
        })
    }

    pub fn to_value(&self) -> Value {
        let (mode, body) = match self {
            Self::Annotate(c) => (Mode::Annotate, serde_json::to_value(c)),
            Self::Review(c) => (Mode::Review, serde_json::to_value(c)),
            Self::Tutorial(c) => (Mode::Tutorial, serde_json::to_value(c)),
            Self::Guided(c) => (Mode::Guided, serde_json::to_value(c)),
        };
        let mut body = body.expect("config serialisation cannot fail");
        body.as_object_mut()
            .expect("configs serialise as objects")
            .insert("mode".into(), Value::String(mode.as_str().into()));
        body
    }
}

// ---------------------------------------------------------------------------
// Messages

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub session_id: String,
    pub seq: u64,
    pub op: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointer: Option<String>,
}

impl From<&SessionError> for ProtocolError {
    fn from(e: &SessionError) -> Self {
        Self {
            code: e.code().to_string(),
            message: e.to_string(),
            pointer: e.pointer().map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub seq: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ProtocolError>,
    /// Engine-specific outcome of the action.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_delta: Option<ViewDelta>,
}

impl Response {
    pub fn rejected(seq: u64, error: &SessionError) -> Self {
        Self {
            seq,
            ok: false,
            error: Some(error.into()),
            result: None,
            view_delta: None,
        }
    }
}

/// An accepted action as recorded in the action log. On the wire it is one
/// flat JSON object: `{"op": ..., <params>..., "seq": N}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Map<String, Value>", try_from = "Map<String, Value>")]
pub struct LogEntry {
    pub seq: u64,
    pub op: String,
    pub params: Map<String, Value>,
}

impl From<LogEntry> for Map<String, Value> {
    fn from(e: LogEntry) -> Self {
        let mut m = e.params;
        m.insert("op".into(), Value::String(e.op));
        m.insert("seq".into(), Value::from(e.seq));
        m
    }
}

impl TryFrom<Map<String, Value>> for LogEntry {
    type Error = String;

    fn try_from(mut m: Map<String, Value>) -> Result<Self, Self::Error> {
        let seq = match m.remove("seq") {
            Some(v) => v.as_u64().ok_or("`seq` must be a non-negative integer")?,
            None => return Err("missing field `seq`".into()),
        };
        let op = match m.remove("op") {
            Some(Value::String(s)) => s,
            Some(_) => return Err("`op` must be a string".into()),
            None => return Err("missing field `op`".into()),
        };
        Ok(Self { seq, op, params: m })
    }
}

impl LogEntry {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log serialisation cannot fail")
    }
}

/// Parses a JSON-lines action log; blank lines are skipped.
pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, SessionError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| from_json(l).map_err(|source| SessionError::LogLine { line: i + 1, source }))
        .collect()
}

pub fn write_log(entries: &[LogEntry]) -> String {
    entries.iter().map(|e| e.to_line() + "\n").collect()
}

// ---------------------------------------------------------------------------
// View model

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenView {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mention: Option<MentionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentView {
    pub id: String,
    pub tokens: Vec<TokenView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankEntry {
    pub id: ClusterId,
    pub label: String,
    pub size: usize,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateChip {
    pub index: usize,
    pub cluster: ClusterId,
    pub label: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Notice {
    /// Positive confirmation after a correct guided decision.
    Toast { text: String },
    /// Explanation after a wrong guided decision.
    Feedback { text: String },
    /// The tutorial ignored an event that did not satisfy the current step.
    Blocked { prompt: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorialView {
    pub step: usize,
    pub steps: usize,
    pub prompt: String,
    pub target: HighlightTarget,
    pub require: Requirement,
}

/// Everything the UI renders, derived from session state alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewModel {
    pub session_id: String,
    pub mode: Mode,
    pub version: u64,
    pub documents: Vec<DocumentView>,
    pub current: Option<MentionSpan>,
    pub bank: Vec<BankEntry>,
    pub candidates: Vec<CandidateChip>,
    pub complete: bool,
    pub notice: Option<Notice>,
    pub tutorial: Option<TutorialView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPatch {
    pub doc: usize,
    pub token: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mention: Option<MentionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterId>,
}

/// One replaced region of the view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum ViewChange {
    Documents { documents: Vec<DocumentView> },
    Tokens { patches: Vec<TokenPatch> },
    Current { span: Option<MentionSpan> },
    Bank { entries: Vec<BankEntry> },
    Candidates { chips: Vec<CandidateChip> },
    Complete { value: bool },
    Notice { notice: Option<Notice> },
    Tutorial { tutorial: Option<TutorialView> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewDelta {
    pub version: u64,
    pub changes: Vec<ViewChange>,
}

fn same_shape(a: &[DocumentView], b: &[DocumentView]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.id == y.id
                && x.tokens.len() == y.tokens.len()
                && x.tokens.iter().zip(&y.tokens).all(|(s, t)| s.text == t.text)
        })
}

/// The changes turning `old` into `new`.
pub fn diff_views(old: &ViewModel, new: &ViewModel) -> ViewDelta {
    let mut changes = Vec::new();
    if !same_shape(&old.documents, &new.documents) {
        changes.push(ViewChange::Documents {
            documents: new.documents.clone(),
        });
    } else {
        let mut patches = Vec::new();
        for (d, (a, b)) in old.documents.iter().zip(&new.documents).enumerate() {
            for (t, (x, y)) in a.tokens.iter().zip(&b.tokens).enumerate() {
                if x != y {
                    patches.push(TokenPatch {
                        doc: d,
                        token: t,
                        mention: y.mention,
                        cluster: y.cluster,
                    });
                }
            }
        }
        if !patches.is_empty() {
            changes.push(ViewChange::Tokens { patches });
        }
    }
    if old.current != new.current {
        changes.push(ViewChange::Current { span: new.current });
    }
    if old.bank != new.bank {
        changes.push(ViewChange::Bank {
            entries: new.bank.clone(),
        });
    }
    if old.candidates != new.candidates {
        changes.push(ViewChange::Candidates {
            chips: new.candidates.clone(),
        });
    }
    if old.complete != new.complete {
        changes.push(ViewChange::Complete { value: new.complete });
    }
    if old.notice != new.notice {
        changes.push(ViewChange::Notice {
            notice: new.notice.clone(),
        });
    }
    if old.tutorial != new.tutorial {
        changes.push(ViewChange::Tutorial {
            tutorial: new.tutorial.clone(),
        });
    }
    ViewDelta {
        version: new.version,
        changes,
    }
}

pub fn apply_delta(view: &mut ViewModel, delta: &ViewDelta) {
    view.version = delta.version;
    for change in &delta.changes {
        match change {
            ViewChange::Documents { documents } => view.documents = documents.clone(),
            ViewChange::Tokens { patches } => {
                for p in patches {
                    if let Some(tok) = view
                        .documents
                        .get_mut(p.doc)
                        .and_then(|d| d.tokens.get_mut(p.token))
                    {
                        tok.mention = p.mention;
                        tok.cluster = p.cluster;
                    }
                }
            }
            ViewChange::Current { span } => view.current = *span,
            ViewChange::Bank { entries } => view.bank = entries.clone(),
            ViewChange::Candidates { chips } => view.candidates = chips.clone(),
            ViewChange::Complete { value } => view.complete = *value,
            ViewChange::Notice { notice } => view.notice = notice.clone(),
            ViewChange::Tutorial { tutorial } => view.tutorial = tutorial.clone(),
        }
    }
}

fn documents_of(state: &AnnotationState) -> Vec<DocumentView> {
    let mut docs: Vec<DocumentView> = state
        .corpus()
        .documents()
        .iter()
        .map(|d| DocumentView {
            id: d.id.clone(),
            tokens: d
                .tokens
                .iter()
                .map(|t| TokenView {
                    text: t.text.clone(),
                    mention: None,
                    cluster: None,
                })
                .collect(),
        })
        .collect();
    let mut mark = |span: MentionSpan, mention: MentionId, cluster: Option<ClusterId>| {
        for at in span.tokens() {
            let tok = &mut docs[at.doc].tokens[at.token];
            tok.mention = Some(mention);
            tok.cluster = cluster;
        }
    };
    for m in state.pending() {
        mark(m.span, m.id, None);
    }
    for (id, a) in state.assigned() {
        mark(a.span, *id, Some(a.cluster));
    }
    docs
}

fn bank_of(state: &AnnotationState) -> Vec<BankEntry> {
    state
        .clusters()
        .map(|c| BankEntry {
            id: c.id,
            label: c.label.clone(),
            size: c.mentions.len(),
            selected: state.selected() == Some(c.id),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Sessions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "state", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)] // one per session; boxing buys nothing
enum Engine {
    Annotate(AnnotationState),
    Review(ReviewSession),
    Tutorial(TutorialSession),
    Guided(GuidedSession),
}

impl Engine {
    fn mode(&self) -> Mode {
        match self {
            Engine::Annotate(_) => Mode::Annotate,
            Engine::Review(_) => Mode::Review,
            Engine::Tutorial(_) => Mode::Tutorial,
            Engine::Guided(_) => Mode::Guided,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    format: String,
    format_version: u32,
    session_id: String,
    version: u64,
    #[serde(default)]
    notice: Option<Notice>,
    log: Vec<LogEntry>,
    engine: Engine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    id: String,
    version: u64,
    engine: Engine,
    notice: Option<Notice>,
    log: Vec<LogEntry>,
}

fn parse_action<T: DeserializeOwned>(op: &str, params: &Map<String, Value>) -> Result<T, SessionError> {
    let bad = |pointer: String, message: String| SessionError::json("action", JsonError { pointer, message });
    if params.contains_key("op") {
        return Err(bad("/params/op".into(), "`op` is reserved".into()));
    }
    let mut obj = params.clone();
    obj.insert("op".into(), Value::String(op.to_string()));
    from_json_value(Value::Object(obj)).map_err(|e| {
        let pointer = if e.pointer.starts_with("/op") {
            e.pointer
        } else {
            format!("/params{}", e.pointer)
        };
        bad(pointer, e.message)
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("effect serialisation cannot fail")
}

impl Session {
    pub fn open(config: SessionConfig) -> Result<Self, SessionError> {
        let id = config.session_id().unwrap_or(DEFAULT_SESSION_ID).to_string();
        let engine = match config {
            SessionConfig::Annotate(c) => Engine::Annotate(c.task.start()?),
            SessionConfig::Review(c) => Engine::Review(ReviewSession::new(c.original)?),
            SessionConfig::Tutorial(c) => Engine::Tutorial(TutorialSession::new(c.script)?),
            SessionConfig::Guided(c) => Engine::Guided(GuidedSession::new(&c.script)?),
        };
        Ok(Self {
            id,
            version: 0,
            engine,
            notice: None,
            log: Vec::new(),
        })
    }

    pub fn open_json(config: &str) -> Result<Self, SessionError> {
        Self::open(SessionConfig::parse(config)?)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> Mode {
        self.engine.mode()
    }

    /// Number of accepted actions so far.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn is_complete(&self) -> bool {
        match &self.engine {
            Engine::Annotate(s) => s.is_complete(),
            Engine::Review(r) => r.is_complete(),
            Engine::Tutorial(t) => t.is_passed(),
            Engine::Guided(g) => g.is_complete(),
        }
    }

    /// The annotation the session is building, if the mode has one.
    pub fn annotation(&self) -> Option<&AnnotationState> {
        match &self.engine {
            Engine::Annotate(s) => Some(s),
            Engine::Review(r) => Some(r.reviewed()),
            Engine::Tutorial(t) => t.sandbox(),
            Engine::Guided(g) => Some(g.state()),
        }
    }

    pub fn review(&self) -> Option<&ReviewSession> {
        match &self.engine {
            Engine::Review(r) => Some(r),
            _ => None,
        }
    }

    pub fn guided(&self) -> Option<&GuidedSession> {
        match &self.engine {
            Engine::Guided(g) => Some(g),
            _ => None,
        }
    }

    pub fn tutorial(&self) -> Option<&TutorialSession> {
        match &self.engine {
            Engine::Tutorial(t) => Some(t),
            _ => None,
        }
    }

    pub fn view(&self) -> ViewModel {
        let state = self.annotation();
        let mut view = ViewModel {
            session_id: self.id.clone(),
            mode: self.mode(),
            version: self.version,
            documents: state.map(documents_of).unwrap_or_default(),
            current: state.and_then(|s| s.current()).map(|m| m.span),
            bank: state.map(bank_of).unwrap_or_default(),
            candidates: Vec::new(),
            complete: self.is_complete(),
            notice: self.notice.clone(),
            tutorial: None,
        };
        match &self.engine {
            Engine::Review(r) => {
                view.current = r.current_span();
                view.candidates = r
                    .current_candidates()
                    .iter()
                    .enumerate()
                    .filter_map(|(index, &id)| {
                        r.reviewed().cluster(id).map(|c| CandidateChip {
                            index,
                            cluster: id,
                            label: c.label.clone(),
                            size: c.mentions.len(),
                        })
                    })
                    .collect();
            }
            Engine::Tutorial(t) => {
                let outcome = t.outcome();
                view.tutorial = t.current_step().map(|s| TutorialView {
                    step: t.step_index(),
                    steps: outcome.steps,
                    prompt: s.prompt.clone(),
                    target: s.target,
                    require: s.require,
                });
            }
            Engine::Annotate(_) | Engine::Guided(_) => {}
        }
        view
    }

    /// Runs `op` against a copy of the engine and commits only on success.
    fn run(&self, op: &str, params: &Map<String, Value>) -> Result<(Engine, Option<Notice>, Value), SessionError> {
        let mut engine = self.engine.clone();
        let (notice, result) = match &mut engine {
            Engine::Annotate(state) => {
                let action: AnnotationAction = parse_action(op, params)?;
                (None, to_value(&state.apply(&action)?))
            }
            Engine::Review(review) => {
                let action: ReviewAction = parse_action(op, params)?;
                (None, to_value(&review.apply(&action)?))
            }
            Engine::Tutorial(tutorial) => {
                let event: TutorialEvent = parse_action(op, params)?;
                let prompt = tutorial.current_step().map(|s| s.prompt.clone());
                let response = tutorial.tutorial_step(&event);
                let notice = match response {
                    TutorialResponse::Blocked => Some(Notice::Blocked {
                        prompt: prompt.unwrap_or_default(),
                    }),
                    TutorialResponse::Advanced { .. } => None,
                };
                (notice, to_value(&response))
            }
            Engine::Guided(guided) => {
                let action: AnnotationAction = parse_action(op, params)?;
                let response = guided.guided_step(&action)?;
                let notice = match &response {
                    GuidedResponse::Accepted { toast: Some(text) } => Some(Notice::Toast { text: text.clone() }),
                    GuidedResponse::Rejected { feedback } => Some(Notice::Feedback {
                        text: feedback.clone(),
                    }),
                    GuidedResponse::Accepted { toast: None } | GuidedResponse::Selected { .. } => None,
                };
                (notice, to_value(&response))
            }
        };
        Ok((engine, notice, result))
    }

    /// Applies one action; on success returns the engine result and the
    /// view delta.
    pub fn apply(
        &mut self,
        seq: u64,
        op: &str,
        params: &Map<String, Value>,
    ) -> Result<(Value, ViewDelta), SessionError> {
        if seq != self.version + 1 {
            return Err(SessionError::Conflict {
                expected: self.version + 1,
                got: seq,
            });
        }
        let before = self.view();
        let (engine, notice, result) = self.run(op, params)?;
        self.engine = engine;
        self.notice = notice;
        self.version = seq;
        self.log.push(LogEntry {
            seq,
            op: op.to_string(),
            params: params.clone(),
        });
        Ok((result, diff_views(&before, &self.view())))
    }

    pub fn handle(&mut self, request: &Request) -> Response {
        if request.session_id != self.id {
            let e = SessionError::WrongSession {
                expected: self.id.clone(),
                got: request.session_id.clone(),
            };
            return Response::rejected(request.seq, &e);
        }
        match self.apply(request.seq, &request.op, &request.params) {
            Ok((result, delta)) => Response {
                seq: request.seq,
                ok: true,
                error: None,
                result: Some(result),
                view_delta: Some(delta),
            },
            Err(e) => Response::rejected(request.seq, &e),
        }
    }

    /// Byte-stable JSON of the whole session.
    pub fn snapshot(&self) -> String {
        #[derive(Serialize)]
        struct SnapshotRef<'a> {
            format: &'static str,
            format_version: u32,
            session_id: &'a str,
            version: u64,
            notice: &'a Option<Notice>,
            log: &'a [LogEntry],
            engine: &'a Engine,
        }
        to_json(&SnapshotRef {
            format: SNAPSHOT_FORMAT,
            format_version: SNAPSHOT_FORMAT_VERSION,
            session_id: &self.id,
            version: self.version,
            notice: &self.notice,
            log: &self.log,
            engine: &self.engine,
        })
    }

    pub fn restore(text: &str) -> Result<Self, SessionError> {
        let header: Value = from_json(text).map_err(|e| SessionError::json("snapshot", e))?;
        let format = header.get("format").and_then(Value::as_str).unwrap_or_default();
        let version = header
            .get("format_version")
            .and_then(Value::as_u64)
            .unwrap_or(0);
        if format != SNAPSHOT_FORMAT || version != u64::from(SNAPSHOT_FORMAT_VERSION) {
            return Err(SessionError::SnapshotFormat {
                format: format.to_string(),
                version: u32::try_from(version).unwrap_or(u32::MAX),
            });
        }
        let snap: Snapshot = from_json_value(header).map_err(|e| SessionError::json("snapshot", e))?;
        if snap.log.len() as u64 != snap.version {
            return Err(SessionError::json(
                "snapshot",
                JsonError {
                    pointer: "/version".into(),
                    message: format!("version {} does not match {} logged actions", snap.version, snap.log.len()),
                },
            ));
        }
        Ok(Self {
            id: snap.session_id,
            version: snap.version,
            engine: snap.engine,
            notice: snap.notice,
            log: snap.log,
        })
    }

    /// The submission: CoNLL or JSON of a complete annotation, or the
    /// onboarding outcome (as JSON, complete or not).
    pub fn export(&self, format: ExportFormat) -> Result<String, SessionError> {
        let gated = |state: &AnnotationState, remaining: usize| -> Result<String, SessionError> {
            if remaining > 0 {
                return Err(SessionError::Incomplete { remaining });
            }
            Ok(match format {
                ExportFormat::Conll => to_conll_string(state)?,
                ExportFormat::Json => to_json(state),
            })
        };
        let unsupported = || SessionError::UnsupportedFormat {
            mode: self.mode(),
            format,
        };
        match &self.engine {
            Engine::Annotate(s) => gated(s, s.pending_len()),
            Engine::Review(r) => gated(r.reviewed(), r.remaining()),
            Engine::Tutorial(t) => match format {
                ExportFormat::Json => Ok(to_json(&t.outcome())),
                ExportFormat::Conll => Err(unsupported()),
            },
            Engine::Guided(g) => match format {
                ExportFormat::Json => Ok(to_json(g.outcome())),
                ExportFormat::Conll => Err(unsupported()),
            },
        }
    }
}

/// Rebuilds a session from its config and an action log.
pub fn replay(config: SessionConfig, log: &[LogEntry]) -> Result<Session, SessionError> {
    let mut session = Session::open(config)?;
    for entry in log {
        session
            .apply(entry.seq, &entry.op, &entry.params)
            .map_err(|e| SessionError::Replay {
                seq: entry.seq,
                source: Box::new(e),
            })?;
    }
    Ok(session)
}

pub fn replay_json(config: &str, log: &str) -> Result<Session, SessionError> {
    replay(SessionConfig::parse(config)?, &parse_log(log)?)
}

// ---------------------------------------------------------------------------
// Registry

/// Concurrent session host: sessions are independent, each one serialises
/// its own writers.
#[derive(Debug, Default)]
pub struct SessionRegistry {
    sessions: RwLock<BTreeMap<String, Arc<RwLock<Session>>>>,
}

impl SessionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn get(&self, id: &str) -> Result<Arc<RwLock<Session>>, SessionError> {
        self.sessions
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    fn insert(&self, session: Session) -> Result<ViewModel, SessionError> {
        let mut map = self.sessions.write().unwrap_or_else(PoisonError::into_inner);
        if map.contains_key(session.id()) {
            return Err(SessionError::DuplicateSession(session.id().to_string()));
        }
        let view = session.view();
        map.insert(session.id().to_string(), Arc::new(RwLock::new(session)));
        Ok(view)
    }

    pub fn open(&self, config: &str) -> Result<ViewModel, SessionError> {
        self.insert(Session::open_json(config)?)
    }

    pub fn restore(&self, snapshot: &str) -> Result<ViewModel, SessionError> {
        self.insert(Session::restore(snapshot)?)
    }

    pub fn close(&self, id: &str) -> Result<Session, SessionError> {
        let arc = self
            .sessions
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .remove(id)
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))?;
        Ok(match Arc::try_unwrap(arc) {
            Ok(lock) => lock.into_inner().unwrap_or_else(PoisonError::into_inner),
            Err(shared) => shared.read().unwrap_or_else(PoisonError::into_inner).clone(),
        })
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .keys()
            .cloned()
            .collect()
    }

    pub fn handle(&self, request: &Request) -> Response {
        match self.get(&request.session_id) {
            Ok(session) => session
                .write()
                .unwrap_or_else(PoisonError::into_inner)
                .handle(request),
            Err(e) => Response::rejected(request.seq, &e),
        }
    }

    /// Transport entry point: one JSON request in, one JSON response out.
    pub fn handle_json(&self, text: &str) -> String {
        let response = match from_json::<Request>(text) {
            Ok(request) => self.handle(&request),
            Err(e) => {
                let seq = serde_json::from_str::<Value>(text)
                    .ok()
                    .and_then(|v| v.get("seq").and_then(Value::as_u64))
                    .unwrap_or(0);
                Response::rejected(seq, &SessionError::json("request", e))
            }
        };
        serde_json::to_string(&response).expect("response serialisation cannot fail")
    }

    fn read<T>(&self, id: &str, f: impl FnOnce(&Session) -> T) -> Result<T, SessionError> {
        let session = self.get(id)?;
        let guard = session.read().unwrap_or_else(PoisonError::into_inner);
        Ok(f(&guard))
    }

    pub fn view(&self, id: &str) -> Result<ViewModel, SessionError> {
        self.read(id, Session::view)
    }

    pub fn snapshot(&self, id: &str) -> Result<String, SessionError> {
        self.read(id, Session::snapshot)
    }

    pub fn export(&self, id: &str, format: ExportFormat) -> Result<String, SessionError> {
        self.read(id, |s| s.export(format))?
    }
}
