//! Coreference annotation: corpus model, cluster-based annotation engine,
//! review of prior annotations, onboarding scripts, CoNLL/JSON interchange,
//! evaluation metrics and a session protocol tying them together.

pub mod annotation;
pub mod conll;
pub mod corpus;
pub mod ids;
pub mod json;
pub mod metrics;
pub mod onboarding;
pub mod review;
pub mod session;

pub use annotation::{
    ActionEffect, AnnotationAction, AnnotationError, AnnotationState, AnnotationTask, Assignment,
    Cluster, FixReport, Mention, Target,
};
pub use conll::{export_conll, import_conll, parse_conll, to_conll_string, ConllError};
pub use corpus::{
    default_recipe, extract_mentions, first_overlap, span_order, spans_overlap, Corpus, CorpusError,
    Document, MentionSpan, Token, TokenRef,
};
pub use ids::{ClusterId, MentionId};
pub use json::{export_json, from_json, import_json, to_json, JsonError};
pub use metrics::{b_cubed, ceaf_e, conll_average, evaluate, muc, round_half_up, MetricReport, MetricsError, Partition, Prf};
pub use onboarding::{
    GuidedScript, GuidedSession, OnboardingError, OnboardingOutcome, ScriptIssue, TutorialScript,
    TutorialSession,
};
pub use review::{
    create_antecedent_mapping, identity_review, run_review, AntecedentMap, ClusterDecision, ReviewError,
    ReviewOutcome, ReviewSession, ReviewStep, SpanDecision, TraceRow,
};
pub use session::{
    replay, ExportFormat, LogEntry, Mode, Request, Response, Session, SessionConfig, SessionError,
    SessionRegistry, ViewDelta, ViewModel,
};
