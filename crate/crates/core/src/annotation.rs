//! First-round annotation: one mention at a time, assigned into a growing
//! bank of clusters.
//!
//! The state keeps two disjoint mention sets: the pending queue (sorted by
//! span order, its head is the current mention) and the assigned mentions,
//! partitioned into clusters. Every mutating operation validates before it
//! touches anything, so a rejected action leaves the state as it was.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{first_overlap, spans_overlap, Corpus, CorpusError, MentionSpan};
use crate::ids::{ClusterId, MentionId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnnotationError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no candidate mentions given")]
    NoMentions,
    #[error("input mentions {0} and {1} overlap")]
    OverlappingInput(MentionSpan, MentionSpan),
    #[error("span {span} overlaps existing mention {existing}")]
    Overlap {
        span: MentionSpan,
        existing: MentionSpan,
    },
    #[error("no current mention: every mention has been assigned")]
    NoCurrentMention,
    #[error("span {span} is not in the current mention's document {doc}")]
    DocumentMismatch { span: MentionSpan, doc: usize },
    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),
    #[error("unknown mention {0}")]
    UnknownMention(MentionId),
    #[error("mention {0} has not been assigned yet")]
    NotAssigned(MentionId),
    #[error("no cluster is selected")]
    NoSelection,
    #[error("annotation incomplete: {remaining} mention(s) still pending")]
    Incomplete { remaining: usize },
    #[error("inconsistent annotation state: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub id: MentionId,
    pub span: MentionSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: ClusterId,
    /// In order of assignment.
    pub mentions: Vec<MentionId>,
    /// Text of the earliest-assigned mention.
    pub label: String,
}

/// Where a mention should go: an existing cluster or a fresh one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Existing(ClusterId),
    New,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Existing(id) => id.fmt(f),
            Target::New => f.write_str("new"),
        }
    }
}

impl Serialize for Target {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == "new" {
            Ok(Target::New)
        } else {
            s.parse()
                .map(Target::Existing)
                .map_err(serde::de::Error::custom)
        }
    }
}

/// One annotator action, as it appears in action logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnnotationAction {
    Fix {
        span: MentionSpan,
    },
    Add {
        span: MentionSpan,
    },
    /// Assign the current mention to `cluster`, or to the selected cluster
    /// when omitted.
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

impl AnnotationAction {
    pub fn op_name(&self) -> &'static str {
        match self {
            AnnotationAction::Fix { .. } => "fix",
            AnnotationAction::Add { .. } => "add",
            AnnotationAction::Assign { .. } => "assign",
            AnnotationAction::AssignNew => "assign_new",
            AnnotationAction::Reassign { .. } => "reassign",
            AnnotationAction::Select { .. } => "select",
        }
    }
}

/// What a span fix did to the pending queue.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FixReport {
    pub noop: bool,
    /// Pending mentions absorbed by the new span.
    pub removed: Vec<MentionId>,
    /// Pending mention whose start was cut back to just after the new span.
    pub truncated: Option<MentionId>,
    /// Id given to the leftover tail of the old current span.
    pub remainder: Option<MentionId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionEffect {
    Fixed(FixReport),
    Added {
        mention: MentionId,
    },
    Assigned {
        mention: MentionId,
        cluster: ClusterId,
        created: bool,
    },
    Reassigned {
        mention: MentionId,
        from: ClusterId,
        to: ClusterId,
        deleted: bool,
    },
    Selected {
        cluster: ClusterId,
    },
    NoOp,
}

/// Anything that sits on a span-ordered stack.
pub(crate) trait Spanned {
    fn span(&self) -> MentionSpan;
    fn set_span(&mut self, span: MentionSpan);
}

impl Spanned for Mention {
    fn span(&self) -> MentionSpan {
        self.span
    }
    fn set_span(&mut self, span: MentionSpan) {
        self.span = span;
    }
}

pub(crate) struct StackEdit<T> {
    pub popped: Vec<T>,
    /// Original span of the top entry when it was cut.
    pub truncated: Option<MentionSpan>,
}

/// Consumes the stack against a committed span: pop every entry ending at or
/// before `span.end`, then if the new top still starts at or before
/// `span.end`, move its start to `span.end + 1`. The front of the deque is the
/// top of the stack.
pub(crate) fn pop_split_push<T: Spanned>(stack: &mut VecDeque<T>, span: MentionSpan) -> StackEdit<T> {
    let limit = span.end_ref();
    let mut popped = Vec::new();
    while stack.front().is_some_and(|top| top.span().end_ref() <= limit) {
        popped.extend(stack.pop_front());
    }
    let mut truncated = None;
    if let Some(top) = stack.front_mut() {
        let s = top.span();
        if s.start_ref() <= limit {
            // top.end > limit and top.start <= limit puts both in one document
            top.set_span(MentionSpan::new(s.doc, span.end + 1, s.end));
            truncated = Some(s);
        }
    }
    StackEdit { popped, truncated }
}

/// A corpus plus its candidate mentions: the input of an annotation task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub corpus: Corpus,
    pub mentions: Vec<MentionSpan>,
}

impl AnnotationTask {
    pub fn start(&self) -> Result<AnnotationState, AnnotationError> {
        AnnotationState::init(self.corpus.clone(), self.mentions.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub span: MentionSpan,
    pub cluster: ClusterId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotationState {
    corpus: Corpus,
    pending: VecDeque<Mention>,
    assigned: BTreeMap<MentionId, Assignment>,
    clusters: BTreeMap<ClusterId, Cluster>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected: Option<ClusterId>,
    next_mention: u32,
    next_cluster: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UncheckedState {
    corpus: Corpus,
    pending: VecDeque<Mention>,
    assigned: BTreeMap<MentionId, Assignment>,
    clusters: BTreeMap<ClusterId, Cluster>,
    #[serde(default)]
    selected: Option<ClusterId>,
    next_mention: u32,
    next_cluster: u32,
}

impl<'de> Deserialize<'de> for AnnotationState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = UncheckedState::deserialize(deserializer)?;
        let state = AnnotationState {
            corpus: raw.corpus,
            pending: raw.pending,
            assigned: raw.assigned,
            clusters: raw.clusters,
            selected: raw.selected,
            next_mention: raw.next_mention,
            next_cluster: raw.next_cluster,
        };
        state.check_invariants().map_err(serde::de::Error::custom)?;
        Ok(state)
    }
}

impl AnnotationState {
    /// A state with no mentions at all. Used as the reviewer's output and as
    /// the base for imported partitions.
    pub(crate) fn empty(corpus: Corpus) -> Self {
        Self {
            corpus,
            pending: VecDeque::new(),
            assigned: BTreeMap::new(),
            clusters: BTreeMap::new(),
            selected: None,
            next_mention: 0,
            next_cluster: 0,
        }
    }

    /// Sorts the candidate mentions and auto-assigns the first one to a new
    /// cluster.
    pub fn init(corpus: Corpus, spans: Vec<MentionSpan>) -> Result<Self, AnnotationError> {
        if spans.is_empty() {
            return Err(AnnotationError::NoMentions);
        }
        let mut spans = spans;
        for span in &spans {
            corpus.check_span(*span)?;
        }
        if let Some((a, b)) = first_overlap(&mut spans) {
            return Err(AnnotationError::OverlappingInput(a, b));
        }
        let mut state = Self::empty(corpus);
        for span in spans {
            let id = state.fresh_mention();
            state.pending.push_back(Mention { id, span });
        }
        state.assign_current(Target::New)?;
        Ok(state)
    }

    /// A complete state with the given clusters. Mentions are numbered in span
    /// order and clusters in order of their earliest mention.
    pub fn from_partition(
        corpus: Corpus,
        clusters: &[Vec<MentionSpan>],
    ) -> Result<Self, AnnotationError> {
        let mut all: Vec<(MentionSpan, usize)> = Vec::new();
        for (k, cluster) in clusters.iter().enumerate() {
            if cluster.is_empty() {
                return Err(AnnotationError::Corrupt(format!("cluster {k} is empty")));
            }
            for span in cluster {
                corpus.check_span(*span)?;
                all.push((*span, k));
            }
        }
        let mut spans: Vec<MentionSpan> = all.iter().map(|(s, _)| *s).collect();
        if let Some((a, b)) = first_overlap(&mut spans) {
            return Err(AnnotationError::OverlappingInput(a, b));
        }
        all.sort();
        let mut state = Self::empty(corpus);
        let mut made: BTreeMap<usize, ClusterId> = BTreeMap::new();
        for (span, k) in all {
            let target = made.get(&k).map_or(Target::New, |c| Target::Existing(*c));
            let (_, cluster) = state.commit(span, target)?;
            made.insert(k, cluster);
        }
        Ok(state)
    }

    fn fresh_mention(&mut self) -> MentionId {
        let id = MentionId(self.next_mention);
        self.next_mention += 1;
        id
    }

    fn fresh_cluster(&mut self) -> ClusterId {
        let id = ClusterId(self.next_cluster);
        self.next_cluster += 1;
        id
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn current(&self) -> Option<&Mention> {
        self.pending.front()
    }

    pub fn pending(&self) -> impl ExactSizeIterator<Item = &Mention> {
        self.pending.iter()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_complete(&self) -> bool {
        self.pending.is_empty()
    }

    /// Clusters in creation order.
    pub fn clusters(&self) -> impl ExactSizeIterator<Item = &Cluster> {
        self.clusters.values()
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.get(&id)
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn selected(&self) -> Option<ClusterId> {
        self.selected
    }

    pub fn assigned(&self) -> impl ExactSizeIterator<Item = (&MentionId, &Assignment)> {
        self.assigned.iter()
    }

    pub fn num_assigned(&self) -> usize {
        self.assigned.len()
    }

    pub fn cluster_of(&self, mention: MentionId) -> Option<ClusterId> {
        self.assigned.get(&mention).map(|a| a.cluster)
    }

    /// Span of any known mention, pending or assigned.
    pub fn mention_span(&self, mention: MentionId) -> Option<MentionSpan> {
        self.assigned
            .get(&mention)
            .map(|a| a.span)
            .or_else(|| self.pending.iter().find(|m| m.id == mention).map(|m| m.span))
    }

    pub fn mention_text(&self, mention: MentionId) -> Option<String> {
        self.mention_span(mention).map(|s| self.corpus.span_text(s))
    }

    /// The assigned mention covering `span` exactly, if any.
    pub fn mention_at(&self, span: MentionSpan) -> Option<MentionId> {
        self.assigned
            .iter()
            .find(|(_, a)| a.span == span)
            .map(|(id, _)| *id)
    }

    /// Cluster spans, clusters in creation order and mentions in assignment
    /// order.
    pub fn partition(&self) -> Vec<Vec<MentionSpan>> {
        self.clusters
            .values()
            .map(|c| c.mentions.iter().map(|m| self.assigned[m].span).collect())
            .collect()
    }

    /// Order-free view of the clustering, for comparing states.
    pub fn span_partition(&self) -> BTreeSet<BTreeSet<MentionSpan>> {
        self.partition()
            .into_iter()
            .map(|c| c.into_iter().collect())
            .collect()
    }

    fn assigned_overlap(&self, span: MentionSpan) -> Option<MentionSpan> {
        self.assigned
            .values()
            .map(|a| a.span)
            .find(|s| spans_overlap(s, &span))
    }

    fn pending_overlap(&self, span: MentionSpan) -> Option<MentionSpan> {
        self.pending
            .iter()
            .map(|m| m.span)
            .find(|s| spans_overlap(s, &span))
    }

    /// Replaces the current mention's span. Pending mentions swallowed by the
    /// new span are dropped and one that straddles its end is cut to start
    /// just after it. A tail left over from the old current span becomes a
    /// new pending mention.
    pub fn fix_span(&mut self, span: MentionSpan) -> Result<FixReport, AnnotationError> {
        let cursor = *self.current().ok_or(AnnotationError::NoCurrentMention)?;
        self.corpus.check_span(span)?;
        if span.doc != cursor.span.doc {
            return Err(AnnotationError::DocumentMismatch {
                span,
                doc: cursor.span.doc,
            });
        }
        if span == cursor.span {
            return Ok(FixReport {
                noop: true,
                ..FixReport::default()
            });
        }
        if let Some(existing) = self.assigned_overlap(span) {
            return Err(AnnotationError::Overlap { span, existing });
        }

        let edit = pop_split_push(&mut self.pending, span);
        let mut report = FixReport::default();
        for m in edit.popped {
            if m.id != cursor.id {
                report.removed.push(m.id);
            }
        }
        if edit.truncated.is_some() {
            let top = self.pending.front_mut().expect("truncation leaves a top");
            if top.id == cursor.id {
                let tail = MentionId(self.next_mention);
                self.next_mention += 1;
                self.pending.front_mut().expect("checked").id = tail;
                report.remainder = Some(tail);
            } else {
                report.truncated = Some(top.id);
            }
        } else if self.pending.front().is_some_and(|m| m.id == cursor.id) {
            // new span lies wholly before the old one: the old one is replaced
            self.pending.pop_front();
        }
        self.pending.push_front(Mention {
            id: cursor.id,
            span,
        });
        debug_assert_eq!(self.check_invariants(), Ok(()));
        Ok(report)
    }

    pub fn add_mention(&mut self, span: MentionSpan) -> Result<MentionId, AnnotationError> {
        self.corpus.check_span(span)?;
        if let Some(existing) = self.assigned_overlap(span).or_else(|| self.pending_overlap(span)) {
            return Err(AnnotationError::Overlap { span, existing });
        }
        let id = self.fresh_mention();
        let at = self.pending.partition_point(|m| m.span < span);
        self.pending.insert(at, Mention { id, span });
        Ok(id)
    }

    fn resolve(&self, target: Target) -> Result<(), AnnotationError> {
        match target {
            Target::Existing(id) if !self.clusters.contains_key(&id) => {
                Err(AnnotationError::UnknownCluster(id))
            }
            _ => Ok(()),
        }
    }

    fn place(&mut self, mention: MentionId, span: MentionSpan, target: Target) -> ClusterId {
        let cluster = match target {
            Target::Existing(id) => id,
            Target::New => {
                let id = self.fresh_cluster();
                self.clusters.insert(
                    id,
                    Cluster {
                        id,
                        mentions: Vec::new(),
                        label: self.corpus.span_text(span),
                    },
                );
                id
            }
        };
        self.clusters
            .get_mut(&cluster)
            .expect("target resolved")
            .mentions
            .push(mention);
        self.assigned.insert(mention, Assignment { span, cluster });
        cluster
    }

    /// Assigns the current mention and advances to the next pending one.
    pub fn assign_current(&mut self, target: Target) -> Result<ClusterId, AnnotationError> {
        if self.pending.is_empty() {
            return Err(AnnotationError::NoCurrentMention);
        }
        self.resolve(target)?;
        let m = self.pending.pop_front().expect("checked non-empty");
        Ok(self.place(m.id, m.span, target))
    }

    /// Adds an already-decided mention directly to the assigned set.
    pub(crate) fn commit(
        &mut self,
        span: MentionSpan,
        target: Target,
    ) -> Result<(MentionId, ClusterId), AnnotationError> {
        self.corpus.check_span(span)?;
        self.resolve(target)?;
        if let Some(existing) = self.assigned_overlap(span).or_else(|| self.pending_overlap(span)) {
            return Err(AnnotationError::Overlap { span, existing });
        }
        let id = self.fresh_mention();
        let cluster = self.place(id, span, target);
        Ok((id, cluster))
    }

    /// Moves an assigned mention to another cluster. A cluster left empty is
    /// removed from the bank; one that lost its first mention is relabeled.
    pub fn reassign(
        &mut self,
        mention: MentionId,
        target: Target,
    ) -> Result<ActionEffect, AnnotationError> {
        let Some(assignment) = self.assigned.get(&mention).cloned() else {
            return Err(if self.pending.iter().any(|m| m.id == mention) {
                AnnotationError::NotAssigned(mention)
            } else {
                AnnotationError::UnknownMention(mention)
            });
        };
        self.resolve(target)?;
        let from = assignment.cluster;
        if target == Target::Existing(from) {
            return Ok(ActionEffect::NoOp);
        }

        let source = self.clusters.get_mut(&from).expect("assigned cluster exists");
        source.mentions.retain(|m| *m != mention);
        let deleted = source.mentions.is_empty();
        if deleted {
            self.clusters.remove(&from);
            if self.selected == Some(from) {
                self.selected = None;
            }
        } else {
            let first = source.mentions[0];
            let label = self.corpus.span_text(self.assigned[&first].span);
            self.clusters.get_mut(&from).expect("present").label = label;
        }
        let to = self.place(mention, assignment.span, target);
        debug_assert_eq!(self.check_invariants(), Ok(()));
        Ok(ActionEffect::Reassigned {
            mention,
            from,
            to,
            deleted,
        })
    }

    pub fn select_cluster(&mut self, cluster: ClusterId) -> Result<(), AnnotationError> {
        self.resolve(Target::Existing(cluster))?;
        self.selected = Some(cluster);
        Ok(())
    }

    pub fn apply(&mut self, action: &AnnotationAction) -> Result<ActionEffect, AnnotationError> {
        match *action {
            AnnotationAction::Fix { span } => self.fix_span(span).map(ActionEffect::Fixed),
            AnnotationAction::Add { span } => {
                self.add_mention(span).map(|mention| ActionEffect::Added { mention })
            }
            AnnotationAction::Assign { cluster } => {
                let cluster = cluster.or(self.selected).ok_or(AnnotationError::NoSelection)?;
                self.assign_to(Target::Existing(cluster))
            }
            AnnotationAction::AssignNew => self.assign_to(Target::New),
            AnnotationAction::Reassign { mention, cluster } => self.reassign(mention, cluster),
            AnnotationAction::Select { cluster } => self
                .select_cluster(cluster)
                .map(|()| ActionEffect::Selected { cluster }),
        }
    }

    fn assign_to(&mut self, target: Target) -> Result<ActionEffect, AnnotationError> {
        let mention = self.current().ok_or(AnnotationError::NoCurrentMention)?.id;
        let cluster = self.assign_current(target)?;
        Ok(ActionEffect::Assigned {
            mention,
            cluster,
            created: target == Target::New,
        })
    }

    /// Submission gate for exports.
    pub fn ensure_complete(&self) -> Result<(), AnnotationError> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(AnnotationError::Incomplete {
                remaining: self.pending.len(),
            })
        }
    }

    /// Full structural check. Used after deserialisation and in debug builds
    /// after every mutation.
    pub fn check_invariants(&self) -> Result<(), AnnotationError> {
        let bad = |msg: String| Err(AnnotationError::Corrupt(msg));
        let mut spans: Vec<MentionSpan> = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, m) in self.pending.iter().enumerate() {
            self.corpus.check_span(m.span)?;
            if i > 0 && self.pending[i - 1].span >= m.span {
                return bad(format!("pending queue not sorted at {}", m.id));
            }
            if !ids.insert(m.id) || m.id.0 >= self.next_mention {
                return bad(format!("bad pending mention id {}", m.id));
            }
            spans.push(m.span);
        }
        for (id, a) in &self.assigned {
            self.corpus.check_span(a.span)?;
            if !ids.insert(*id) || id.0 >= self.next_mention {
                return bad(format!("bad assigned mention id {id}"));
            }
            let Some(cluster) = self.clusters.get(&a.cluster) else {
                return bad(format!("{id} points at missing cluster {}", a.cluster));
            };
            if !cluster.mentions.contains(id) {
                return bad(format!("{id} missing from cluster {}", a.cluster));
            }
            spans.push(a.span);
        }
        if let Some((a, b)) = first_overlap(&mut spans) {
            return bad(format!("mentions {a} and {b} overlap"));
        }
        let mut members = 0;
        for (cid, cluster) in &self.clusters {
            if cluster.id != *cid || cid.0 >= self.next_cluster {
                return bad(format!("bad cluster id {cid}"));
            }
            let Some(first) = cluster.mentions.first() else {
                return bad(format!("cluster {cid} is empty"));
            };
            for m in &cluster.mentions {
                if self.assigned.get(m).map(|a| a.cluster) != Some(*cid) {
                    return bad(format!("cluster {cid} lists {m} which is not assigned to it"));
                }
            }
            members += cluster.mentions.len();
            if cluster.label != self.corpus.span_text(self.assigned[first].span) {
                return bad(format!("cluster {cid} label does not match its first mention"));
            }
        }
        if members != self.assigned.len() {
            return bad("cluster membership lists contain duplicates".into());
        }
        if let Some(sel) = self.selected {
            if !self.clusters.contains_key(&sel) {
                return bad(format!("selected cluster {sel} does not exist"));
            }
        }
        Ok(())
    }
}
