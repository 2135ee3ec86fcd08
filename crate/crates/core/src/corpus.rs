//! Documents, tokens and mention spans.
//!
//! Every span in the suite indexes into a [`Corpus`]. Documents are stored in
//! their configured presentation order, so a span's `doc` ordinal is already
//! the position the annotator sees it in.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("corpus has no documents")]
    NoDocuments,
    #[error("document {0:?} has no tokens")]
    EmptyDocument(String),
    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),
    #[error("token {0} has empty text")]
    EmptyToken(TokenRef),
    #[error("document order is not a permutation of 0..{0}")]
    BadOrder(usize),
    #[error("span {0} is out of range")]
    SpanOutOfRange(MentionSpan),
    #[error("token {0} has no part-of-speech tag")]
    MissingPos(TokenRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
}

impl Token {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            pos: None,
        }
    }

    pub fn tagged(text: impl Into<String>, pos: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            pos: Some(pos.into()),
        }
    }
}

/// Position of a single token. Ordered by document, then token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenRef {
    pub doc: usize,
    pub token: usize,
}

impl TokenRef {
    pub const fn new(doc: usize, token: usize) -> Self {
        Self { doc, token }
    }
}

impl fmt::Display for TokenRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.doc, self.token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        Self {
            id: id.into(),
            tokens,
        }
    }

    /// Builds an untagged document from whitespace-separated text.
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        Self::new(id, text.split_whitespace().map(Token::new).collect())
    }
}

/// On-disk corpus layout. `order`, when present, permutes `documents`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusFile {
    pub documents: Vec<Document>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

/// Ordered, validated multi-document token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CorpusFile", into = "CorpusFile")]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        Self::with_order(documents, None)
    }

    /// Validates the documents and arranges them in `order` (indices into
    /// `documents`), or as given when no order is supplied.
    pub fn with_order(
        documents: Vec<Document>,
        order: Option<Vec<usize>>,
    ) -> Result<Self, CorpusError> {
        if documents.is_empty() {
            return Err(CorpusError::NoDocuments);
        }
        let documents = match order {
            None => documents,
            Some(order) => {
                let n = documents.len();
                let distinct: HashSet<usize> = order.iter().copied().collect();
                if order.len() != n || distinct.len() != n || order.iter().any(|&i| i >= n) {
                    return Err(CorpusError::BadOrder(n));
                }
                let mut slots: Vec<Option<Document>> = documents.into_iter().map(Some).collect();
                order
                    .iter()
                    .map(|&i| slots[i].take().expect("order checked as permutation"))
                    .collect()
            }
        };
        let mut ids = HashSet::new();
        for (d, doc) in documents.iter().enumerate() {
            if !ids.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateDocument(doc.id.clone()));
            }
            if doc.tokens.is_empty() {
                return Err(CorpusError::EmptyDocument(doc.id.clone()));
            }
            if let Some(t) = doc.tokens.iter().position(|t| t.text.is_empty()) {
                return Err(CorpusError::EmptyToken(TokenRef::new(d, t)));
            }
        }
        Ok(Self { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn doc_len(&self, doc: usize) -> Option<usize> {
        self.documents.get(doc).map(|d| d.tokens.len())
    }

    pub fn num_tokens(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }

    pub fn token(&self, at: TokenRef) -> Option<&Token> {
        self.documents.get(at.doc)?.tokens.get(at.token)
    }

    /// All token positions in corpus order.
    pub fn token_refs(&self) -> impl Iterator<Item = TokenRef> + '_ {
        self.documents
            .iter()
            .enumerate()
            .flat_map(|(d, doc)| (0..doc.tokens.len()).map(move |t| TokenRef::new(d, t)))
    }

    pub fn check_span(&self, span: MentionSpan) -> Result<(), CorpusError> {
        match self.doc_len(span.doc) {
            Some(len) if span.start <= span.end && span.end < len => Ok(()),
            _ => Err(CorpusError::SpanOutOfRange(span)),
        }
    }

    /// Space-joined token text of a span. Panics if the span is out of range.
    pub fn span_text(&self, span: MentionSpan) -> String {
        let tokens = &self.documents[span.doc].tokens[span.start..=span.end];
        let mut out = String::new();
        for (i, tok) in tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&tok.text);
        }
        out
    }
}

impl TryFrom<CorpusFile> for Corpus {
    type Error = CorpusError;

    fn try_from(file: CorpusFile) -> Result<Self, Self::Error> {
        Corpus::with_order(file.documents, file.order)
    }
}

impl From<Corpus> for CorpusFile {
    fn from(corpus: Corpus) -> Self {
        CorpusFile {
            documents: corpus.documents,
            order: None,
        }
    }
}

/// Contiguous, inclusive token range inside one document.
///
/// The derived ordering is lexicographic on `(doc, start, end)`, which is the
/// corpus-global mention order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MentionSpan {
    pub doc: usize,
    pub start: usize,
    pub end: usize,
}

impl MentionSpan {
    pub const fn new(doc: usize, start: usize, end: usize) -> Self {
        Self { doc, start, end }
    }

    pub const fn single(doc: usize, token: usize) -> Self {
        Self::new(doc, token, token)
    }

    pub fn start_ref(&self) -> TokenRef {
        TokenRef::new(self.doc, self.start)
    }

    pub fn end_ref(&self) -> TokenRef {
        TokenRef::new(self.doc, self.end)
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, at: TokenRef) -> bool {
        at.doc == self.doc && self.start <= at.token && at.token <= self.end
    }

    pub fn tokens(&self) -> impl Iterator<Item = TokenRef> {
        let doc = self.doc;
        (self.start..=self.end).map(move |t| TokenRef::new(doc, t))
    }
}

impl fmt::Display for MentionSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(doc {}, {}..{})", self.doc, self.start, self.end)
    }
}

pub fn span_order(a: &MentionSpan, b: &MentionSpan) -> Ordering {
    a.cmp(b)
}

pub fn spans_overlap(a: &MentionSpan, b: &MentionSpan) -> bool {
    a.doc == b.doc && a.start <= b.end && b.start <= a.end
}

/// Sorts `spans` into mention order and returns the first overlapping pair,
/// if any. After sorting, an overlap anywhere implies an overlap between
/// neighbours, so a single pass suffices.
pub fn first_overlap(spans: &mut [MentionSpan]) -> Option<(MentionSpan, MentionSpan)> {
    spans.sort();
    spans
        .windows(2)
        .find(|w| spans_overlap(&w[0], &w[1]))
        .map(|w| (w[0], w[1]))
}

/// The mention recipe: one single-token mention per token whose tag is in
/// `recipe`. Every token must be tagged.
pub fn extract_mentions(
    corpus: &Corpus,
    recipe: &BTreeSet<String>,
) -> Result<Vec<MentionSpan>, CorpusError> {
    let mut out = Vec::new();
    for at in corpus.token_refs() {
        let token = corpus.token(at).expect("token_refs yields valid refs");
        let pos = token.pos.as_deref().ok_or(CorpusError::MissingPos(at))?;
        if recipe.contains(pos) {
            out.push(MentionSpan::single(at.doc, at.token));
        }
    }
    Ok(out)
}

/// Tags used by the default recipe: common nouns, proper nouns, pronouns and
/// verbs (Universal Dependencies names).
pub const DEFAULT_RECIPE: [&str; 4] = ["NOUN", "PROPN", "PRON", "VERB"];

pub fn default_recipe() -> BTreeSet<String> {
    DEFAULT_RECIPE.iter().map(|s| s.to_string()).collect()
}
