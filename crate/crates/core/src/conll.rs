//! CoNLL coreference files.
//!
//! Written layout, one token per row, tab separated:
//!
//! ```text
//! #begin document (<doc_id>); part 000
//! <doc_id>  <part>  <token index>  <word>  <coref>
//! ...
//!
//! #end document
//! ```
//!
//! The coref column holds `-` or `|`-joined marks `(n)`, `(n` and `n)`.
//! Reading is more lenient: extra middle columns are ignored (the word is the
//! fourth column, the coref field the last), and blank lines inside a
//! document are sentence breaks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::annotation::{AnnotationError, AnnotationState};
use crate::corpus::{Corpus, CorpusError, Document, MentionSpan, Token, TokenRef};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("no documents")]
    NoDocuments,
    #[error("no tokens")]
    NoTokens,
    #[error("malformed document header")]
    BadHeader,
    #[error("token row outside a document")]
    OutsideDocument,
    #[error("document is not terminated by #end document")]
    Unterminated,
    #[error("expected at least 5 columns, found {0}")]
    MissingColumns(usize),
    #[error("malformed coreference mark {0:?}")]
    BadMark(String),
    #[error("closing mark for cluster {0} without an open mention")]
    UnbalancedClose(String),
    #[error("mention of cluster {0} is never closed")]
    Unclosed(String),
    #[error("cluster {0} opened twice on one row")]
    DuplicateOpen(String),
    #[error("overlapping mentions")]
    OverlappingMentions,
    #[error("duplicate document {0:?}")]
    DuplicateDocument(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConllError {
    #[error("{kind} at line {line}")]
    Parse { line: usize, kind: ParseErrorKind },
    #[error("cannot export: annotation incomplete, {remaining} mention(s) still pending")]
    Incomplete { remaining: usize },
    #[error("token {0} contains a tab or line break and cannot be written as a CoNLL word")]
    Unrepresentable(TokenRef),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

fn parse_err(line: usize, kind: ParseErrorKind) -> ConllError {
    ConllError::Parse { line, kind }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConllRow {
    pub token_index: usize,
    pub word: String,
    pub coref: String,
    /// 1-based source line; 0 for rows not read from a file.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConllDocument {
    pub doc_id: String,
    pub part: u32,
    pub rows: Vec<ConllRow>,
}

impl ConllDocument {
    pub fn write_to(&self, out: &mut String) {
        let _ = writeln!(out, "#begin document ({}); part {:03}", self.doc_id, self.part);
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                self.doc_id, self.part, row.token_index, row.word, row.coref
            );
        }
        out.push('\n');
        out.push_str("#end document\n");
    }
}

/// One document per corpus document, in corpus order. Cluster numbers are
/// dense and follow cluster creation order.
pub fn export_conll(state: &AnnotationState) -> Result<Vec<ConllDocument>, ConllError> {
    if !state.is_complete() {
        return Err(ConllError::Incomplete {
            remaining: state.pending_len(),
        });
    }
    let corpus = state.corpus();
    let mut marks: BTreeMap<TokenRef, Vec<String>> = BTreeMap::new();
    for (number, spans) in state.partition().iter().enumerate() {
        for span in spans {
            if span.start == span.end {
                marks.entry(span.start_ref()).or_default().push(format!("({number})"));
            } else {
                marks.entry(span.start_ref()).or_default().push(format!("({number}"));
                marks.entry(span.end_ref()).or_default().push(format!("{number})"));
            }
        }
    }
    let mut docs = Vec::with_capacity(corpus.num_documents());
    for (d, doc) in corpus.documents().iter().enumerate() {
        let mut rows = Vec::with_capacity(doc.tokens.len());
        for (t, token) in doc.tokens.iter().enumerate() {
            if token.text.contains(['\t', '\n', '\r']) {
                return Err(ConllError::Unrepresentable(TokenRef::new(d, t)));
            }
            let coref = marks
                .get(&TokenRef::new(d, t))
                .map_or_else(|| "-".to_string(), |m| m.join("|"));
            rows.push(ConllRow {
                token_index: t,
                word: token.text.clone(),
                coref,
                line: 0,
            });
        }
        docs.push(ConllDocument {
            doc_id: doc.id.clone(),
            part: 0,
            rows,
        });
    }
    Ok(docs)
}

pub fn write_conll(docs: &[ConllDocument]) -> String {
    let mut out = String::new();
    for doc in docs {
        doc.write_to(&mut out);
    }
    out
}

pub fn to_conll_string(state: &AnnotationState) -> Result<String, ConllError> {
    export_conll(state).map(|docs| write_conll(&docs))
}

fn parse_header(line: &str) -> Option<(String, u32)> {
    let rest = line.strip_prefix("#begin document")?.trim();
    let (name, part) = match rest.split_once(';') {
        Some((name, part)) => {
            let part = part.trim().strip_prefix("part")?.trim().parse().ok()?;
            (name.trim(), part)
        }
        None => (rest, 0),
    };
    let name = name
        .strip_prefix('(')
        .and_then(|n| n.strip_suffix(')'))
        .unwrap_or(name);
    (!name.is_empty()).then(|| (name.to_string(), part))
}

/// Splits the framing and rows of a CoNLL file without interpreting the
/// coreference column.
pub fn parse_conll(text: &str) -> Result<Vec<ConllDocument>, ConllError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut docs: Vec<ConllDocument> = Vec::new();
    let mut open: Option<(ConllDocument, usize)> = None;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.trim_end_matches('\r');
        if line.starts_with("#begin document") {
            if let Some((_, start)) = open {
                return Err(parse_err(start, ParseErrorKind::Unterminated));
            }
            let (doc_id, part) =
                parse_header(line).ok_or_else(|| parse_err(line_no, ParseErrorKind::BadHeader))?;
            open = Some((
                ConllDocument {
                    doc_id,
                    part,
                    rows: Vec::new(),
                },
                line_no,
            ));
        } else if line.starts_with("#end document") {
            let (doc, start) = open
                .take()
                .ok_or_else(|| parse_err(line_no, ParseErrorKind::OutsideDocument))?;
            if doc.rows.is_empty() {
                return Err(parse_err(start, ParseErrorKind::NoTokens));
            }
            docs.push(doc);
        } else if line.trim().is_empty() || line.starts_with('#') {
            continue;
        } else {
            let Some((doc, _)) = open.as_mut() else {
                return Err(parse_err(line_no, ParseErrorKind::OutsideDocument));
            };
            let cols: Vec<&str> = if line.contains('\t') {
                line.split('\t').collect()
            } else {
                line.split_whitespace().collect()
            };
            if cols.len() < 5 {
                return Err(parse_err(line_no, ParseErrorKind::MissingColumns(cols.len())));
            }
            let token_index = doc.rows.len();
            doc.rows.push(ConllRow {
                token_index,
                word: cols[3].to_string(),
                coref: cols[cols.len() - 1].trim().to_string(),
                line: line_no,
            });
        }
    }
    if let Some((_, start)) = open {
        return Err(parse_err(start, ParseErrorKind::Unterminated));
    }
    if docs.is_empty() {
        return Err(parse_err(last_line.max(1), ParseErrorKind::NoDocuments));
    }
    Ok(docs)
}

enum Mark<'a> {
    Single(&'a str),
    Open(&'a str),
    Close(&'a str),
}

fn parse_mark(item: &str) -> Option<Mark<'_>> {
    let valid = |s: &str| !s.is_empty() && !s.contains(['(', ')']);
    if let Some(inner) = item.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        valid(inner).then_some(Mark::Single(inner))
    } else if let Some(inner) = item.strip_prefix('(') {
        valid(inner).then_some(Mark::Open(inner))
    } else if let Some(inner) = item.strip_suffix(')') {
        valid(inner).then_some(Mark::Close(inner))
    } else {
        None
    }
}

/// Reads a CoNLL file into a corpus and a complete annotation whose clusters
/// are the file's coreference chains. Nested or overlapping mentions are
/// rejected, not flattened.
pub fn import_conll(text: &str) -> Result<(Corpus, AnnotationState), ConllError> {
    let docs = parse_conll(text)?;

    let mut documents = Vec::with_capacity(docs.len());
    let mut chains: BTreeMap<String, Vec<MentionSpan>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for (d, doc) in docs.iter().enumerate() {
        let id = if doc.part == 0 {
            doc.doc_id.clone()
        } else {
            format!("{}#{}", doc.doc_id, doc.part)
        };
        if !seen.insert(id.clone()) {
            return Err(parse_err(doc.rows[0].line, ParseErrorKind::DuplicateDocument(id)));
        }
        let mut open: Option<(String, usize, usize)> = None;
        let mut covered_to: Option<usize> = None;
        for (t, row) in doc.rows.iter().enumerate() {
            let line = row.line;
            if row.coref == "-" {
                continue;
            }
            for item in row.coref.split('|') {
                let mark = parse_mark(item)
                    .ok_or_else(|| parse_err(line, ParseErrorKind::BadMark(item.to_string())))?;
                match mark {
                    Mark::Single(id) | Mark::Open(id) => {
                        if let Some((open_id, start, _)) = &open {
                            let kind = if open_id == id && *start == t {
                                ParseErrorKind::DuplicateOpen(id.to_string())
                            } else {
                                ParseErrorKind::OverlappingMentions
                            };
                            return Err(parse_err(line, kind));
                        }
                        if covered_to == Some(t) {
                            return Err(parse_err(line, ParseErrorKind::OverlappingMentions));
                        }
                        if let Mark::Single(id) = mark {
                            chains.entry(id.to_string()).or_default().push(MentionSpan::single(d, t));
                            covered_to = Some(t);
                        } else {
                            open = Some((id.to_string(), t, line));
                        }
                    }
                    Mark::Close(id) => match open.take() {
                        Some((open_id, start, _)) if open_id == id => {
                            chains.entry(id.to_string()).or_default().push(MentionSpan::new(d, start, t));
                            covered_to = Some(t);
                        }
                        _ => return Err(parse_err(line, ParseErrorKind::UnbalancedClose(id.to_string()))),
                    },
                }
            }
        }
        if let Some((id, _, line)) = open {
            return Err(parse_err(line, ParseErrorKind::Unclosed(id)));
        }
        documents.push(Document::new(
            id,
            doc.rows.iter().map(|r| Token::new(r.word.clone())).collect(),
        ));
    }
    let corpus = Corpus::new(documents)?;
    let clusters: Vec<Vec<MentionSpan>> = chains.into_values().collect();
    let state = AnnotationState::from_partition(corpus.clone(), &clusters)?;
    Ok((corpus, state))
}
