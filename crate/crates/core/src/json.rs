//! JSON interchange with path-aware errors.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::annotation::AnnotationState;

/// A JSON document that failed to parse or failed schema/invariant checks.
/// `pointer` locates the offending value (`""` is the document root).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message} (at {})", display_pointer(.pointer))]
pub struct JsonError {
    pub pointer: String,
    pub message: String,
}

fn display_pointer(p: &str) -> &str {
    if p.is_empty() {
        "/"
    } else {
        p
    }
}

fn escape_segment(s: &str) -> String {
    s.replace('~', "~0").replace('/', "~1")
}

fn to_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => {
                out.push('/');
                out.push_str(&index.to_string());
            }
            Segment::Map { key } => {
                out.push('/');
                out.push_str(&escape_segment(key));
            }
            Segment::Enum { .. } | Segment::Unknown => {}
        }
    }
    out
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, JsonError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| JsonError {
        pointer: to_pointer(e.path()),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| JsonError {
        pointer: String::new(),
        message: e.to_string(),
    })?;
    Ok(value)
}

pub fn from_json_value<T: DeserializeOwned>(value: serde_json::Value) -> Result<T, JsonError> {
    serde_path_to_error::deserialize(value).map_err(|e| JsonError {
        pointer: to_pointer(e.path()),
        message: e.inner().to_string(),
    })
}

/// Pretty, deterministic rendering with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory serialisation cannot fail");
    s.push('\n');
    s
}

/// Lossless session-state export, pending queue included.
pub fn export_json(state: &AnnotationState) -> String {
    to_json(state)
}

pub fn import_json(text: &str) -> Result<AnnotationState, JsonError> {
    from_json(text)
}

/// Decodes JSON that was embedded in an HTML attribute (`&quot;` and
/// friends, plus decimal and hex character references).
pub fn decode_html_attribute(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let decoded = rest.find(';').filter(|&end| end <= 10).and_then(|end| {
            let entity = &rest[1..end];
            let ch = match entity {
                "quot" => Some('"'),
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "apos" => Some('\''),
                _ => {
                    let code = if let Some(hex) = entity.strip_prefix("#x").or_else(|| entity.strip_prefix("#X")) {
                        u32::from_str_radix(hex, 16).ok()
                    } else {
                        entity.strip_prefix('#').and_then(|d| d.parse().ok())
                    };
                    code.and_then(char::from_u32)
                }
            };
            ch.map(|c| (c, end))
        });
        match decoded {
            Some((c, end)) => {
                out.push(c);
                rest = &rest[end + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document, MentionSpan};

    #[test]
    fn pending_mentions_survive_round_trip() {
        let corpus = Corpus::new(vec![Document::from_text("d", "a b c")]).unwrap();
        let st = AnnotationState::init(corpus, vec![MentionSpan::single(0, 0), MentionSpan::single(0, 2)]).unwrap();
        let text = export_json(&st);
        assert!(text.contains("\"pending\""));
        let back = import_json(&text).unwrap();
        assert_eq!(back, st);
        assert_eq!(back.pending_len(), 1);
    }

    #[test]
    fn type_errors_name_their_path() {
        let json = r#"{"documents":[{"id":"a","tokens":[{"text":"x"},{"text":7}]}]}"#;
        let err = from_json::<Corpus>(json).unwrap_err();
        assert_eq!(err.pointer, "/documents/0/tokens/1/text");
        assert!(err.to_string().contains("/documents/0/tokens/1/text"));
    }

    #[test]
    fn truncated_input_is_an_error() {
        assert!(from_json::<Corpus>(r#"{"documents":[{"id":"a","#).is_err());
        assert!(from_json::<Corpus>(r#"{"documents":[{"id":"a","tokens":[{"text":"x"}]}]} trailing"#).is_err());
    }

    #[test]
    fn html_attribute_decoding() {
        assert_eq!(
            decode_html_attribute("{&quot;a&quot;:&quot;x &amp; y &#233;&#x41;&quot;}"),
            r#"{"a":"x & y éA"}"#
        );
        assert_eq!(decode_html_attribute("R&D &bogus; & more"), "R&D &bogus; & more");
    }
}
