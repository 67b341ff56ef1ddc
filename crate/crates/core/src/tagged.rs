//! Inline `<error ...>` tag format used for LLM annotation.
//!
//! Grammar (bit-exact): `<error>` or `<error class="NAME">` opens a span,
//! `</error>` closes it. Tags never nest. Any other tag is literal text.

use serde::{Deserialize, Serialize};

use crate::model::{parse_label, HallucinationClass, SpanAnnotation};

/// Whether span classes are carried or ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassMode {
    ClassAware,
    ClassAgnostic,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TaggedError {
    /// The raw input is preserved for audit.
    #[error("malformed tag at char {position}: {reason}")]
    MalformedTag {
        position: usize,
        reason: String,
        raw: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTagged {
    pub plain: String,
    pub spans: Vec<SpanAnnotation>,
    /// Non-fatal findings, e.g. unknown class names.
    pub warnings: Vec<String>,
}

const OPEN_BARE: &str = "<error>";
const OPEN_CLASS: &str = "<error class=\"";
const CLOSE: &str = "</error>";

/// Strip well-formed error tags from `text`, returning the plain text and
/// the spans that covered the tagged regions.
///
/// In class-aware mode a tag with a missing or unknown class parses as
/// `unsupported_other` with a warning; in class-agnostic mode all class
/// attributes are ignored and spans carry no class.
pub fn parse_tagged(text: &str, mode: ClassMode) -> Result<ParsedTagged, TaggedError> {
    let mut plain = String::with_capacity(text.len());
    let mut spans = Vec::new();
    let mut warnings = Vec::new();
    let mut chars_out = 0usize;
    let mut open: Option<(usize, Option<HallucinationClass>)> = None;
    let mut rest = text;
    let malformed = |rest: &str, reason: &str| TaggedError::MalformedTag {
        position: text.chars().count() - rest.chars().count(),
        reason: reason.to_string(),
        raw: text.to_string(),
    };

    while !rest.is_empty() {
        if let Some(stripped) = rest.strip_prefix(CLOSE) {
            match open.take() {
                Some((start, class)) => {
                    spans.push(SpanAnnotation::new(start, chars_out, class));
                    rest = stripped;
                }
                None => return Err(malformed(rest, "closing tag without opening tag")),
            }
            continue;
        }
        if rest.starts_with("<error") {
            if open.is_some() {
                return Err(malformed(rest, "nested error tag"));
            }
            if let Some(stripped) = rest.strip_prefix(OPEN_BARE) {
                let class = match mode {
                    ClassMode::ClassAware => {
                        warnings.push(format!(
                            "tag without class at char {chars_out}, defaulting to unsupported_other"
                        ));
                        Some(HallucinationClass::UnsupportedOther)
                    }
                    ClassMode::ClassAgnostic => None,
                };
                open = Some((chars_out, class));
                rest = stripped;
                continue;
            }
            if let Some(stripped) = rest.strip_prefix(OPEN_CLASS) {
                let Some(quote) = stripped.find('"') else {
                    return Err(malformed(rest, "unterminated class attribute"));
                };
                let name = &stripped[..quote];
                let after = &stripped[quote + 1..];
                let Some(after) = after.strip_prefix('>') else {
                    return Err(malformed(rest, "expected '>' after class attribute"));
                };
                let class = match mode {
                    ClassMode::ClassAgnostic => None,
                    ClassMode::ClassAware => Some(parse_label(name).unwrap_or_else(|_| {
                        warnings.push(format!(
                            "unknown class {name:?} at char {chars_out}, defaulting to unsupported_other"
                        ));
                        HallucinationClass::UnsupportedOther
                    })),
                };
                open = Some((chars_out, class));
                rest = after;
                continue;
            }
            return Err(malformed(rest, "unrecognized attribute on error tag"));
        }
        let c = rest.chars().next().expect("non-empty");
        plain.push(c);
        chars_out += 1;
        rest = &rest[c.len_utf8()..];
    }
    if open.is_some() {
        return Err(malformed("", "unclosed error tag"));
    }
    Ok(ParsedTagged {
        plain,
        spans,
        warnings,
    })
}

/// Inverse of `parse_tagged`: insert error tags around `spans` in `plain`.
/// Spans must be sorted, disjoint, and in bounds.
pub fn render_tagged(plain: &str, spans: &[SpanAnnotation]) -> String {
    let mut out = String::with_capacity(plain.len() + spans.len() * 24);
    let mut span_iter = spans.iter().peekable();
    let mut active_end: Option<usize> = None;
    for (pos, c) in plain.chars().enumerate() {
        if active_end == Some(pos) {
            out.push_str(CLOSE);
            active_end = None;
        }
        if let Some(span) = span_iter.peek() {
            if span.start == pos {
                match span.class {
                    Some(class) => {
                        out.push_str(OPEN_CLASS);
                        out.push_str(class.canonical_name());
                        out.push_str("\">");
                    }
                    None => out.push_str(OPEN_BARE),
                }
                active_end = Some(span.end);
                span_iter.next();
            }
        }
        out.push(c);
    }
    if active_end.is_some() {
        out.push_str(CLOSE);
    }
    out
}
