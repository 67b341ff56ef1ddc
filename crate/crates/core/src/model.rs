//! Core data model: document pairs, the 11-class error taxonomy, span
//! annotations, and validation against the summary text.
//!
//! Offsets are Unicode scalar-value (character) offsets into the summary,
//! never bytes. All types are immutable after construction.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// The literal placeholder substituting protected health information.
pub const DEID_TOKEN: &str = "___";

/// A context (Brief Hospital Course) plus a summary (Discharge
/// Instructions); the unit of annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentPair {
    pub id: String,
    pub context: String,
    pub summary: String,
}

impl DocumentPair {
    pub fn new(
        id: impl Into<String>,
        context: impl Into<String>,
        summary: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            context: context.into(),
            summary: summary.into(),
        }
    }

    /// Summary length in characters (Unicode scalar values).
    pub fn summary_chars(&self) -> usize {
        self.summary.chars().count()
    }
}

/// The 11 error classes: nine `unsupported_*` subtypes plus contradicted
/// and incorrect facts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationClass {
    UnsupportedCondition,
    UnsupportedProcedure,
    UnsupportedMedication,
    UnsupportedTime,
    UnsupportedLocation,
    UnsupportedNumber,
    UnsupportedName,
    UnsupportedWord,
    UnsupportedOther,
    ContradictedFact,
    IncorrectFact,
}

impl HallucinationClass {
    pub const ALL: [HallucinationClass; 11] = [
        HallucinationClass::UnsupportedCondition,
        HallucinationClass::UnsupportedProcedure,
        HallucinationClass::UnsupportedMedication,
        HallucinationClass::UnsupportedTime,
        HallucinationClass::UnsupportedLocation,
        HallucinationClass::UnsupportedNumber,
        HallucinationClass::UnsupportedName,
        HallucinationClass::UnsupportedWord,
        HallucinationClass::UnsupportedOther,
        HallucinationClass::ContradictedFact,
        HallucinationClass::IncorrectFact,
    ];

    pub fn canonical_name(&self) -> &'static str {
        match self {
            HallucinationClass::UnsupportedCondition => "unsupported_condition",
            HallucinationClass::UnsupportedProcedure => "unsupported_procedure",
            HallucinationClass::UnsupportedMedication => "unsupported_medication",
            HallucinationClass::UnsupportedTime => "unsupported_time",
            HallucinationClass::UnsupportedLocation => "unsupported_location",
            HallucinationClass::UnsupportedNumber => "unsupported_number",
            HallucinationClass::UnsupportedName => "unsupported_name",
            HallucinationClass::UnsupportedWord => "unsupported_word",
            HallucinationClass::UnsupportedOther => "unsupported_other",
            HallucinationClass::ContradictedFact => "contradicted_fact",
            HallucinationClass::IncorrectFact => "incorrect_fact",
        }
    }

    /// True for the nine `unsupported_*` subtypes.
    pub fn is_unsupported(&self) -> bool {
        !matches!(
            self,
            HallucinationClass::ContradictedFact | HallucinationClass::IncorrectFact
        )
    }
}

impl fmt::Display for HallucinationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown hallucination label: {0:?}")]
pub struct UnknownLabel(pub String);

/// Resolve a label name to its canonical class. Matching is
/// case-insensitive and tolerant of spaces in place of underscores.
pub fn parse_label(name: &str) -> Result<HallucinationClass, UnknownLabel> {
    let normalized: String = name
        .trim()
        .chars()
        .map(|c| match c {
            ' ' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect();
    HallucinationClass::ALL
        .iter()
        .find(|c| c.canonical_name() == normalized)
        .copied()
        .ok_or_else(|| UnknownLabel(name.to_string()))
}

/// A single hallucination span on the summary text. `start` is inclusive,
/// `end` exclusive, both in characters. The class is absent in
/// class-agnostic settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<HallucinationClass>,
}

impl SpanAnnotation {
    pub fn new(start: usize, end: usize, class: Option<HallucinationClass>) -> Self {
        Self { start, end, class }
    }

    pub fn overlaps(&self, other: &SpanAnnotation) -> bool {
        self.start.max(other.start) < self.end.min(other.end)
    }

    /// The covered summary text, or `None` when out of bounds.
    pub fn covered_text<'a>(&self, summary: &'a str) -> Option<&'a str> {
        char_slice(summary, self.start, self.end)
    }
}

/// Slice `text` by character offsets, returning `None` when the range is
/// invalid or out of bounds.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i);
    let total = text.chars().count();
    if end > total {
        return None;
    }
    let byte_start = if start == total {
        text.len()
    } else {
        indices.clone().nth(start)?
    };
    let byte_end = if end == total {
        text.len()
    } else {
        indices.nth(end)?
    };
    Some(&text[byte_start..byte_end])
}

/// All spans of one annotator on one document, sorted by (start, end).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub doc_id: String,
    pub annotator: String,
    pub spans: Vec<SpanAnnotation>,
}

impl AnnotationSet {
    /// Builds a set with spans sorted by (start, end).
    pub fn new(
        doc_id: impl Into<String>,
        annotator: impl Into<String>,
        mut spans: Vec<SpanAnnotation>,
    ) -> Self {
        spans.sort_by_key(|s| (s.start, s.end));
        Self {
            doc_id: doc_id.into(),
            annotator: annotator.into(),
            spans,
        }
    }
}

/// Label kinds for auxiliary (non-hallucination) annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxLabelKind {
    KeyFactContext,
    KeyFactSummary,
    MedicalJargon,
}

/// Key-fact or jargon spans on the context or summary text. Overlaps are
/// permitted across kinds, not within a kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxLabelSet {
    pub doc_id: String,
    pub label_kind: AuxLabelKind,
    pub spans: Vec<(usize, usize)>,
}

/// A single validation finding. Violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Index of the offending span within the set.
    pub span_index: usize,
    pub rule: ViolationRule,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationRule {
    Bounds,
    EmptyText,
    Overlap,
    DocMismatch,
}

/// Checks every span invariant of `set` against `doc.summary`. Returns an
/// empty list iff the set is valid. Total over arbitrary summary bytes.
pub fn validate(set: &AnnotationSet, doc: &DocumentPair) -> Vec<Violation> {
    let mut violations = Vec::new();
    if set.doc_id != doc.id {
        violations.push(Violation {
            span_index: 0,
            rule: ViolationRule::DocMismatch,
            detail: format!("set references {:?}, document is {:?}", set.doc_id, doc.id),
        });
        return violations;
    }
    let len = doc.summary_chars();
    for (i, span) in set.spans.iter().enumerate() {
        if span.start >= span.end || span.end > len {
            violations.push(Violation {
                span_index: i,
                rule: ViolationRule::Bounds,
                detail: format!(
                    "span ({}, {}) out of bounds for summary of {} chars",
                    span.start, span.end, len
                ),
            });
            continue;
        }
        let covered = span.covered_text(&doc.summary).unwrap_or("");
        if covered.trim().is_empty() {
            violations.push(Violation {
                span_index: i,
                rule: ViolationRule::EmptyText,
                detail: format!("span ({}, {}) covers only whitespace", span.start, span.end),
            });
        }
        if let Some(prev) = i.checked_sub(1).and_then(|p| set.spans.get(p)) {
            if span.overlaps(prev) {
                violations.push(Violation {
                    span_index: i,
                    rule: ViolationRule::Overlap,
                    detail: format!(
                        "span ({}, {}) overlaps ({}, {})",
                        span.start, span.end, prev.start, prev.end
                    ),
                });
            }
        }
    }
    violations
}

/// Count deidentification placeholders ("___") in a text.
pub fn deid_count(text: &str) -> usize {
    text.matches(DEID_TOKEN).count()
}

/// Per-class and per-summary annotation counts with mean/SD.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountTable {
    pub per_class: BTreeMap<String, u64>,
    pub unclassed: u64,
    pub total: u64,
    pub per_summary: Vec<(String, u64)>,
    pub mean_per_summary: f64,
    pub sd_per_summary: f64,
}

/// Tally annotations per class and per summary. Mean/SD use the sample
/// standard deviation (n - 1 denominator); SD is 0 for fewer than two sets.
pub fn count_annotations(sets: &[AnnotationSet]) -> CountTable {
    let mut per_class: BTreeMap<String, u64> = HallucinationClass::ALL
        .iter()
        .map(|c| (c.canonical_name().to_string(), 0))
        .collect();
    let mut unclassed = 0u64;
    let mut per_summary = Vec::with_capacity(sets.len());
    let mut total = 0u64;
    for set in sets {
        per_summary.push((set.doc_id.clone(), set.spans.len() as u64));
        for span in &set.spans {
            total += 1;
            match span.class {
                Some(class) => {
                    *per_class.get_mut(class.canonical_name()).expect("all classes present") += 1
                }
                None => unclassed += 1,
            }
        }
    }
    let (mean, sd) = mean_sd(per_summary.iter().map(|(_, c)| *c as f64));
    CountTable {
        per_class,
        unclassed,
        total,
        per_summary,
        mean_per_summary: mean,
        sd_per_summary: sd,
    }
}

fn mean_sd(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.collect();
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
