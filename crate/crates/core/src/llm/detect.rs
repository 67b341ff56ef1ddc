//! Turn LLM detection responses into validated annotation sets:
//! locate the labeled summary in the response, strip the tags, align the
//! plain text back to the original summary, and project the spans.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::align::{align_with_threshold, project_spans, DroppedSpan};
use crate::model::{validate, AnnotationSet, DocumentPair};
use crate::tagged::parse_tagged;

use super::client::{LlmClient, LlmError};
use super::prompts::{
    build_detection_prompt, build_summarization_prompt, PromptSpec, PromptTask, LABELED_HEADER,
};

pub const LLM_ANNOTATOR: &str = "llm";

/// Default number of in-flight requests for batch runs.
pub const DEFAULT_CONCURRENCY: usize = 4;

/// Per-document post-processing trace.
#[derive(Debug, Clone, Default, Serialize)]
pub struct DetectDiagnostics {
    /// Alignment confidence between response text and original summary.
    pub confidence: Option<f64>,
    pub dropped: Vec<DroppedSpan>,
    pub warnings: Vec<String>,
    /// Fatal per-document failure; the span set is empty in that case.
    pub error: Option<String>,
    /// The ERRORS bullet list from chain-of-thought responses; kept for
    /// audit, never scored.
    pub cot_text: Option<String>,
    /// Set when the labeled-summary header was missing and the whole
    /// response was parsed instead.
    pub used_whole_response: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionRecord {
    pub doc_id: String,
    pub set: AnnotationSet,
    pub diagnostics: DetectDiagnostics,
}

impl DetectionRecord {
    fn failed(doc_id: &str, mut diagnostics: DetectDiagnostics, error: String) -> Self {
        diagnostics.error = Some(error);
        DetectionRecord {
            doc_id: doc_id.to_string(),
            set: AnnotationSet::new(doc_id, LLM_ANNOTATOR, Vec::new()),
            diagnostics,
        }
    }
}

/// Split a raw response into (cot bullet list, labeled summary text).
fn split_response(response: &str) -> (Option<String>, &str, bool) {
    match response.find(LABELED_HEADER) {
        Some(pos) => {
            let before = &response[..pos];
            let cot = before
                .find("ERRORS:")
                .map(|e| before["ERRORS:".len() + e..].trim().to_string())
                .filter(|t| !t.is_empty());
            let labeled = response[pos + LABELED_HEADER.len()..].trim();
            (cot, labeled, false)
        }
        None => (None, response.trim(), true),
    }
}

/// Run detection for one document: prompt, complete, parse, re-align.
pub fn detect_with_llm(
    doc: &DocumentPair,
    spec: &PromptSpec,
    client: &LlmClient,
    guidelines: &str,
    confidence_threshold: f64,
) -> DetectionRecord {
    assert_eq!(spec.task, PromptTask::Detection);
    let messages = build_detection_prompt(spec, doc, guidelines);
    let mut diagnostics = DetectDiagnostics::default();
    let response = match client.complete(&messages, spec.decoding) {
        Ok(r) => r,
        Err(e) => return DetectionRecord::failed(&doc.id, diagnostics, e.to_string()),
    };
    let (cot, labeled, whole) = split_response(&response.text);
    diagnostics.cot_text = cot;
    diagnostics.used_whole_response = whole;
    if whole {
        diagnostics
            .warnings
            .push(format!("response missing {LABELED_HEADER:?} header; parsed whole response"));
    }
    let parsed = match parse_tagged(labeled, spec.mode) {
        Ok(p) => p,
        Err(e) => return DetectionRecord::failed(&doc.id, diagnostics, e.to_string()),
    };
    diagnostics.warnings.extend(parsed.warnings);
    let (spans, map) = if parsed.plain == doc.summary {
        diagnostics.confidence = Some(1.0);
        (parsed.spans, None)
    } else {
        let map = match align_with_threshold(&parsed.plain, &doc.summary, confidence_threshold) {
            Ok(m) => m,
            Err(e) => return DetectionRecord::failed(&doc.id, diagnostics, e.to_string()),
        };
        diagnostics.confidence = Some(map.confidence);
        let (projected, dropped) = project_spans(&parsed.spans, &map);
        diagnostics.dropped = dropped;
        (projected, Some(map))
    };
    drop(map);
    let set = AnnotationSet::new(&doc.id, LLM_ANNOTATOR, spans);
    let violations = validate(&set, doc);
    if !violations.is_empty() {
        let detail: Vec<String> = violations
            .iter()
            .map(|v| format!("span {}: {}", v.span_index, v.detail))
            .collect();
        return DetectionRecord::failed(&doc.id, diagnostics, detail.join("; "));
    }
    DetectionRecord {
        doc_id: doc.id.clone(),
        set,
        diagnostics,
    }
}

/// Batch detection: always yields one record per input document, in
/// input order, continuing past per-document failures.
pub fn detect_batch(
    docs: &[DocumentPair],
    spec: &PromptSpec,
    client: &LlmClient,
    guidelines: &str,
    confidence_threshold: f64,
    concurrency: usize,
) -> Vec<DetectionRecord> {
    let workers = concurrency.max(1).min(docs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<DetectionRecord>>> = Mutex::new(vec![None; docs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= docs.len() {
                    break;
                }
                let record =
                    detect_with_llm(&docs[i], spec, client, guidelines, confidence_threshold);
                results.lock().expect("no poisoned lock")[i] = Some(record);
            });
        }
    });
    results
        .into_inner()
        .expect("no poisoned lock")
        .into_iter()
        .map(|r| r.expect("every index filled"))
        .collect()
}

/// Generate a patient summary for one document.
pub fn summarize_with_llm(
    doc: &DocumentPair,
    shots: &[(String, String)],
    client: &LlmClient,
    decoding: super::prompts::Decoding,
) -> Result<String, LlmError> {
    let messages = build_summarization_prompt(shots, doc);
    Ok(client.complete(&messages, decoding)?.text.trim().to_string())
}
