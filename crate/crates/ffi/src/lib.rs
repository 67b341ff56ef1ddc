//! C ABI over the core toolkit. The header is generated into
//! `include/halluc.h` by the build script.
//!
//! Conventions: functions return `HL_OK` (0) or a negative `HL_ERR_*`
//! code; on failure `hl_last_error` holds a message until the next
//! failing call on the same thread. Strings returned through out
//! parameters are owned by the caller and must go back through
//! `hl_string_free`; span arrays through `hl_spans_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use halluc::agreement::krippendorff_interval;
use halluc::entity::{detect, DetectorConfig, EmbeddingStore, Lexicon};
use halluc::eval::{match_spans, EvalCounts};
use halluc::metrics::{rouge_l, rouge_n, sari, PrfScore};
use halluc::model::{parse_label, DocumentPair, HallucinationClass, SpanAnnotation};
use halluc::tagged::{parse_tagged, render_tagged, ClassMode};

pub const HL_OK: i32 = 0;
/// A required pointer was null.
pub const HL_ERR_NULL: i32 = -1;
/// A string argument was not valid UTF-8.
pub const HL_ERR_UTF8: i32 = -2;
/// The input was readable but semantically invalid.
pub const HL_ERR_INVALID: i32 = -3;
/// Tagged text could not be parsed.
pub const HL_ERR_PARSE: i32 = -4;
/// A file could not be read.
pub const HL_ERR_IO: i32 = -5;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(code: i32, message: impl std::fmt::Display) -> i32 {
    let message = CString::new(message.to_string().replace('\0', " "))
        .expect("nul bytes stripped");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
    code
}

/// Message from the most recent failing call on this thread, or null.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hl_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |message| message.as_ptr())
    })
}

/// # Safety
/// `ptr` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn hl_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

unsafe fn utf8<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, i32> {
    if ptr.is_null() {
        return Err(set_error(HL_ERR_NULL, format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| set_error(HL_ERR_UTF8, format!("{name}: {e}")))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes stripped")
        .into_raw()
}

fn class_mode(class_aware: i32) -> ClassMode {
    if class_aware != 0 {
        ClassMode::ClassAware
    } else {
        ClassMode::ClassAgnostic
    }
}

/// A hallucination span in character offsets, end exclusive. `class_`
/// indexes into `hl_class_name`; -1 means no class (class-agnostic).
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct HlSpan {
    pub start: u64,
    pub end: u64,
    pub class_: i32,
}

impl HlSpan {
    fn to_annotation(self) -> Result<SpanAnnotation, i32> {
        let class = match self.class_ {
            -1 => None,
            i => Some(class_from_index(i).ok_or_else(|| {
                set_error(HL_ERR_INVALID, format!("class index {i} out of range"))
            })?),
        };
        Ok(SpanAnnotation::new(self.start as usize, self.end as usize, class))
    }

    fn from_annotation(span: &SpanAnnotation) -> HlSpan {
        HlSpan {
            start: span.start as u64,
            end: span.end as u64,
            class_: span.class.map_or(-1, class_index),
        }
    }
}

fn class_index(class: HallucinationClass) -> i32 {
    HallucinationClass::ALL
        .iter()
        .position(|c| *c == class)
        .expect("class is in ALL") as i32
}

fn class_from_index(index: i32) -> Option<HallucinationClass> {
    usize::try_from(index)
        .ok()
        .and_then(|i| HallucinationClass::ALL.get(i).copied())
}

/// Number of hallucination classes (valid indices are 0..count).
#[no_mangle]
pub extern "C" fn hl_class_count() -> i32 {
    HallucinationClass::ALL.len() as i32
}

/// Static canonical name for a class index, or null if out of range.
#[no_mangle]
pub extern "C" fn hl_class_name(index: i32) -> *const c_char {
    // canonical names are NUL-free ASCII; keep a static table of C strings
    const NAMES: [&str; 11] = [
        "unsupported_condition\0",
        "unsupported_procedure\0",
        "unsupported_medication\0",
        "unsupported_time\0",
        "unsupported_location\0",
        "unsupported_number\0",
        "unsupported_name\0",
        "unsupported_word\0",
        "unsupported_other\0",
        "contradicted_fact\0",
        "incorrect_fact\0",
    ];
    match usize::try_from(index).ok().and_then(|i| NAMES.get(i)) {
        Some(name) => name.as_ptr().cast(),
        None => ptr::null(),
    }
}

/// Resolve a label name to its class index, or -1 if unknown.
///
/// # Safety
/// `name` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hl_class_parse(name: *const c_char) -> i32 {
    let Ok(name) = utf8(name, "name") else {
        return -1;
    };
    parse_label(name).map_or(-1, class_index)
}

unsafe fn write_spans(spans: &[SpanAnnotation], out: *mut *mut HlSpan, out_len: *mut usize) {
    let boxed: Box<[HlSpan]> = spans.iter().map(HlSpan::from_annotation).collect();
    *out_len = boxed.len();
    *out = Box::into_raw(boxed).cast();
}

/// # Safety
/// `ptr`/`len` must be a pair previously produced by this library.
#[no_mangle]
pub unsafe extern "C" fn hl_spans_free(ptr: *mut HlSpan, len: usize) {
    if !ptr.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(ptr, len)));
    }
}

/// Strip inline `<error>` tags from `text`. On success `out_plain`
/// receives the plain text and `out_spans`/`out_len` the tagged regions.
///
/// # Safety
/// `text` must be NUL-terminated; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_parse_tagged(
    text: *const c_char,
    class_aware: i32,
    out_plain: *mut *mut c_char,
    out_spans: *mut *mut HlSpan,
    out_len: *mut usize,
) -> i32 {
    if out_plain.is_null() || out_spans.is_null() || out_len.is_null() {
        return set_error(HL_ERR_NULL, "output pointer is null");
    }
    let text = match utf8(text, "text") {
        Ok(t) => t,
        Err(code) => return code,
    };
    match parse_tagged(text, class_mode(class_aware)) {
        Ok(parsed) => {
            *out_plain = to_c_string(parsed.plain);
            write_spans(&parsed.spans, out_spans, out_len);
            HL_OK
        }
        Err(e) => set_error(HL_ERR_PARSE, e),
    }
}

/// Re-insert `<error>` tags into `plain` at the given spans.
///
/// # Safety
/// `plain` must be NUL-terminated; `spans` must point at `len` elements.
#[no_mangle]
pub unsafe extern "C" fn hl_render_tagged(
    plain: *const c_char,
    spans: *const HlSpan,
    len: usize,
    out_text: *mut *mut c_char,
) -> i32 {
    if out_text.is_null() || (spans.is_null() && len > 0) {
        return set_error(HL_ERR_NULL, "pointer is null");
    }
    let plain = match utf8(plain, "plain") {
        Ok(t) => t,
        Err(code) => return code,
    };
    let raw = std::slice::from_raw_parts(spans, len);
    let mut annotations = Vec::with_capacity(len);
    for span in raw {
        match span.to_annotation() {
            Ok(a) => annotations.push(a),
            Err(code) => return code,
        }
    }
    *out_text = to_c_string(render_tagged(plain, &annotations));
    HL_OK
}

/// Partial-match tallies; see `hl_eval_scores` for derived P/R/F1.
#[repr(C)]
#[derive(Clone, Copy, Default, PartialEq, Eq, Debug)]
pub struct HlEvalCounts {
    pub correct: u64,
    pub partial: u64,
    pub incorrect: u64,
    pub missed: u64,
    pub spurious: u64,
}

impl From<EvalCounts> for HlEvalCounts {
    fn from(c: EvalCounts) -> Self {
        HlEvalCounts {
            correct: c.correct,
            partial: c.partial,
            incorrect: c.incorrect,
            missed: c.missed,
            spurious: c.spurious,
        }
    }
}

/// Score predicted spans against gold spans for one document.
///
/// # Safety
/// Span pointers must cover their stated lengths; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_match_spans(
    gold: *const HlSpan,
    gold_len: usize,
    pred: *const HlSpan,
    pred_len: usize,
    class_aware: i32,
    out: *mut HlEvalCounts,
) -> i32 {
    if out.is_null() || (gold.is_null() && gold_len > 0) || (pred.is_null() && pred_len > 0) {
        return set_error(HL_ERR_NULL, "pointer is null");
    }
    let convert = |ptr: *const HlSpan, len: usize| -> Result<Vec<SpanAnnotation>, i32> {
        std::slice::from_raw_parts(ptr, len)
            .iter()
            .map(|s| s.to_annotation())
            .collect()
    };
    let gold = match convert(gold, gold_len) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let pred = match convert(pred, pred_len) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let detail = match_spans(&gold, &pred, class_mode(class_aware));
    *out = detail.counts.into();
    HL_OK
}

/// Precision, recall, and F1 from partial-match tallies.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_eval_scores(
    counts: *const HlEvalCounts,
    out_precision: *mut f64,
    out_recall: *mut f64,
    out_f1: *mut f64,
) -> i32 {
    if counts.is_null() || out_precision.is_null() || out_recall.is_null() || out_f1.is_null() {
        return set_error(HL_ERR_NULL, "pointer is null");
    }
    let c = *counts;
    let counts = EvalCounts {
        correct: c.correct,
        partial: c.partial,
        incorrect: c.incorrect,
        missed: c.missed,
        spurious: c.spurious,
    };
    *out_precision = counts.precision();
    *out_recall = counts.recall();
    *out_f1 = counts.f1();
    HL_OK
}

/// Interval Krippendorff's alpha over ragged units. `values` holds all
/// ratings back to back; `unit_lens[i]` values belong to unit `i`.
/// `out_degenerate` is set to 1 when expected disagreement is zero.
///
/// # Safety
/// `values` must hold the sum of `unit_lens`; out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_krippendorff_interval(
    values: *const f64,
    unit_lens: *const usize,
    n_units: usize,
    out_alpha: *mut f64,
    out_degenerate: *mut i32,
) -> i32 {
    if out_alpha.is_null()
        || out_degenerate.is_null()
        || (n_units > 0 && (values.is_null() || unit_lens.is_null()))
    {
        return set_error(HL_ERR_NULL, "pointer is null");
    }
    let lens = std::slice::from_raw_parts(unit_lens, n_units);
    let total: usize = lens.iter().sum();
    let flat = std::slice::from_raw_parts(values, total);
    let mut units = Vec::with_capacity(n_units);
    let mut offset = 0;
    for &len in lens {
        units.push(flat[offset..offset + len].to_vec());
        offset += len;
    }
    match krippendorff_interval(&units) {
        Ok(result) => {
            *out_alpha = result.alpha;
            *out_degenerate = i32::from(result.degenerate);
            HL_OK
        }
        Err(e) => set_error(HL_ERR_INVALID, e),
    }
}

/// A precision/recall/F1 triple.
#[repr(C)]
#[derive(Clone, Copy, Default, Debug)]
pub struct HlPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<PrfScore> for HlPrf {
    fn from(score: PrfScore) -> Self {
        HlPrf {
            precision: score.precision,
            recall: score.recall,
            f1: score.f1,
        }
    }
}

/// ROUGE-N of `candidate` against `reference`.
///
/// # Safety
/// Text pointers must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_rouge_n(
    candidate: *const c_char,
    reference: *const c_char,
    n: usize,
    out: *mut HlPrf,
) -> i32 {
    if out.is_null() {
        return set_error(HL_ERR_NULL, "out is null");
    }
    if n == 0 {
        return set_error(HL_ERR_INVALID, "n must be positive");
    }
    let candidate = match utf8(candidate, "candidate") {
        Ok(t) => t,
        Err(code) => return code,
    };
    let reference = match utf8(reference, "reference") {
        Ok(t) => t,
        Err(code) => return code,
    };
    *out = rouge_n(candidate, reference, n).into();
    HL_OK
}

/// ROUGE-L of `candidate` against `reference`.
///
/// # Safety
/// Text pointers must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_rouge_l(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut HlPrf,
) -> i32 {
    if out.is_null() {
        return set_error(HL_ERR_NULL, "out is null");
    }
    let candidate = match utf8(candidate, "candidate") {
        Ok(t) => t,
        Err(code) => return code,
    };
    let reference = match utf8(reference, "reference") {
        Ok(t) => t,
        Err(code) => return code,
    };
    *out = rouge_l(candidate, reference).into();
    HL_OK
}

/// SARI of `candidate` rewriting `source` against `n_refs` references,
/// on a 0-100 scale.
///
/// # Safety
/// `references` must point at `n_refs` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn hl_sari(
    source: *const c_char,
    candidate: *const c_char,
    references: *const *const c_char,
    n_refs: usize,
    out: *mut f64,
) -> i32 {
    if out.is_null() || (n_refs > 0 && references.is_null()) {
        return set_error(HL_ERR_NULL, "pointer is null");
    }
    if n_refs == 0 {
        return set_error(HL_ERR_INVALID, "at least one reference is required");
    }
    let source = match utf8(source, "source") {
        Ok(t) => t,
        Err(code) => return code,
    };
    let candidate = match utf8(candidate, "candidate") {
        Ok(t) => t,
        Err(code) => return code,
    };
    let mut refs = Vec::with_capacity(n_refs);
    for (i, ptr) in std::slice::from_raw_parts(references, n_refs).iter().enumerate() {
        match utf8(*ptr, &format!("references[{i}]")) {
            Ok(t) => refs.push(t),
            Err(code) => return code,
        }
    }
    *out = sari(source, candidate, &refs);
    HL_OK
}

/// Opaque entity-grounding detector.
pub struct HlDetector {
    lexicon: Lexicon,
    embeddings: Option<EmbeddingStore>,
    config: DetectorConfig,
}

/// Build a detector from a lexicon TSV and an optional embedding file
/// (pass null to disable embedding matching). Returns null on failure
/// with `hl_last_error` set.
///
/// # Safety
/// Path pointers must be NUL-terminated (or null where allowed).
#[no_mangle]
pub unsafe extern "C" fn hl_detector_new(
    lexicon_path: *const c_char,
    embeddings_path: *const c_char,
    tau: f64,
) -> *mut HlDetector {
    let lexicon_path = match utf8(lexicon_path, "lexicon_path") {
        Ok(p) => p,
        Err(_) => return ptr::null_mut(),
    };
    let lexicon = match open_and(lexicon_path, Lexicon::read) {
        Ok(l) => l,
        Err(_) => return ptr::null_mut(),
    };
    let embeddings = if embeddings_path.is_null() {
        None
    } else {
        let path = match utf8(embeddings_path, "embeddings_path") {
            Ok(p) => p,
            Err(_) => return ptr::null_mut(),
        };
        match open_and(path, EmbeddingStore::read) {
            Ok(store) => Some(store),
            Err(_) => return ptr::null_mut(),
        }
    };
    let config = DetectorConfig {
        tau,
        use_embeddings: embeddings.is_some(),
    };
    Box::into_raw(Box::new(HlDetector {
        lexicon,
        embeddings,
        config,
    }))
}

fn open_and<T, E: std::fmt::Display>(
    path: &str,
    read: impl FnOnce(std::fs::File) -> Result<T, E>,
) -> Result<T, i32> {
    let file = std::fs::File::open(Path::new(path))
        .map_err(|e| set_error(HL_ERR_IO, format!("{path}: {e}")))?;
    read(file).map_err(|e| set_error(HL_ERR_INVALID, format!("{path}: {e}")))
}

/// Flag summary entities unsupported by the context. Spans come back in
/// summary character offsets via `out_spans`/`out_len`.
///
/// # Safety
/// `detector` must come from `hl_detector_new`; texts NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hl_detector_detect(
    detector: *const HlDetector,
    context: *const c_char,
    summary: *const c_char,
    out_spans: *mut *mut HlSpan,
    out_len: *mut usize,
) -> i32 {
    if detector.is_null() || out_spans.is_null() || out_len.is_null() {
        return set_error(HL_ERR_NULL, "pointer is null");
    }
    let context = match utf8(context, "context") {
        Ok(t) => t,
        Err(code) => return code,
    };
    let summary = match utf8(summary, "summary") {
        Ok(t) => t,
        Err(code) => return code,
    };
    let detector = &*detector;
    let doc = DocumentPair::new("ffi", context, summary);
    let outcome = detect(
        &doc,
        &detector.lexicon,
        detector.embeddings.as_ref(),
        &detector.config,
    );
    write_spans(&outcome.set.spans, out_spans, out_len);
    HL_OK
}

/// # Safety
/// `detector` must come from `hl_detector_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hl_detector_free(detector: *mut HlDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}
