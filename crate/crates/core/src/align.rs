//! Character alignment between an LLM-rewritten text and the original
//! summary, used to recover span offsets after the model corrected typos
//! or made small edits.
//!
//! The alignment is a minimum-edit-cost character alignment (unit costs,
//! match cost 0). Among minimum-cost alignments the one with the most
//! matched characters is chosen, with ties broken deterministically in
//! favor of earlier matches. Inputs above `SENTENCE_MODE_THRESHOLD`
//! characters are aligned per sentence after a sentence-level pairing
//! pass to bound cost.

use crate::model::SpanAnnotation;

/// Below this confidence the offsets are considered meaningless.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;

/// Inputs longer than this are aligned sentence-by-sentence.
pub const SENTENCE_MODE_THRESHOLD: usize = 20_000;

/// Hard cap on DP cells for a single pair; beyond it a prefix/suffix
/// anchor fallback is used.
const MAX_DP_CELLS: usize = 16_000_000;

#[derive(Debug, Clone, thiserror::Error)]
pub enum AlignError {
    #[error("alignment confidence {confidence:.3} below threshold {threshold:.3}")]
    LowConfidence { confidence: f64, threshold: f64 },
    #[error("cannot align empty text")]
    EmptyInput,
}

/// Monotone mapping from character positions in the variant text to
/// positions in the original text.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetMap {
    /// For span starts: `start_map[i]` is the original position where
    /// variant character `i` begins (length `variant_len + 1`).
    start_map: Vec<usize>,
    /// For span ends: `end_map[i]` is the original position just after
    /// the region covered by variant characters `0..i`.
    end_map: Vec<usize>,
    /// Fraction of characters matched: `matched / max(len_v, len_o)`.
    pub confidence: f64,
}

impl OffsetMap {
    pub fn identity(len: usize) -> Self {
        let map: Vec<usize> = (0..=len).collect();
        OffsetMap {
            start_map: map.clone(),
            end_map: map,
            confidence: 1.0,
        }
    }

    pub fn variant_len(&self) -> usize {
        self.start_map.len() - 1
    }

    /// Original position for a span start at variant position `pos`.
    pub fn map_start(&self, pos: usize) -> Option<usize> {
        self.start_map.get(pos).copied()
    }

    /// Original position for a span end at variant position `pos`.
    pub fn map_end(&self, pos: usize) -> Option<usize> {
        self.end_map.get(pos).copied()
    }

    pub fn is_identity(&self) -> bool {
        self.start_map.iter().enumerate().all(|(i, &p)| i == p)
            && self.end_map.iter().enumerate().all(|(i, &p)| i == p)
    }
}

/// A span that could not be carried over to the original text.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct DroppedSpan {
    pub span: SpanAnnotation,
    pub reason: String,
}

/// Align `variant` against `original` using the default confidence
/// threshold.
pub fn align(variant: &str, original: &str) -> Result<OffsetMap, AlignError> {
    align_with_threshold(variant, original, DEFAULT_CONFIDENCE_THRESHOLD)
}

pub fn align_with_threshold(
    variant: &str,
    original: &str,
    threshold: f64,
) -> Result<OffsetMap, AlignError> {
    if variant.is_empty() || original.is_empty() {
        return Err(AlignError::EmptyInput);
    }
    let v: Vec<char> = variant.chars().collect();
    let o: Vec<char> = original.chars().collect();
    let map = if v.len().max(o.len()) > SENTENCE_MODE_THRESHOLD {
        align_by_sentence(&v, &o)
    } else {
        align_chars(&v, &o)
    };
    if map.confidence < threshold {
        return Err(AlignError::LowConfidence {
            confidence: map.confidence,
            threshold,
        });
    }
    Ok(map)
}

/// Map spans on the variant through `map` onto the original. Spans that
/// project to zero width are dropped and reported, not raised.
pub fn project_spans(
    spans: &[SpanAnnotation],
    map: &OffsetMap,
) -> (Vec<SpanAnnotation>, Vec<DroppedSpan>) {
    let mut projected = Vec::with_capacity(spans.len());
    let mut dropped = Vec::new();
    for span in spans {
        let (start, end) = match (map.map_start(span.start), map.map_end(span.end)) {
            (Some(s), Some(e)) => (s, e),
            _ => {
                dropped.push(DroppedSpan {
                    span: *span,
                    reason: "span boundary outside offset map".to_string(),
                });
                continue;
            }
        };
        if start >= end {
            dropped.push(DroppedSpan {
                span: *span,
                reason: "span projects to zero width".to_string(),
            });
            continue;
        }
        projected.push(SpanAnnotation::new(start, end, span.class));
    }
    (projected, dropped)
}

/// Per-character alignment operations, variant side.
enum Op {
    /// Variant char consumed against original char (match or sub).
    Pair { matched: bool },
    /// Variant char with no original counterpart.
    InsertVariant,
    /// Original char with no variant counterpart.
    SkipOriginal,
}

fn align_chars(v: &[char], o: &[char]) -> OffsetMap {
    if v.len().saturating_mul(o.len()) > MAX_DP_CELLS {
        return align_anchored(v, o);
    }
    let ops = edit_ops(v, o);
    map_from_ops(&ops, v.len(), o.len(), 0).0
}

/// Full DP with traceback. Cell score is (edit_cost, -matches), compared
/// lexicographically; traceback preference is diagonal, then skip
/// original, then insert variant, which keeps matches as early as
/// possible.
fn edit_ops(v: &[char], o: &[char]) -> Vec<Op> {
    let n = v.len();
    let m = o.len();
    // score[i][j] = (cost, matches) for v[..i] vs o[..j]
    let mut cost = vec![0u32; (n + 1) * (m + 1)];
    let mut matches = vec![0u32; (n + 1) * (m + 1)];
    let mut dir = vec![0u8; (n + 1) * (m + 1)]; // 1 diag, 2 left(skip orig), 3 up(insert variant)
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for j in 1..=m {
        cost[idx(0, j)] = j as u32;
        dir[idx(0, j)] = 2;
    }
    for i in 1..=n {
        cost[idx(i, 0)] = i as u32;
        dir[idx(i, 0)] = 3;
    }
    for i in 1..=n {
        for j in 1..=m {
            let eq = v[i - 1] == o[j - 1];
            let diag = (
                cost[idx(i - 1, j - 1)] + if eq { 0 } else { 1 },
                matches[idx(i - 1, j - 1)] + eq as u32,
            );
            let left = (cost[idx(i, j - 1)] + 1, matches[idx(i, j - 1)]);
            let up = (cost[idx(i - 1, j)] + 1, matches[idx(i - 1, j)]);
            // best = min cost, then max matches; full ties prefer left,
            // then up, then diag, which keeps skipped original text after
            // the matched block instead of scattering matches into it
            let opt_cost = diag.0.min(left.0).min(up.0);
            let opt_matches = [diag, left, up]
                .iter()
                .filter(|c| c.0 == opt_cost)
                .map(|c| c.1)
                .max()
                .expect("non-empty");
            let best = (opt_cost, opt_matches);
            cost[idx(i, j)] = opt_cost;
            matches[idx(i, j)] = opt_matches;
            dir[idx(i, j)] = if left == best {
                2
            } else if up == best {
                3
            } else {
                1
            };
        }
    }
    let mut ops = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match dir[idx(i, j)] {
            1 => {
                ops.push(Op::Pair {
                    matched: v[i - 1] == o[j - 1],
                });
                i -= 1;
                j -= 1;
            }
            2 => {
                ops.push(Op::SkipOriginal);
                j -= 1;
            }
            _ => {
                ops.push(Op::InsertVariant);
                i -= 1;
            }
        }
    }
    ops.reverse();
    ops
}

/// Anchor fallback for oversized pairs: align the common prefix and
/// suffix exactly and pair the middle linearly.
fn align_anchored(v: &[char], o: &[char]) -> OffsetMap {
    let prefix = v
        .iter()
        .zip(o.iter())
        .take_while(|(a, b)| a == b)
        .count();
    let max_suffix = v.len().min(o.len()) - prefix;
    let suffix = v
        .iter()
        .rev()
        .zip(o.iter().rev())
        .take(max_suffix)
        .take_while(|(a, b)| a == b)
        .count();
    let mut ops = Vec::with_capacity(v.len().max(o.len()));
    for _ in 0..prefix {
        ops.push(Op::Pair { matched: true });
    }
    let mid_v = v.len() - prefix - suffix;
    let mid_o = o.len() - prefix - suffix;
    for k in 0..mid_v.max(mid_o) {
        match (k < mid_v, k < mid_o) {
            (true, true) => ops.push(Op::Pair {
                matched: v[prefix + k] == o[prefix + k],
            }),
            (true, false) => ops.push(Op::InsertVariant),
            (false, true) => ops.push(Op::SkipOriginal),
            (false, false) => unreachable!(),
        }
    }
    for _ in 0..suffix {
        ops.push(Op::Pair { matched: true });
    }
    map_from_ops(&ops, v.len(), o.len(), 0).0
}

fn map_from_ops(ops: &[Op], v_len: usize, o_len: usize, o_offset: usize) -> (OffsetMap, usize) {
    let mut start_map = Vec::with_capacity(v_len + 1);
    let mut end_map = Vec::with_capacity(v_len + 1);
    start_map.push(o_offset);
    end_map.push(o_offset);
    let mut j = 0usize; // original position consumed so far
    let mut matched = 0usize;
    for op in ops {
        match op {
            Op::Pair { matched: is_match } => {
                // start of this variant char is the original char it pairs with
                *start_map.last_mut().expect("non-empty") = o_offset + j;
                j += 1;
                start_map.push(o_offset + j);
                end_map.push(o_offset + j);
                matched += *is_match as usize;
            }
            Op::InsertVariant => {
                start_map.push(o_offset + j);
                end_map.push(o_offset + j);
            }
            Op::SkipOriginal => {
                j += 1;
            }
        }
    }
    debug_assert_eq!(start_map.len(), v_len + 1);
    debug_assert_eq!(j, o_len);
    // the final start boundary points at the end of the original
    *start_map.last_mut().expect("non-empty") = o_offset + o_len;
    let confidence = if v_len.max(o_len) == 0 {
        1.0
    } else {
        matched as f64 / v_len.max(o_len) as f64
    };
    (
        OffsetMap {
            start_map,
            end_map,
            confidence,
        },
        matched,
    )
}

/// Sentence-level pairing for long inputs: align the two sentence
/// sequences with a coarse DP, then char-align each paired sentence.
fn align_by_sentence(v: &[char], o: &[char]) -> OffsetMap {
    let v_sents = sentence_bounds(v);
    let o_sents = sentence_bounds(o);
    let pairs = pair_sentences(v, &v_sents, o, &o_sents);
    let mut start_map = vec![0usize; v.len() + 1];
    let mut end_map = vec![0usize; v.len() + 1];
    let mut matched_total = 0usize;
    let mut filled = 0usize; // next variant boundary to fill
    for (v_range, o_range) in pairs {
        let (vs, ve) = v_range;
        let (sub_map, matched) = match o_range {
            Some((os, oe)) => {
                let sub_v = &v[vs..ve];
                let sub_o = &o[os..oe];
                if sub_v.len().saturating_mul(sub_o.len()) > MAX_DP_CELLS {
                    return align_anchored(v, o);
                }
                let ops = edit_ops(sub_v, sub_o);
                map_from_ops(&ops, sub_v.len(), sub_o.len(), os)
            }
            None => {
                // unpaired variant sentence collapses to a point
                let point = end_map[filled.min(v.len())];
                (
                    OffsetMap {
                        start_map: vec![point; ve - vs + 1],
                        end_map: vec![point; ve - vs + 1],
                        confidence: 0.0,
                    },
                    0,
                )
            }
        };
        let n = ve - vs + 1;
        start_map[vs..vs + n].copy_from_slice(&sub_map.start_map[..n]);
        end_map[vs..vs + n].copy_from_slice(&sub_map.end_map[..n]);
        matched_total += matched;
        filled = ve;
    }
    let confidence = matched_total as f64 / v.len().max(o.len()) as f64;
    OffsetMap {
        start_map,
        end_map,
        confidence: confidence.min(1.0),
    }
}

/// Sentence boundaries: split after runs of terminal punctuation or
/// newlines. Returns (start, end) char ranges covering the whole text.
fn sentence_bounds(chars: &[char]) -> Vec<(usize, usize)> {
    let mut bounds = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if c == '.' || c == '!' || c == '?' || c == '\n' {
            let mut end = i + 1;
            while end < chars.len()
                && (chars[end] == '.'
                    || chars[end] == '!'
                    || chars[end] == '?'
                    || chars[end] == '\n'
                    || chars[end] == ' ')
            {
                end += 1;
            }
            bounds.push((start, end));
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    if start < chars.len() {
        bounds.push((start, chars.len()));
    }
    bounds
}

type SentencePair = ((usize, usize), Option<(usize, usize)>);

/// Coarse DP over sentence sequences: sentences match at cost 0 when
/// equal, cost 1 when substituted, cost 1 when dropped on either side.
fn pair_sentences(
    v: &[char],
    v_sents: &[(usize, usize)],
    o: &[char],
    o_sents: &[(usize, usize)],
) -> Vec<SentencePair> {
    let n = v_sents.len();
    let m = o_sents.len();
    let eq = |a: (usize, usize), b: (usize, usize)| v[a.0..a.1] == o[b.0..b.1];
    let mut cost = vec![0u32; (n + 1) * (m + 1)];
    let mut dir = vec![0u8; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for j in 1..=m {
        cost[idx(0, j)] = j as u32;
        dir[idx(0, j)] = 2;
    }
    for i in 1..=n {
        cost[idx(i, 0)] = i as u32;
        dir[idx(i, 0)] = 3;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = if eq(v_sents[i - 1], o_sents[j - 1]) { 0 } else { 1 };
            let diag = cost[idx(i - 1, j - 1)] + sub;
            let left = cost[idx(i, j - 1)] + 1;
            let up = cost[idx(i - 1, j)] + 1;
            let (best, d) = [(diag, 1u8), (left, 2u8), (up, 3u8)]
                .into_iter()
                .min_by_key(|(c, _)| *c)
                .expect("non-empty");
            cost[idx(i, j)] = best;
            dir[idx(i, j)] = d;
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match dir[idx(i, j)] {
            1 => {
                pairs.push((v_sents[i - 1], Some(o_sents[j - 1])));
                i -= 1;
                j -= 1;
            }
            2 => {
                j -= 1;
            }
            _ => {
                pairs.push((v_sents[i - 1], None));
                i -= 1;
            }
        }
    }
    pairs.reverse();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_align_to_identity() {
        let map = align("take your meds", "take your meds").unwrap();
        assert!(map.is_identity());
        assert_eq!(map.confidence, 1.0);
    }

    #[test]
    fn typo_fix_maps_span_back() {
        // variant is the corrected text, original has the typo
        let variant = "take your medications";
        let original = "take your medictaions";
        let map = align(variant, original).unwrap();
        assert!(map.confidence >= 19.0 / 21.0);
        let spans = vec![SpanAnnotation::new(10, 21, None)]; // "medications"
        let (projected, dropped) = project_spans(&spans, &map);
        assert!(dropped.is_empty());
        assert_eq!(projected, vec![SpanAnnotation::new(10, 21, None)]); // "medictaions"
    }

    #[test]
    fn unrelated_texts_fail_confidence() {
        match align("completely different sentence", "take Tylenol") {
            Err(AlignError::LowConfidence { .. }) => {}
            other => panic!("expected low confidence, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(align("", "x"), Err(AlignError::EmptyInput)));
    }

    #[test]
    fn inserted_variant_text_collapses() {
        // "XY" inserted in the variant has no original counterpart
        let variant = "abXYcd";
        let original = "abcd";
        let map = align_with_threshold(variant, original, 0.0).unwrap();
        let spans = vec![SpanAnnotation::new(2, 4, None)]; // "XY"
        let (projected, dropped) = project_spans(&spans, &map);
        assert!(projected.is_empty());
        assert_eq!(dropped.len(), 1);
    }

    #[test]
    fn span_over_match_and_insertion_keeps_matched_part() {
        let variant = "abXcd";
        let original = "abcd";
        let map = align_with_threshold(variant, original, 0.0).unwrap();
        // span over "bX" keeps "b"
        let (projected, _) = project_spans(&[SpanAnnotation::new(1, 3, None)], &map);
        assert_eq!(projected, vec![SpanAnnotation::new(1, 2, None)]);
    }

    #[test]
    fn projection_preserves_order() {
        let variant = "the dog saat on the mat";
        let original = "the dog sat on the mat";
        let map = align_with_threshold(variant, original, 0.0).unwrap();
        let spans = vec![
            SpanAnnotation::new(4, 7, None),
            SpanAnnotation::new(8, 12, None),
            SpanAnnotation::new(20, 23, None),
        ];
        let (projected, _) = project_spans(&spans, &map);
        for pair in projected.windows(2) {
            assert!(pair[0].start <= pair[1].start);
        }
    }

    #[test]
    fn sentence_mode_handles_long_identical_text() {
        let sentence = "This is a sentence about the hospital stay. ";
        let text: String = sentence.repeat(500); // ~22k chars
        let map = align(&text, &text).unwrap();
        assert!(map.confidence > 0.99);
        let n = text.chars().count();
        assert_eq!(map.map_start(0), Some(0));
        assert_eq!(map.map_end(n), Some(n));
        // interior boundaries stay in place
        assert_eq!(map.map_start(1000), Some(1000));
        assert_eq!(map.map_end(1000), Some(1000));
    }
}
