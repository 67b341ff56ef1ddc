//! Span-level scoring of predicted annotation sets against gold, with
//! exact and partial matching.
//!
//! Matching per document: predicted spans with exactly the gold
//! boundaries pair up first (such pairs are unique because spans within a
//! set never overlap); the remaining spans are paired by a maximum
//! bipartite matching over the overlap graph, so the partial count is
//! maximal. Boundary-matched pairs score correct (or incorrect when the
//! classes differ in class-aware mode), overlap pairs score partial,
//! unmatched gold scores missed, unmatched predictions spurious.
//!
//! Precision counts half credit for partial matches:
//! `P = (COR + 0.5 PAR) / (COR + PAR + INC + SPU)` and symmetrically for
//! recall with MIS in the denominator.

use std::collections::{BTreeMap, HashMap};
use std::ops::Add;

use serde::Serialize;

use crate::model::{AnnotationSet, HallucinationClass, SpanAnnotation};
use crate::tagged::ClassMode;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("annotation sets reference different documents: {gold:?} vs {pred:?}")]
pub struct DocMismatch {
    pub gold: String,
    pub pred: String,
}

/// Partial-match tallies for one document or an aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EvalCounts {
    pub correct: u64,
    pub partial: u64,
    pub incorrect: u64,
    pub missed: u64,
    pub spurious: u64,
}

impl EvalCounts {
    pub fn gold_total(&self) -> u64 {
        self.correct + self.partial + self.incorrect + self.missed
    }

    pub fn pred_total(&self) -> u64 {
        self.correct + self.partial + self.incorrect + self.spurious
    }

    pub fn precision(&self) -> f64 {
        ratio(self.correct as f64 + 0.5 * self.partial as f64, self.pred_total())
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct as f64 + 0.5 * self.partial as f64, self.gold_total())
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }
}

impl Add for EvalCounts {
    type Output = EvalCounts;
    fn add(self, rhs: EvalCounts) -> EvalCounts {
        EvalCounts {
            correct: self.correct + rhs.correct,
            partial: self.partial + rhs.partial,
            incorrect: self.incorrect + rhs.incorrect,
            missed: self.missed + rhs.missed,
            spurious: self.spurious + rhs.spurious,
        }
    }
}

fn ratio(num: f64, denom: u64) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num / denom as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// How each gold span fared in the matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoldOutcome {
    Correct,
    Partial,
    Incorrect,
    Missed,
}

#[derive(Debug, Clone)]
pub struct MatchDetail {
    pub counts: EvalCounts,
    /// Outcome per gold span, in set order.
    pub gold_outcomes: Vec<GoldOutcome>,
}

/// Score one predicted set against one gold set.
pub fn match_document(
    gold: &AnnotationSet,
    pred: &AnnotationSet,
    mode: ClassMode,
) -> Result<EvalCounts, DocMismatch> {
    Ok(match_document_detailed(gold, pred, mode)?.counts)
}

pub fn match_document_detailed(
    gold: &AnnotationSet,
    pred: &AnnotationSet,
    mode: ClassMode,
) -> Result<MatchDetail, DocMismatch> {
    if gold.doc_id != pred.doc_id {
        return Err(DocMismatch {
            gold: gold.doc_id.clone(),
            pred: pred.doc_id.clone(),
        });
    }
    Ok(match_spans(&gold.spans, &pred.spans, mode))
}

/// Score predicted spans against gold spans without set metadata.
pub fn match_spans(
    gold: &[SpanAnnotation],
    pred: &[SpanAnnotation],
    mode: ClassMode,
) -> MatchDetail {
    let mut counts = EvalCounts::default();
    let mut gold_outcomes = vec![GoldOutcome::Missed; gold.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut gold_open = Vec::new();

    // exact boundary pairs first; unique because spans in a set are disjoint
    for (gi, g) in gold.iter().enumerate() {
        let exact = pred
            .iter()
            .enumerate()
            .find(|(pi, p)| !pred_used[*pi] && p.start == g.start && p.end == g.end);
        match exact {
            Some((pi, p)) => {
                pred_used[pi] = true;
                if mode == ClassMode::ClassAware && p.class != g.class {
                    counts.incorrect += 1;
                    gold_outcomes[gi] = GoldOutcome::Incorrect;
                } else {
                    counts.correct += 1;
                    gold_outcomes[gi] = GoldOutcome::Correct;
                }
            }
            None => gold_open.push(gi),
        }
    }

    // maximum matching over the remaining overlap graph; neighbors are
    // tried by decreasing overlap, then smallest start
    let mut adjacency: Vec<Vec<usize>> = Vec::with_capacity(gold_open.len());
    for &gi in &gold_open {
        let g = &gold[gi];
        let mut neighbors: Vec<(usize, usize)> = pred
            .iter()
            .enumerate()
            .filter(|(pi, p)| !pred_used[*pi] && p.overlaps(g))
            .map(|(pi, p)| (pi, g.end.min(p.end) - g.start.max(p.start)))
            .collect();
        neighbors.sort_by_key(|&(pi, overlap)| (std::cmp::Reverse(overlap), pred[pi].start));
        adjacency.push(neighbors.into_iter().map(|(pi, _)| pi).collect());
    }
    let mut pred_owner: HashMap<usize, usize> = HashMap::new(); // pred index -> index into gold_open
    for slot in 0..gold_open.len() {
        let mut visited = vec![false; gold_open.len()];
        try_augment(slot, &adjacency, &mut pred_owner, &mut visited);
    }
    for (&pi, &slot) in &pred_owner {
        pred_used[pi] = true;
        counts.partial += 1;
        gold_outcomes[gold_open[slot]] = GoldOutcome::Partial;
    }
    counts.missed = gold_outcomes
        .iter()
        .filter(|o| **o == GoldOutcome::Missed)
        .count() as u64;
    counts.spurious = pred_used.iter().filter(|u| !**u).count() as u64;

    debug_assert_eq!(counts.gold_total() as usize, gold.len());
    debug_assert_eq!(counts.pred_total() as usize, pred.len());
    MatchDetail {
        counts,
        gold_outcomes,
    }
}

fn try_augment(
    slot: usize,
    adjacency: &[Vec<usize>],
    pred_owner: &mut HashMap<usize, usize>,
    visited: &mut [bool],
) -> bool {
    if visited[slot] {
        return false;
    }
    visited[slot] = true;
    for &pi in &adjacency[slot] {
        match pred_owner.get(&pi).copied() {
            None => {
                pred_owner.insert(pi, slot);
                return true;
            }
            Some(owner) => {
                if try_augment(owner, adjacency, pred_owner, visited) {
                    pred_owner.insert(pi, slot);
                    return true;
                }
            }
        }
    }
    false
}

/// Corpus-level scores in the shape of the detection-results table.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mode: ClassMode,
    pub counts: EvalCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: BTreeMap<String, ClassScore>,
    /// Set when the gold side contains no spans at all.
    pub no_gold_spans: bool,
    pub documents: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassScore {
    pub recall: f64,
    pub support: u64,
    pub zero_support: bool,
}

/// Micro-aggregate matching across documents. Gold documents without a
/// prediction set score as all missed; prediction sets without gold
/// score as all spurious.
pub fn evaluate_corpus(
    gold_sets: &[AnnotationSet],
    pred_sets: &[AnnotationSet],
    mode: ClassMode,
) -> EvalReport {
    let preds: HashMap<&str, &AnnotationSet> = pred_sets
        .iter()
        .map(|s| (s.doc_id.as_str(), s))
        .collect();
    let gold_ids: std::collections::HashSet<&str> =
        gold_sets.iter().map(|s| s.doc_id.as_str()).collect();
    let empty: Vec<SpanAnnotation> = Vec::new();

    let mut counts = EvalCounts::default();
    let mut class_stats: BTreeMap<String, (f64, u64)> = HallucinationClass::ALL
        .iter()
        .map(|c| (c.canonical_name().to_string(), (0.0, 0)))
        .collect();
    let mut documents = 0usize;
    for gold in gold_sets {
        documents += 1;
        let pred_spans = preds
            .get(gold.doc_id.as_str())
            .map(|s| s.spans.as_slice())
            .unwrap_or(&empty);
        let detail = match_spans(&gold.spans, pred_spans, mode);
        counts = counts + detail.counts;
        // class recall is attributed from class-agnostic matching so that
        // unclassed predictions still earn credit
        let agnostic = if mode == ClassMode::ClassAgnostic {
            detail
        } else {
            match_spans(&gold.spans, pred_spans, ClassMode::ClassAgnostic)
        };
        for (span, outcome) in gold.spans.iter().zip(&agnostic.gold_outcomes) {
            if let Some(class) = span.class {
                let entry = class_stats
                    .get_mut(class.canonical_name())
                    .expect("all classes present");
                entry.1 += 1;
                entry.0 += match outcome {
                    GoldOutcome::Correct | GoldOutcome::Incorrect => 1.0,
                    GoldOutcome::Partial => 0.5,
                    GoldOutcome::Missed => 0.0,
                };
            }
        }
    }
    for pred in pred_sets {
        if !gold_ids.contains(pred.doc_id.as_str()) {
            documents += 1;
            counts.spurious += pred.spans.len() as u64;
        }
    }
    let per_class = class_stats
        .into_iter()
        .map(|(name, (credit, support))| {
            (
                name,
                ClassScore {
                    recall: if support == 0 { 0.0 } else { credit / support as f64 },
                    support,
                    zero_support: support == 0,
                },
            )
        })
        .collect();
    EvalReport {
        mode,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        per_class,
        no_gold_spans: counts.gold_total() == 0,
        counts,
        documents,
    }
}

/// Recall per gold class under class-agnostic matching of the prediction
/// sets. Classes without gold spans report 0 with a zero-support flag.
pub fn per_class_recall(
    gold_sets: &[AnnotationSet],
    pred_sets: &[AnnotationSet],
) -> BTreeMap<String, ClassScore> {
    evaluate_corpus(gold_sets, pred_sets, ClassMode::ClassAgnostic).per_class
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HallucinationClass::{UnsupportedCondition, UnsupportedNumber, UnsupportedTime};

    fn set(doc: &str, spans: Vec<SpanAnnotation>) -> AnnotationSet {
        AnnotationSet::new(doc, "t", spans)
    }

    #[test]
    fn identical_sets_are_all_correct() {
        let spans = vec![
            SpanAnnotation::new(0, 4, Some(UnsupportedNumber)),
            SpanAnnotation::new(6, 9, Some(UnsupportedTime)),
        ];
        let counts = match_document(
            &set("d", spans.clone()),
            &set("d", spans),
            ClassMode::ClassAware,
        )
        .unwrap();
        assert_eq!(counts.correct, 2);
        assert_eq!(counts.partial + counts.incorrect + counts.missed + counts.spurious, 0);
    }

    #[test]
    fn overlap_scores_partial_with_half_credit() {
        let counts = match_document(
            &set("d", vec![SpanAnnotation::new(0, 10, None)]),
            &set("d", vec![SpanAnnotation::new(5, 12, None)]),
            ClassMode::ClassAgnostic,
        )
        .unwrap();
        assert_eq!(counts.partial, 1);
        assert_eq!(counts.precision(), 0.5);
        assert_eq!(counts.recall(), 0.5);
        assert_eq!(counts.f1(), 0.5);
    }

    #[test]
    fn boundary_match_with_wrong_class_is_incorrect() {
        let counts = match_document(
            &set("d", vec![SpanAnnotation::new(0, 10, Some(UnsupportedCondition))]),
            &set("d", vec![SpanAnnotation::new(0, 10, Some(UnsupportedTime))]),
            ClassMode::ClassAware,
        )
        .unwrap();
        assert_eq!(counts.incorrect, 1);
        assert_eq!(counts.precision(), 0.0);
        assert_eq!(counts.recall(), 0.0);
    }

    #[test]
    fn doc_mismatch_is_an_error() {
        let gold = set("d1", vec![]);
        let pred = set("d2", vec![]);
        assert!(match_document(&gold, &pred, ClassMode::ClassAgnostic).is_err());
    }

    #[test]
    fn matching_is_maximal_not_greedy() {
        // a greedy max-overlap choice for the first gold span would leave
        // the second unmatched
        let gold = vec![
            SpanAnnotation::new(0, 10, None),
            SpanAnnotation::new(12, 30, None),
        ];
        let pred = vec![
            SpanAnnotation::new(0, 2, None),
            SpanAnnotation::new(7, 20, None),
        ];
        let detail = match_spans(&gold, &pred, ClassMode::ClassAgnostic);
        assert_eq!(detail.counts.partial, 2);
        assert_eq!(detail.counts.missed, 0);
        assert_eq!(detail.counts.spurious, 0);
    }

    #[test]
    fn micro_aggregation_matches_hand_count() {
        let gold = vec![
            set("d1", vec![SpanAnnotation::new(0, 5, None)]),
            set("d2", vec![SpanAnnotation::new(0, 5, None)]),
        ];
        let pred = vec![
            set("d1", vec![SpanAnnotation::new(0, 5, None)]),
            set("d2", vec![SpanAnnotation::new(20, 25, None)]),
        ];
        let report = evaluate_corpus(&gold, &pred, ClassMode::ClassAgnostic);
        assert_eq!(report.counts.correct, 1);
        assert_eq!(report.counts.missed, 1);
        assert_eq!(report.counts.spurious, 1);
        assert_eq!(report.precision, 0.5);
        assert_eq!(report.recall, 0.5);
        assert_eq!(report.f1, 0.5);
    }

    #[test]
    fn empty_everything_reports_zero_with_flag() {
        let report = evaluate_corpus(
            &[set("d1", vec![])],
            &[set("d1", vec![])],
            ClassMode::ClassAgnostic,
        );
        assert!(report.no_gold_spans);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn missing_prediction_set_scores_all_missed() {
        let gold = vec![set("d1", vec![SpanAnnotation::new(0, 5, None)])];
        let report = evaluate_corpus(&gold, &[], ClassMode::ClassAgnostic);
        assert_eq!(report.counts.missed, 1);
        assert_eq!(report.recall, 0.0);
    }

    #[test]
    fn per_class_recall_gives_half_credit_for_partial() {
        let gold = vec![set(
            "d1",
            vec![
                SpanAnnotation::new(0, 4, Some(UnsupportedNumber)),
                SpanAnnotation::new(10, 14, Some(UnsupportedNumber)),
            ],
        )];
        let pred = vec![set("d1", vec![SpanAnnotation::new(2, 6, None)])];
        let per_class = per_class_recall(&gold, &pred);
        let score = &per_class["unsupported_number"];
        assert_eq!(score.recall, 0.25);
        assert_eq!(score.support, 2);
        let empty = &per_class["incorrect_fact"];
        assert!(empty.zero_support);
        assert_eq!(empty.recall, 0.0);
    }

    #[test]
    fn swap_symmetry_in_agnostic_mode() {
        let a = vec![
            SpanAnnotation::new(0, 4, None),
            SpanAnnotation::new(8, 12, None),
        ];
        let b = vec![SpanAnnotation::new(2, 6, None)];
        let ab = match_spans(&a, &b, ClassMode::ClassAgnostic).counts;
        let ba = match_spans(&b, &a, ClassMode::ClassAgnostic).counts;
        assert_eq!(ab.correct, ba.correct);
        assert_eq!(ab.partial, ba.partial);
        assert_eq!(ab.missed, ba.spurious);
        assert_eq!(ab.spurious, ba.missed);
    }
}
