//! Inter-annotator agreement statistics: interval Krippendorff's alpha
//! over per-summary hallucination counts and Likert ratings, and
//! cross-annotator span-overlap F1.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::eval::evaluate_corpus;
use crate::model::AnnotationSet;
use crate::tagged::ClassMode;

#[derive(Debug, thiserror::Error)]
pub enum AgreementError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("annotators cover different documents: {0}")]
    CoverageMismatch(String),
    #[error("record {index}: {message}")]
    Schema { index: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Result of an interval-alpha computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaResult {
    pub alpha: f64,
    /// Units contributing at least two pairable values.
    pub n_units: usize,
    pub n_values: usize,
    /// True when expected disagreement is zero (all values identical);
    /// alpha is reported as 1.0 in that case.
    pub degenerate: bool,
}

/// Interval Krippendorff's alpha over per-unit value lists.
///
/// `alpha = 1 - D_o / D_e` with squared-difference distance. Units with
/// fewer than two values are excluded from observed disagreement but
/// their values do not enter the pairable pool either, per the standard
/// formulation.
pub fn krippendorff_interval(units: &[Vec<f64>]) -> Result<AlphaResult, AgreementError> {
    let pairable: Vec<&Vec<f64>> = units.iter().filter(|u| u.len() >= 2).collect();
    if pairable.len() < 2 {
        return Err(AgreementError::InsufficientData(format!(
            "need at least 2 units with 2+ values, got {}",
            pairable.len()
        )));
    }
    let n: usize = pairable.iter().map(|u| u.len()).sum();
    // observed disagreement: within-unit ordered pairs, weighted 1/(m_u - 1)
    let mut observed = 0.0;
    for unit in &pairable {
        let m = unit.len();
        let mut unit_sum = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    unit_sum += (unit[i] - unit[j]).powi(2);
                }
            }
        }
        observed += unit_sum / (m as f64 - 1.0);
    }
    observed /= n as f64;
    // expected disagreement: ordered pairs over all pairable values
    let values: Vec<f64> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    let mut expected = 0.0;
    for i in 0..values.len() {
        for j in 0..values.len() {
            if i != j {
                expected += (values[i] - values[j]).powi(2);
            }
        }
    }
    expected /= (n * (n - 1)) as f64;
    if expected == 0.0 {
        return Ok(AlphaResult {
            alpha: 1.0,
            n_units: pairable.len(),
            n_values: n,
            degenerate: true,
        });
    }
    Ok(AlphaResult {
        alpha: 1.0 - observed / expected,
        n_units: pairable.len(),
        n_values: n,
        degenerate: false,
    })
}

/// Interval alpha over the number of annotated hallucinations per
/// summary. Each element of `annotators` is one annotator's sets; all
/// annotators must cover the same documents.
pub fn count_agreement(annotators: &[Vec<AnnotationSet>]) -> Result<AlphaResult, AgreementError> {
    if annotators.len() < 2 {
        return Err(AgreementError::InsufficientData(
            "need at least 2 annotators".to_string(),
        ));
    }
    let doc_ids = check_coverage(annotators)?;
    let mut units = Vec::with_capacity(doc_ids.len());
    for doc_id in &doc_ids {
        let unit: Vec<f64> = annotators
            .iter()
            .map(|sets| {
                sets.iter()
                    .find(|s| &s.doc_id == doc_id)
                    .map(|s| s.spans.len() as f64)
                    .expect("coverage checked")
            })
            .collect();
        units.push(unit);
    }
    krippendorff_interval(&units)
}

fn check_coverage(annotators: &[Vec<AnnotationSet>]) -> Result<Vec<String>, AgreementError> {
    let first: BTreeSet<&str> = annotators[0].iter().map(|s| s.doc_id.as_str()).collect();
    for (i, sets) in annotators.iter().enumerate().skip(1) {
        let ids: BTreeSet<&str> = sets.iter().map(|s| s.doc_id.as_str()).collect();
        if ids != first {
            let diff: Vec<&str> = first.symmetric_difference(&ids).copied().collect();
            return Err(AgreementError::CoverageMismatch(format!(
                "annotator {i} differs on documents {diff:?}"
            )));
        }
    }
    Ok(first.into_iter().map(String::from).collect())
}

/// F1 for the overlap of annotated spans between two annotators, using
/// the partial-matching scheme. Symmetric in class-agnostic mode.
pub fn span_overlap_f1(
    sets_a: &[AnnotationSet],
    sets_b: &[AnnotationSet],
    mode: ClassMode,
) -> Result<f64, AgreementError> {
    check_coverage(&[sets_a.to_vec(), sets_b.to_vec()])?;
    Ok(evaluate_corpus(sets_a, sets_b, mode).f1)
}

/// The five qualitative rating dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Relevance,
    Consistency,
    Simplification,
    Fluency,
    Coherence,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Relevance,
        Dimension::Consistency,
        Dimension::Simplification,
        Dimension::Fluency,
        Dimension::Coherence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Dimension::Relevance => "relevance",
            Dimension::Consistency => "consistency",
            Dimension::Simplification => "simplification",
            Dimension::Fluency => "fluency",
            Dimension::Coherence => "coherence",
        }
    }
}

/// One Likert rating by one annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub doc_id: String,
    pub annotator: String,
    pub dimension: Dimension,
    pub value: u8,
}

/// Parse line-delimited rating records, enforcing the 1..5 value range
/// and uniqueness per (doc, annotator, dimension).
pub fn read_ratings(reader: impl Read) -> Result<Vec<RatingRecord>, AgreementError> {
    let reader = BufReader::new(reader);
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RatingRecord =
            serde_json::from_str(&line).map_err(|e| AgreementError::Schema {
                index,
                message: e.to_string(),
            })?;
        if !(1..=5).contains(&record.value) {
            return Err(AgreementError::Schema {
                index,
                message: format!("rating value {} outside 1..5", record.value),
            });
        }
        let key = (
            record.doc_id.clone(),
            record.annotator.clone(),
            record.dimension,
        );
        if !seen.insert(key) {
            return Err(AgreementError::Schema {
                index,
                message: "duplicate (doc, annotator, dimension) record".to_string(),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Per-dimension and pooled alpha over Likert ratings. Dimensions with
/// insufficient data are reported as errors in place, not fatal.
#[derive(Debug, Serialize)]
pub struct LikertAlphas {
    pub per_dimension: BTreeMap<String, Option<AlphaResult>>,
    pub pooled: Option<AlphaResult>,
}

pub fn likert_alpha(ratings: &[RatingRecord]) -> LikertAlphas {
    let mut per_dimension = BTreeMap::new();
    let mut pooled_units: Vec<Vec<f64>> = Vec::new();
    for dim in Dimension::ALL {
        let mut units: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in ratings.iter().filter(|r| r.dimension == dim) {
            units.entry(&r.doc_id).or_default().push(r.value as f64);
        }
        let unit_values: Vec<Vec<f64>> = units.into_values().collect();
        pooled_units.extend(unit_values.iter().cloned());
        per_dimension.insert(
            dim.name().to_string(),
            krippendorff_interval(&unit_values).ok(),
        );
    }
    LikertAlphas {
        per_dimension,
        pooled: krippendorff_interval(&pooled_units).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpanAnnotation;

    #[test]
    fn perfect_agreement_is_one() {
        let units = vec![vec![1.0, 1.0], vec![3.0, 3.0], vec![2.0, 2.0]];
        let result = krippendorff_interval(&units).unwrap();
        assert_eq!(result.alpha, 1.0);
        assert!(!result.degenerate);
    }

    #[test]
    fn all_identical_values_are_degenerate() {
        let units = vec![vec![2.0, 2.0], vec![2.0, 2.0]];
        let result = krippendorff_interval(&units).unwrap();
        assert!(result.degenerate);
        assert_eq!(result.alpha, 1.0);
    }

    #[test]
    fn three_unit_example_matches_direct_computation() {
        // units {(1,2),(3,3),(2,4)}:
        //   D_o = (1/6) * (2*1/1 + 0 + 2*4/1) = 10/6
        //   values 1,2,3,3,2,4: ordered-pair squared-diff sum
        //     = 2n*sum(v^2) - 2*(sum v)^2 = 516 - 450 = 66
        //   D_e = 66 / (6*5) = 11/5
        let units = vec![vec![1.0, 2.0], vec![3.0, 3.0], vec![2.0, 4.0]];
        let result = krippendorff_interval(&units).unwrap();
        let expected = 1.0 - (10.0 / 6.0) / (11.0 / 5.0);
        assert!((result.alpha - expected).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let units = vec![vec![1.0, 2.0], vec![3.0, 3.0], vec![2.0, 4.0]];
        let shifted: Vec<Vec<f64>> = units
            .iter()
            .map(|u| u.iter().map(|v| v + 7.0).collect())
            .collect();
        let a = krippendorff_interval(&units).unwrap().alpha;
        let b = krippendorff_interval(&shifted).unwrap().alpha;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn single_value_units_are_excluded() {
        let units = vec![vec![1.0, 2.0], vec![9.0], vec![3.0, 3.0]];
        let pruned = vec![vec![1.0, 2.0], vec![3.0, 3.0]];
        let a = krippendorff_interval(&units).unwrap();
        let b = krippendorff_interval(&pruned).unwrap();
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.n_units, 2);
    }

    #[test]
    fn insufficient_data_is_an_error() {
        assert!(krippendorff_interval(&[vec![1.0, 2.0]]).is_err());
        assert!(krippendorff_interval(&[]).is_err());
    }

    #[test]
    fn identical_annotation_files_agree_perfectly() {
        let sets = vec![
            AnnotationSet::new("d1", "a", vec![SpanAnnotation::new(0, 2, None)]),
            AnnotationSet::new(
                "d2",
                "a",
                vec![SpanAnnotation::new(0, 2, None), SpanAnnotation::new(3, 5, None)],
            ),
        ];
        let result = count_agreement(&[sets.clone(), sets]).unwrap();
        assert_eq!(result.alpha, 1.0);
    }

    #[test]
    fn coverage_mismatch_is_detected() {
        let a = vec![AnnotationSet::new("d1", "a", vec![])];
        let b = vec![AnnotationSet::new("d2", "b", vec![])];
        assert!(matches!(
            count_agreement(&[a, b]),
            Err(AgreementError::CoverageMismatch(_))
        ));
    }

    #[test]
    fn overlap_f1_hand_example() {
        let a = vec![AnnotationSet::new(
            "d1",
            "a",
            vec![SpanAnnotation::new(0, 10, Some(crate::model::HallucinationClass::UnsupportedCondition))],
        )];
        let b = vec![AnnotationSet::new(
            "d1",
            "b",
            vec![SpanAnnotation::new(5, 12, Some(crate::model::HallucinationClass::UnsupportedTime))],
        )];
        assert_eq!(span_overlap_f1(&a, &b, ClassMode::ClassAgnostic).unwrap(), 0.5);
        // partial overlaps ignore class; only boundary matches check it
        let c = vec![AnnotationSet::new(
            "d1",
            "c",
            vec![SpanAnnotation::new(0, 10, Some(crate::model::HallucinationClass::UnsupportedTime))],
        )];
        assert_eq!(span_overlap_f1(&a, &c, ClassMode::ClassAware).unwrap(), 0.0);
    }

    #[test]
    fn duplicate_ratings_alpha_one() {
        let mut ratings = Vec::new();
        for doc in ["d1", "d2", "d3"] {
            for annotator in ["a1", "a2"] {
                for dim in Dimension::ALL {
                    ratings.push(RatingRecord {
                        doc_id: doc.to_string(),
                        annotator: annotator.to_string(),
                        dimension: dim,
                        value: (doc.len() % 5) as u8 + 1,
                    });
                }
            }
        }
        // make values vary across docs so alpha is non-degenerate
        ratings
            .iter_mut()
            .for_each(|r| r.value = (r.doc_id.as_bytes()[1] - b'0') % 5 + 1);
        let alphas = likert_alpha(&ratings);
        for result in alphas.per_dimension.values() {
            assert_eq!(result.unwrap().alpha, 1.0);
        }
        assert_eq!(alphas.pooled.unwrap().alpha, 1.0);
    }

    #[test]
    fn rating_value_range_enforced() {
        let input = r#"{"doc_id":"d1","annotator":"a1","dimension":"fluency","value":6}"#;
        assert!(read_ratings(input.as_bytes()).is_err());
    }
}
