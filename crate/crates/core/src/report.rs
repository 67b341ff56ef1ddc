//! Text-table and structured report rendering. Column layouts mirror
//! the result tables of the accompanying evaluation: generation metrics,
//! per-class recall, detection scores, and the two agreement tables.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::agreement::LikertAlphas;
use crate::eval::EvalReport;
use crate::metrics::MetricReport;
use crate::model::HallucinationClass;

/// Generation-quality table columns.
pub const METRICS_COLUMNS: [&str; 10] = [
    "Model", "R-1", "R-2", "R-3", "R-4", "R-L", "BERT", "DeBERT", "SARI", "Words",
];

/// Per-class recall table columns.
pub const CLASS_RECALL_COLUMNS: [&str; 12] = [
    "Model", "cond.", "proc.", "medic.", "time", "location", "number", "name", "words", "other",
    "contrad.", "incorr.",
];

/// Detection score columns (repeated per dataset).
pub const DETECTION_SCORE_COLUMNS: [&str; 3] = ["Prec.", "Rec.", "F1"];

/// Span-annotation agreement table columns.
pub const SPAN_AGREEMENT_COLUMNS: [&str; 4] = [
    "Annotation Task",
    "Agreement (Kripp.-a)",
    "Class-agn. overlap (F1)",
    "Class-aw. overlap (F1)",
];

/// Likert agreement table columns.
pub const LIKERT_AGREEMENT_COLUMNS: [&str; 7] =
    ["", "Rel.", "Con.", "Sim.", "Flu.", "Coh.", "Total"];

fn format_row(cells: &[String], widths: &[usize]) -> String {
    let mut line = String::new();
    for (i, cell) in cells.iter().enumerate() {
        if i > 0 {
            line.push_str("  ");
        }
        if i == 0 {
            line.push_str(&format!("{:<width$}", cell, width = widths[i]));
        } else {
            line.push_str(&format!("{:>width$}", cell, width = widths[i]));
        }
    }
    line.trim_end().to_string()
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let header_cells: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    let mut out = format_row(&header_cells, &widths);
    out.push('\n');
    for row in rows {
        out.push_str(&format_row(row, &widths));
        out.push('\n');
    }
    out
}

fn pct(value: f64) -> String {
    format!("{:.1}", 100.0 * value)
}

/// One row of the generation-quality table; external neural scores are
/// ingested, never computed.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub model: String,
    pub report: MetricReport,
}

pub fn render_metrics_table(rows: &[MetricsRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let external = row.report.external_scores.as_ref();
            let ext = |name: &str| {
                external
                    .and_then(|m| m.get(name))
                    .map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v))
            };
            let rouge = |n: &str| {
                row.report
                    .rouge_n
                    .get(n)
                    .map_or("-".to_string(), |s| format!("{:.2}", 100.0 * s.f1))
            };
            vec![
                row.model.clone(),
                rouge("1"),
                rouge("2"),
                rouge("3"),
                rouge("4"),
                format!("{:.2}", 100.0 * row.report.rouge_l.f1),
                ext("BERT"),
                ext("DeBERT"),
                format!("{:.2}", row.report.sari),
                format!("{}", row.report.words),
            ]
        })
        .collect();
    render_table(&METRICS_COLUMNS, &body)
}

/// Class order used in the recall table, matching the column order.
pub const CLASS_COLUMN_ORDER: [HallucinationClass; 11] = [
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

#[derive(Debug, Clone, Serialize)]
pub struct ClassRecallRow {
    pub model: String,
    /// class canonical name -> recall in [0,1]
    pub recall: BTreeMap<String, f64>,
}

impl ClassRecallRow {
    pub fn from_report(model: impl Into<String>, report: &EvalReport) -> Self {
        let recall = report
            .per_class
            .iter()
            .map(|(name, score)| (name.clone(), score.recall))
            .collect();
        ClassRecallRow {
            model: model.into(),
            recall,
        }
    }
}

pub fn render_class_recall_table(rows: &[ClassRecallRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut cells = vec![row.model.clone()];
            for class in CLASS_COLUMN_ORDER {
                let value = row.recall.get(class.canonical_name()).copied().unwrap_or(0.0);
                cells.push(pct(value));
            }
            cells
        })
        .collect();
    render_table(&CLASS_RECALL_COLUMNS, &body)
}

/// Detection results over one or more evaluation datasets.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionRow {
    pub model: String,
    /// dataset name -> report, rendered in the order of `datasets`.
    pub reports: BTreeMap<String, EvalReport>,
}

pub fn render_detection_table(datasets: &[String], rows: &[DetectionRow]) -> String {
    let mut header: Vec<String> = vec!["Model".to_string()];
    for dataset in datasets {
        for column in DETECTION_SCORE_COLUMNS {
            header.push(format!("{dataset} {column}"));
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut cells = vec![row.model.clone()];
            for dataset in datasets {
                match row.reports.get(dataset) {
                    Some(report) => {
                        cells.push(pct(report.precision));
                        cells.push(pct(report.recall));
                        cells.push(pct(report.f1));
                    }
                    None => cells.extend(["-".to_string(), "-".to_string(), "-".to_string()]),
                }
            }
            cells
        })
        .collect();
    render_table(&header_refs, &body)
}

/// One row of the span-annotation agreement table.
#[derive(Debug, Clone, Serialize)]
pub struct SpanAgreementRow {
    pub task: String,
    pub alpha: f64,
    pub class_agnostic_f1: f64,
    pub class_aware_f1: f64,
}

pub fn render_span_agreement_table(rows: &[SpanAgreementRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            vec![
                row.task.clone(),
                format!("{:.3}", row.alpha),
                format!("{:.3}", row.class_agnostic_f1),
                format!("{:.3}", row.class_aware_f1),
            ]
        })
        .collect();
    render_table(&SPAN_AGREEMENT_COLUMNS, &body)
}

pub fn render_likert_agreement_table(alphas: &LikertAlphas) -> String {
    let dim = |name: &str| {
        alphas
            .per_dimension
            .get(name)
            .and_then(|r| r.as_ref())
            .map_or("-".to_string(), |r| format!("{:.3}", r.alpha))
    };
    let row = vec![
        "Agree. (Kr.-a)".to_string(),
        dim("relevance"),
        dim("consistency"),
        dim("simplification"),
        dim("fluency"),
        dim("coherence"),
        alphas
            .pooled
            .as_ref()
            .map_or("-".to_string(), |r| format!("{:.3}", r.alpha)),
    ];
    render_table(&LIKERT_AGREEMENT_COLUMNS, &[row])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agreement::{krippendorff_interval, AlphaResult};
    use crate::metrics::metric_report;
    use crate::model::{AnnotationSet, HallucinationClass, SpanAnnotation};
    use crate::tagged::ClassMode;

    #[test]
    fn metrics_table_has_expected_header() {
        let report = metric_report("a b c", "a b", "a b d");
        let table = render_metrics_table(&[MetricsRow {
            model: "test".to_string(),
            report,
        }]);
        let header = table.lines().next().unwrap();
        for column in METRICS_COLUMNS {
            assert!(header.contains(column), "missing column {column}");
        }
    }

    #[test]
    fn class_recall_table_has_eleven_class_columns() {
        let gold = vec![AnnotationSet::new(
            "d1",
            "g",
            vec![SpanAnnotation::new(
                0,
                4,
                Some(HallucinationClass::UnsupportedWord),
            )],
        )];
        let report = crate::eval::evaluate_corpus(&gold, &gold, ClassMode::ClassAware);
        let table = render_class_recall_table(&[ClassRecallRow::from_report("m", &report)]);
        let header = table.lines().next().unwrap();
        for column in CLASS_RECALL_COLUMNS {
            if !column.is_empty() {
                assert!(header.contains(column), "missing column {column}");
            }
        }
        assert!(table.lines().nth(1).unwrap().contains("100.0"));
    }

    #[test]
    fn detection_table_repeats_scores_per_dataset() {
        let gold = vec![AnnotationSet::new("d1", "g", vec![SpanAnnotation::new(0, 4, None)])];
        let report = crate::eval::evaluate_corpus(&gold, &gold, ClassMode::ClassAgnostic);
        let datasets = vec!["A".to_string(), "B".to_string()];
        let mut reports = BTreeMap::new();
        reports.insert("A".to_string(), report.clone());
        reports.insert("B".to_string(), report);
        let table = render_detection_table(&datasets, &[DetectionRow {
            model: "m".to_string(),
            reports,
        }]);
        let header = table.lines().next().unwrap();
        assert_eq!(header.matches("Prec.").count(), 2);
        assert_eq!(header.matches("Rec.").count(), 2);
        assert_eq!(header.matches("F1").count(), 2);
        assert_eq!(table.lines().nth(1).unwrap().matches("100.0").count(), 6);
    }

    #[test]
    fn span_agreement_table_shape() {
        let table = render_span_agreement_table(&[
            SpanAgreementRow {
                task: "MIMIC".to_string(),
                alpha: 0.629,
                class_agnostic_f1: 0.479,
                class_aware_f1: 0.245,
            },
            SpanAgreementRow {
                task: "Generated".to_string(),
                alpha: 0.826,
                class_agnostic_f1: 0.440,
                class_aware_f1: 0.271,
            },
        ]);
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains("0.629"));
        assert!(table.lines().next().unwrap().contains("Kripp.-a"));
    }

    #[test]
    fn likert_table_has_all_dimensions_plus_total() {
        let units = vec![vec![1.0, 2.0], vec![3.0, 3.0]];
        let alpha: AlphaResult = krippendorff_interval(&units).unwrap();
        let mut per_dimension = BTreeMap::new();
        for name in ["relevance", "consistency", "simplification", "fluency", "coherence"] {
            per_dimension.insert(name.to_string(), Some(alpha));
        }
        let alphas = LikertAlphas {
            per_dimension,
            pooled: Some(alpha),
        };
        let table = render_likert_agreement_table(&alphas);
        let header = table.lines().next().unwrap();
        for column in ["Rel.", "Con.", "Sim.", "Flu.", "Coh.", "Total"] {
            assert!(header.contains(column));
        }
        assert_eq!(table.lines().count(), 2);
    }
}
