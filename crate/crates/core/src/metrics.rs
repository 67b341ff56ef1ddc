//! Deterministic summarization metrics: ROUGE-1..4, ROUGE-L, SARI, and
//! corpus statistics.
//!
//! Tokenization is fixed for reproducibility: lowercase, split on
//! whitespace, strip leading/trailing punctuation, drop tokens that
//! become empty.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::model::deid_count;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScore {
    fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrfScore {
            precision,
            recall,
            f1,
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap precision/recall/F1.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> PrfScore {
    assert!(n >= 1, "n-gram order must be at least 1");
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    let cand_counts = ngram_counts(&cand, n);
    let ref_counts = ngram_counts(&refr, n);
    let overlap: u64 = cand_counts
        .iter()
        .map(|(g, c)| (*c).min(*ref_counts.get(g).unwrap_or(&0)))
        .sum();
    let cand_total: u64 = cand_counts.values().sum();
    let ref_total: u64 = ref_counts.values().sum();
    let precision = if cand_total == 0 {
        0.0
    } else {
        overlap as f64 / cand_total as f64
    };
    let recall = if ref_total == 0 {
        0.0
    } else {
        overlap as f64 / ref_total as f64
    };
    PrfScore::new(precision, recall)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(row[j])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// Longest-common-subsequence precision/recall/F1 over tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> PrfScore {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    let lcs = lcs_len(&cand, &refr) as f64;
    let precision = if cand.is_empty() { 0.0 } else { lcs / cand.len() as f64 };
    let recall = if refr.is_empty() { 0.0 } else { lcs / refr.len() as f64 };
    PrfScore::new(precision, recall)
}

/// SARI components for one n-gram order.
fn sari_components(source: &[String], candidate: &[String], references: &[Vec<String>], n: usize) -> (f64, f64, f64) {
    let src: HashSet<&[String]> = if source.len() >= n {
        source.windows(n).collect()
    } else {
        HashSet::new()
    };
    let cand: HashSet<&[String]> = if candidate.len() >= n {
        candidate.windows(n).collect()
    } else {
        HashSet::new()
    };
    // Fractional reference membership: share of references containing g.
    let mut ref_frac: HashMap<&[String], f64> = HashMap::new();
    let step = 1.0 / references.len() as f64;
    for reference in references {
        if reference.len() < n {
            continue;
        }
        let grams: HashSet<&[String]> = reference.windows(n).collect();
        for g in grams {
            *ref_frac.entry(g).or_insert(0.0) += step;
        }
    }

    // keep: n-grams of the source retained by the candidate, credited by
    // the fraction of references that also retain them.
    let kept: Vec<&&[String]> = cand.iter().filter(|g| src.contains(**g)).collect();
    let keep_num: f64 = kept
        .iter()
        .map(|g| ref_frac.get(**g).copied().unwrap_or(0.0))
        .sum();
    let keep_ref_total: f64 = src
        .iter()
        .map(|g| ref_frac.get(*g).copied().unwrap_or(0.0))
        .sum();
    let keep_p = ratio(keep_num, kept.len() as f64);
    let keep_r = ratio(keep_num, keep_ref_total);

    // add: n-grams new in the candidate, scored against n-grams any
    // reference added.
    let added: Vec<&&[String]> = cand.iter().filter(|g| !src.contains(**g)).collect();
    let add_num = added
        .iter()
        .filter(|g| ref_frac.get(***g).copied().unwrap_or(0.0) > 0.0)
        .count() as f64;
    let add_ref_total = ref_frac.keys().filter(|g| !src.contains(**g)).count() as f64;
    let add_p = ratio(add_num, added.len() as f64);
    let add_r = ratio(add_num, add_ref_total);

    // del: source n-grams the candidate dropped, credited by the fraction
    // of references that also dropped them. Precision only.
    let deleted: Vec<&&[String]> = src.iter().filter(|g| !cand.contains(**g)).collect();
    let del_num: f64 = deleted
        .iter()
        .map(|g| 1.0 - ref_frac.get(**g).copied().unwrap_or(0.0))
        .sum();
    let del_p = ratio(del_num, deleted.len() as f64);

    (f1(keep_p, keep_r), f1(add_p, add_r), del_p)
}

fn ratio(num: f64, denom: f64) -> f64 {
    if denom == 0.0 {
        0.0
    } else {
        num / denom
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// SARI in [0, 100]: keep-F1, add-F1, and delete-precision over n-gram
/// membership for n = 1..4, averaged.
pub fn sari(source: &str, candidate: &str, references: &[&str]) -> f64 {
    assert!(!references.is_empty(), "sari requires at least one reference");
    let src = tokenize(source);
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    let mut total = 0.0;
    for n in 1..=4 {
        let (keep, add, del) = sari_components(&src, &cand, &refs, n);
        total += (keep + add + del) / 3.0;
    }
    100.0 * total / 4.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub words: u64,
    pub sentences: u64,
    pub characters: u64,
    pub deid_count: u64,
}

/// Surface statistics over one text. Sentences are the non-empty
/// segments obtained by cutting at terminal punctuation (., !, ?)
/// followed by whitespace or end of text, and at line breaks; characters
/// are Unicode scalars.
pub fn corpus_stats(text: &str) -> CorpusStats {
    let mut sentences = 0u64;
    let mut pending = false;
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == '\n' {
            if pending {
                sentences += 1;
                pending = false;
            }
        } else if matches!(c, '.' | '!' | '?') {
            let next = chars.get(i + 1);
            if next.is_none_or(|n| n.is_whitespace()) && pending {
                sentences += 1;
                pending = false;
            }
        } else if !c.is_whitespace() {
            pending = true;
        }
    }
    if pending {
        sentences += 1;
    }
    CorpusStats {
        words: text.split_whitespace().count() as u64,
        sentences,
        characters: chars.len() as u64,
        deid_count: deid_count(text) as u64,
    }
}

/// Per-document metric bundle in the shape of the quantitative results
/// table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    /// Keyed "1".."4".
    pub rouge_n: BTreeMap<String, PrfScore>,
    pub rouge_l: PrfScore,
    pub sari: f64,
    pub words: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_scores: Option<BTreeMap<String, f64>>,
}

pub fn metric_report(source: &str, candidate: &str, reference: &str) -> MetricReport {
    let rouge_n = (1..=4)
        .map(|n| (n.to_string(), rouge_n(candidate, reference, n)))
        .collect();
    MetricReport {
        rouge_n,
        rouge_l: rouge_l(candidate, reference),
        sari: sari(source, candidate, &[reference]),
        words: tokenize(candidate).len() as u64,
        external_scores: None,
    }
}

/// Externally computed score (e.g. a neural similarity metric), never
/// recomputed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScore {
    pub doc_id: String,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

pub fn read_external_scores(reader: impl Read) -> Result<Vec<ExternalScore>, MetricsError> {
    let reader = BufReader::new(reader);
    let mut scores = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let score: ExternalScore =
            serde_json::from_str(&line).map_err(|e| MetricsError::Format {
                line: i,
                message: e.to_string(),
            })?;
        scores.push(score);
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rouge_1_hand_example() {
        let score = rouge_n("the cat sat", "the cat", 1);
        assert!((score.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(score.recall, 1.0);
        assert!((score.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rouge_identity_is_one() {
        for n in 1..=3 {
            let score = rouge_n("alpha beta gamma", "alpha beta gamma", n);
            assert_eq!((score.precision, score.recall, score.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn rouge_disjoint_is_zero() {
        let score = rouge_n("a b", "c d", 1);
        assert_eq!(score.f1, 0.0);
    }

    #[test]
    fn rouge_clips_repeated_grams() {
        // candidate repeats "the" three times, reference has it once
        let score = rouge_n("the the the", "the cat", 1);
        assert!((score.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((score.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_hand_example() {
        let score = rouge_l("a b c d", "a c d e");
        assert!((score.precision - 0.75).abs() < 1e-12);
        assert!((score.recall - 0.75).abs() < 1e-12);
        assert!((score.f1 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rouge_handles_empty_candidate() {
        assert_eq!(rouge_n("", "some text", 1).f1, 0.0);
        assert_eq!(rouge_l("", "some text").f1, 0.0);
    }

    #[test]
    fn recall_monotone_in_n() {
        let cand = "you were admitted to the hospital for chest pain";
        let refr = "you came to the hospital with chest pain and stayed";
        let mut prev = f64::INFINITY;
        for n in 1..=4 {
            let r = rouge_n(cand, refr, n).recall;
            assert!(r <= prev, "recall rose from n={} to n={}", n - 1, n);
            prev = r;
        }
    }

    #[test]
    fn tokenizer_strips_edge_punctuation() {
        assert_eq!(tokenize("Take Tylenol, twice."), vec!["take", "tylenol", "twice"]);
        assert_eq!(tokenize("___ (see below)"), vec!["see", "below"]);
    }

    #[test]
    fn sari_copy_beats_nothing_but_reference_beats_copy() {
        let source = "the doctor gave you a new medication for pain";
        let reference = "you got a new pain medication";
        let copy = sari(source, source, &[reference]);
        let perfect = sari(source, reference, &[reference]);
        assert!(perfect > copy, "{perfect} <= {copy}");
    }

    #[test]
    fn sari_empty_candidate_is_delete_only() {
        let source = "a b c d";
        let reference = "e f g h";
        let score = sari(source, "", &[reference]);
        // every source n-gram deleted and absent from the reference:
        // delete precision 1 at each n, keep/add zero.
        assert!((score - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn sari_is_reference_permutation_invariant() {
        let source = "you were admitted with pneumonia";
        let cand = "you had pneumonia";
        let a = sari(source, cand, &["you came in with pneumonia", "pneumonia brought you in"]);
        let b = sari(source, cand, &["pneumonia brought you in", "you came in with pneumonia"]);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn stats_hand_example() {
        let stats = corpus_stats("You were seen at ___. Take rest.\nCall us!");
        assert_eq!(stats.words, 9);
        assert_eq!(stats.sentences, 3);
        assert_eq!(stats.deid_count, 1);
        assert_eq!(stats.characters, 41);
    }

    #[test]
    fn stats_empty_text() {
        assert_eq!(corpus_stats(""), CorpusStats::default());
    }

    #[test]
    fn stats_counts_unicode_scalars() {
        assert_eq!(corpus_stats("naïve").characters, 5);
    }

    #[test]
    fn external_scores_round_trip() {
        let input = "{\"doc_id\":\"d1\",\"name\":\"bertscore\",\"value\":0.91}\n";
        let scores = read_external_scores(input.as_bytes()).unwrap();
        assert_eq!(scores.len(), 1);
        assert_eq!(scores[0].name, "bertscore");
    }

    #[test]
    fn bad_external_score_reports_line() {
        let input = "{\"doc_id\":\"d1\",\"name\":\"bertscore\",\"value\":0.91}\nnot json\n";
        let err = read_external_scores(input.as_bytes()).unwrap_err();
        assert!(matches!(err, MetricsError::Format { line: 1, .. }));
    }

    #[test]
    fn report_has_four_rouge_orders() {
        let report = metric_report("a b c", "a b", "a b d");
        assert_eq!(report.rouge_n.len(), 4);
        assert_eq!(report.words, 2);
    }
}
