//! Class-agnostic hallucination detection baseline: flag summary entity
//! mentions whose concepts do not appear in the context, optionally
//! unifying concepts by embedding similarity.
//!
//! The recognizer is a deterministic gazetteer (leftmost-longest,
//! word-boundary matches, case-insensitive over whitespace-normalized
//! surface forms), not a statistical model. External recognizer output
//! can be fed in through the mention-file interface instead.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::model::{AnnotationSet, DocumentPair, SpanAnnotation};

pub const DEFAULT_ANNOTATOR: &str = "entity-baseline";

#[derive(Debug, thiserror::Error)]
pub enum EntityError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("similarity grid is empty")]
    EmptyGrid,
}

/// Surface-form dictionary mapping mentions to concepts.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    /// normalized surface tokens -> (concept_id, semantic_type)
    entries: HashMap<Vec<String>, (String, String)>,
    /// Allowed semantic types; empty means all types pass.
    pub semantic_type_filter: BTreeSet<String>,
    max_tokens: usize,
}

impl Lexicon {
    /// Parse tab-separated `surface<TAB>concept_id<TAB>semantic_type`
    /// lines.
    pub fn read(reader: impl Read) -> Result<Lexicon, EntityError> {
        let reader = BufReader::new(reader);
        let mut lexicon = Lexicon::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(surface), Some(concept), Some(sem_type)) =
                (fields.next(), fields.next(), fields.next())
            else {
                return Err(EntityError::Format {
                    line: i,
                    message: "expected surface<TAB>concept_id<TAB>semantic_type".to_string(),
                });
            };
            if surface.trim().is_empty() {
                return Err(EntityError::Format {
                    line: i,
                    message: "empty surface form".to_string(),
                });
            }
            lexicon.insert(surface, concept, sem_type);
        }
        Ok(lexicon)
    }

    pub fn insert(&mut self, surface: &str, concept_id: &str, semantic_type: &str) {
        let tokens = normalize_tokens(surface);
        self.max_tokens = self.max_tokens.max(tokens.len());
        self.entries
            .insert(tokens, (concept_id.to_string(), semantic_type.to_string()));
    }

    pub fn with_type_filter(mut self, types: impl IntoIterator<Item = String>) -> Self {
        self.semantic_type_filter = types.into_iter().collect();
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn type_allowed(&self, semantic_type: &str) -> bool {
        self.semantic_type_filter.is_empty() || self.semantic_type_filter.contains(semantic_type)
    }
}

fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

/// A recognized entity mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    /// Character offsets into the source text.
    pub start: usize,
    pub end: usize,
    pub concept_id: String,
    pub semantic_type: String,
}

/// Word token with character offsets.
struct WordToken {
    start: usize,
    end: usize,
    normalized: String,
}

fn word_tokens(text: &str) -> Vec<WordToken> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, String)> = None;
    for (pos, c) in text.chars().enumerate() {
        if c.is_alphanumeric() || c == '-' || c == '\'' {
            match &mut current {
                Some((_, buf)) => buf.extend(c.to_lowercase()),
                None => current = Some((pos, c.to_lowercase().collect())),
            }
        } else if let Some((start, buf)) = current.take() {
            tokens.push(WordToken {
                start,
                end: pos,
                normalized: buf,
            });
        }
    }
    if let Some((start, buf)) = current {
        tokens.push(WordToken {
            start,
            end: text.chars().count(),
            normalized: buf,
        });
    }
    tokens
}

/// Leftmost-longest, non-overlapping dictionary matches over word
/// boundaries, filtered by the lexicon's semantic-type filter.
pub fn recognize(text: &str, lexicon: &Lexicon) -> Vec<EntityMention> {
    let tokens = word_tokens(text);
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut matched: Option<(usize, &(String, String))> = None;
        let max_len = lexicon.max_tokens.min(tokens.len() - i);
        for window in (1..=max_len).rev() {
            let key: Vec<String> = tokens[i..i + window]
                .iter()
                .map(|t| t.normalized.clone())
                .collect();
            if let Some(entry) = lexicon.entries.get(&key) {
                if lexicon.type_allowed(&entry.1) {
                    matched = Some((window, entry));
                    break;
                }
            }
        }
        match matched {
            Some((window, (concept_id, semantic_type))) => {
                mentions.push(EntityMention {
                    start: tokens[i].start,
                    end: tokens[i + window - 1].end,
                    concept_id: concept_id.clone(),
                    semantic_type: semantic_type.clone(),
                });
                i += window;
            }
            None => i += 1,
        }
    }
    mentions
}

/// Dense concept embeddings, all with the same dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    pub dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    /// Parse an embedding file: a header line with the dimension, then
    /// `concept_id v1 .. vd` lines with space-separated decimal floats.
    pub fn read(reader: impl Read) -> Result<EmbeddingStore, EntityError> {
        let mut reader = BufReader::new(reader);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let dimension: usize = header.trim().parse().map_err(|_| EntityError::Format {
            line: 0,
            message: format!("expected dimension header, got {header:?}"),
        })?;
        let mut store = EmbeddingStore {
            dimension,
            vectors: HashMap::new(),
        };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let concept = fields.next().expect("non-empty line").to_string();
            let vector: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| EntityError::Format {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if vector.len() != dimension {
                return Err(EntityError::Format {
                    line: i + 1,
                    message: format!("expected {} components, got {}", dimension, vector.len()),
                });
            }
            if vector.iter().all(|v| *v == 0.0) {
                return Err(EntityError::Format {
                    line: i + 1,
                    message: format!("zero vector for concept {concept}"),
                });
            }
            store.vectors.insert(concept, vector);
        }
        Ok(store)
    }

    pub fn insert(&mut self, concept_id: &str, vector: Vec<f64>) {
        self.dimension = vector.len();
        self.vectors.insert(concept_id.to_string(), vector);
    }

    pub fn get(&self, concept_id: &str) -> Option<&[f64]> {
        self.vectors.get(concept_id).map(|v| v.as_slice())
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (va, vb) = (self.get(a)?, self.get(b)?);
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        Some(dot / (na * nb))
    }
}

/// Detector settings. `tau` is the minimum cosine similarity for two
/// concepts to count as the same fact.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub tau: f64,
    pub use_embeddings: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            tau: 0.85,
            use_embeddings: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectOutcome {
    pub set: AnnotationSet,
    /// Concepts that fell back to exact-ID matching for lack of an
    /// embedding.
    pub missing_embeddings: Vec<String>,
}

impl DetectOutcome {
    fn new(doc_id: &str) -> Self {
        DetectOutcome {
            set: AnnotationSet::new(doc_id, DEFAULT_ANNOTATOR, Vec::new()),
            missing_embeddings: Vec::new(),
        }
    }
}

/// Flag summary entities absent from the context. A summary mention is a
/// hallucination iff no context mention shares its concept id and, when
/// embeddings are enabled, no context concept reaches cosine similarity
/// `tau` with it.
pub fn detect(
    doc: &DocumentPair,
    lexicon: &Lexicon,
    embeddings: Option<&EmbeddingStore>,
    cfg: &DetectorConfig,
) -> DetectOutcome {
    let context_mentions = recognize(&doc.context, lexicon);
    let summary_mentions = recognize(&doc.summary, lexicon);
    detect_from_mentions(doc, &context_mentions, &summary_mentions, embeddings, cfg)
}

/// Same decision rule, but over externally supplied mentions.
pub fn detect_from_mentions(
    doc: &DocumentPair,
    context_mentions: &[EntityMention],
    summary_mentions: &[EntityMention],
    embeddings: Option<&EmbeddingStore>,
    cfg: &DetectorConfig,
) -> DetectOutcome {
    let mut outcome = DetectOutcome::new(&doc.id);
    let context_concepts: HashSet<&str> = context_mentions
        .iter()
        .map(|m| m.concept_id.as_str())
        .collect();
    let embeddings = if cfg.use_embeddings { embeddings } else { None };
    let mut missing: BTreeSet<String> = BTreeSet::new();
    let mut spans = Vec::new();
    for mention in summary_mentions {
        if context_concepts.contains(mention.concept_id.as_str()) {
            continue;
        }
        let mut equivalent = false;
        if let Some(store) = embeddings {
            if store.get(&mention.concept_id).is_none() {
                missing.insert(mention.concept_id.clone());
            } else {
                for context_concept in &context_concepts {
                    match store.cosine(&mention.concept_id, context_concept) {
                        Some(sim) if sim >= cfg.tau => {
                            equivalent = true;
                            break;
                        }
                        Some(_) => {}
                        None => {
                            missing.insert(context_concept.to_string());
                        }
                    }
                }
            }
        }
        if !equivalent {
            spans.push(SpanAnnotation::new(mention.start, mention.end, None));
        }
    }
    outcome.set = AnnotationSet::new(&doc.id, DEFAULT_ANNOTATOR, spans);
    outcome.missing_embeddings = missing.into_iter().collect();
    outcome
}

/// An externally produced mention record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub doc_id: String,
    pub side: MentionSide,
    pub start: usize,
    pub end: usize,
    pub concept_id: String,
    pub semantic_type: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionSide {
    Context,
    Summary,
}

/// Parse line-delimited mention records for the detect bypass.
pub fn read_mentions(reader: impl Read) -> Result<Vec<MentionRecord>, EntityError> {
    let reader = BufReader::new(reader);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MentionRecord =
            serde_json::from_str(&line).map_err(|e| EntityError::Format {
                line: i,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, Serialize)]
pub struct TauTuning {
    pub tau: f64,
    pub f1: f64,
    /// True when every grid point scored zero; the smallest grid value is
    /// returned in that case.
    pub all_zero: bool,
}

/// Grid-search the similarity threshold against a dev set, maximizing
/// partial-match F1. Ties resolve to the smallest tau.
pub fn tune_tau(
    dev_gold: &[AnnotationSet],
    dev_docs: &[DocumentPair],
    lexicon: &Lexicon,
    embeddings: &EmbeddingStore,
    grid: &[f64],
) -> Result<TauTuning, EntityError> {
    if grid.is_empty() {
        return Err(EntityError::EmptyGrid);
    }
    let mut sorted_grid = grid.to_vec();
    sorted_grid.sort_by(|a, b| a.partial_cmp(b).expect("finite tau"));
    let mut best: Option<(f64, f64)> = None;
    for &tau in &sorted_grid {
        let cfg = DetectorConfig {
            tau,
            use_embeddings: true,
        };
        let pred: Vec<AnnotationSet> = dev_docs
            .iter()
            .map(|doc| detect(doc, lexicon, Some(embeddings), &cfg).set)
            .collect();
        let f1 = crate::eval::evaluate_corpus(dev_gold, &pred, crate::tagged::ClassMode::ClassAgnostic).f1;
        match best {
            Some((_, best_f1)) if f1 <= best_f1 => {}
            _ => best = Some((tau, f1)),
        }
    }
    let (tau, f1) = best.expect("grid non-empty");
    Ok(TauTuning {
        tau,
        f1,
        all_zero: f1 == 0.0,
    })
}
