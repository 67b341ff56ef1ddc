//! Clinical-note preprocessing: split notes into context/summary pairs,
//! apply ordered cleaning rules, and report per-stage statistics.
//!
//! Rule patterns live in configuration, not code; see
//! `assets/prep_rules.toml` for the starter set.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::model::DocumentPair;

#[derive(Debug, thiserror::Error)]
pub enum PrepError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("rule {id}: {message}")]
    BadRule { id: String, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("note {note_id}: discharge instructions section missing")]
    SectionMissing { note_id: String },
}

/// How much of the note precedes the summary as context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Brief Hospital Course section only.
    Short,
    /// Everything before the Discharge Instructions header.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    PrefixStrip,
    HeadingStrip,
    PatternReplace,
    SuffixPrune,
    TemplateReject,
    LengthFilter,
    SectionRequire,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub stage: u32,
    pub kind: RuleKind,
    #[serde(default)]
    pub pattern: String,
    #[serde(default)]
    pub replacement: Option<String>,
    #[serde(default)]
    pub param: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RuleConfig {
    /// The published rule families are known to be incomplete; configs
    /// should say so explicitly.
    #[serde(default)]
    pub incomplete: bool,
    #[serde(default, rename = "rule")]
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub rule: Rule,
    regex: Option<Regex>,
}

pub fn compile_rules(rules: &[Rule]) -> Result<Vec<CompiledRule>, PrepError> {
    let mut compiled = Vec::with_capacity(rules.len());
    for rule in rules {
        let regex = match rule.kind {
            RuleKind::LengthFilter => {
                if rule.param.is_none() {
                    return Err(PrepError::BadRule {
                        id: rule.id.clone(),
                        message: "length_filter requires param".to_string(),
                    });
                }
                None
            }
            _ => {
                if rule.pattern.is_empty() {
                    return Err(PrepError::BadRule {
                        id: rule.id.clone(),
                        message: "pattern required".to_string(),
                    });
                }
                Some(
                    RegexBuilder::new(&rule.pattern)
                        .multi_line(true)
                        .build()
                        .map_err(|e| PrepError::BadRule {
                            id: rule.id.clone(),
                            message: e.to_string(),
                        })?,
                )
            }
        };
        compiled.push(CompiledRule {
            rule: rule.clone(),
            regex,
        });
    }
    compiled.sort_by_key(|c| c.rule.stage);
    Ok(compiled)
}

pub fn load_rules(reader: impl Read) -> Result<(Vec<CompiledRule>, bool), PrepError> {
    let mut text = String::new();
    BufReader::new(reader)
        .read_to_string(&mut text)
        .map_err(PrepError::Io)?;
    let config: RuleConfig = toml::from_str(&text).map_err(|e| PrepError::Config(e.to_string()))?;
    Ok((compile_rules(&config.rules)?, config.incomplete))
}

const DI_HEADER: &str = r"(?mi)^\s*discharge instructions:?\s*$";
const BHC_HEADER: &str = r"(?mi)^\s*brief hospital course:?\s*$";
const ANY_HEADER: &str = r"(?mi)^\s*[A-Za-z][A-Za-z /-]{2,40}:\s*$";

/// Split a note into context and summary. Headers are matched
/// case-insensitively at line start with an optional trailing colon.
pub fn split_sections(
    note_id: &str,
    note: &str,
    mode: ContextMode,
) -> Result<(String, String, Vec<String>), PrepError> {
    let di_re = Regex::new(DI_HEADER).expect("static pattern");
    let Some(di_header) = di_re.find(note) else {
        return Err(PrepError::SectionMissing {
            note_id: note_id.to_string(),
        });
    };
    let summary = note[di_header.end()..].trim().to_string();
    let before = &note[..di_header.start()];
    let mut warnings = Vec::new();
    let context = match mode {
        ContextMode::Full => before.trim().to_string(),
        ContextMode::Short => {
            let bhc_re = Regex::new(BHC_HEADER).expect("static pattern");
            match bhc_re.find(before) {
                Some(bhc_header) => {
                    let body = &before[bhc_header.end()..];
                    // section ends at the next header line, if any
                    let header_re = Regex::new(ANY_HEADER).expect("static pattern");
                    let end = header_re.find(body).map_or(body.len(), |m| m.start());
                    body[..end].trim().to_string()
                }
                None => String::new(),
            }
        }
    };
    if context.is_empty() {
        warnings.push(format!("note {note_id}: empty context section"));
    }
    Ok((context, summary, warnings))
}

/// Result of running the rule list over one summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Kept {
        text: String,
        /// Ids of rules that edited the text, in application order.
        edits: Vec<String>,
    },
    Rejected {
        stage: u32,
        rule_id: String,
    },
}

fn apply_one(rule: &CompiledRule, text: &str) -> Result<Option<String>, (u32, String)> {
    let reject = || Err((rule.rule.stage, rule.rule.id.clone()));
    match rule.rule.kind {
        RuleKind::PrefixStrip => {
            let re = rule.regex.as_ref().expect("compiled");
            match re.find(text) {
                Some(m) if m.start() == 0 => Ok(Some(text[m.end()..].trim_start().to_string())),
                _ => Ok(None),
            }
        }
        RuleKind::HeadingStrip => {
            let re = rule.regex.as_ref().expect("compiled");
            if !re.is_match(text) {
                return Ok(None);
            }
            let kept: Vec<&str> = text.lines().filter(|line| !re.is_match(line)).collect();
            Ok(Some(kept.join("\n")))
        }
        RuleKind::PatternReplace => {
            let re = rule.regex.as_ref().expect("compiled");
            if !re.is_match(text) {
                return Ok(None);
            }
            let replacement = rule.rule.replacement.as_deref().unwrap_or("");
            Ok(Some(re.replace_all(text, replacement).into_owned()))
        }
        RuleKind::SuffixPrune => {
            let re = rule.regex.as_ref().expect("compiled");
            match re.find(text) {
                Some(m) => Ok(Some(text[..m.start()].trim_end().to_string())),
                None => Ok(None),
            }
        }
        RuleKind::TemplateReject => {
            let re = rule.regex.as_ref().expect("compiled");
            if re.is_match(text) {
                reject()
            } else {
                Ok(None)
            }
        }
        RuleKind::LengthFilter => {
            let min = rule.rule.param.expect("validated");
            if text.chars().count() < min {
                reject()
            } else {
                Ok(None)
            }
        }
        // evaluated against the context in run_pipeline, not here
        RuleKind::SectionRequire => Ok(None),
    }
}

/// Apply rules in stage order. A rejection stops processing; any length
/// filter is re-checked after every stage that changed the text.
pub fn apply_rules(summary: &str, rules: &[CompiledRule]) -> Outcome {
    let length_filters: Vec<&CompiledRule> = rules
        .iter()
        .filter(|r| r.rule.kind == RuleKind::LengthFilter)
        .collect();
    let mut text = summary.to_string();
    let mut edits = Vec::new();
    let mut stage_start = 0usize;
    while stage_start < rules.len() {
        let stage = rules[stage_start].rule.stage;
        let stage_end = rules[stage_start..]
            .iter()
            .position(|r| r.rule.stage != stage)
            .map_or(rules.len(), |p| stage_start + p);
        let mut stage_changed = false;
        for rule in &rules[stage_start..stage_end] {
            match apply_one(rule, &text) {
                Ok(Some(next)) => {
                    if next != text {
                        text = next;
                        edits.push(rule.rule.id.clone());
                        stage_changed = true;
                    }
                }
                Ok(None) => {}
                Err((stage, rule_id)) => return Outcome::Rejected { stage, rule_id },
            }
        }
        if stage_changed {
            for filter in &length_filters {
                if let Err((_, rule_id)) = apply_one(filter, &text) {
                    return Outcome::Rejected { stage, rule_id };
                }
            }
        }
        stage_start = stage_end;
    }
    Outcome::Kept { text, edits }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StageCount {
    pub entered: u64,
    pub rejected: u64,
    pub transformed: u64,
}

/// Per-stage accounting; stage 1 is the section split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StageStats {
    pub stages: BTreeMap<u32, StageCount>,
    pub kept: u64,
}

impl StageStats {
    fn enter(&mut self, stage: u32) {
        self.stages.entry(stage).or_default().entered += 1;
    }

    fn reject(&mut self, stage: u32) {
        self.stages.entry(stage).or_default().rejected += 1;
    }

    /// entered(k+1) = entered(k) - rejected(k) for consecutive stages.
    pub fn telescopes(&self) -> bool {
        let counts: Vec<&StageCount> = self.stages.values().collect();
        counts.windows(2).all(|w| w[1].entered == w[0].entered - w[0].rejected)
            && counts
                .last()
                .is_none_or(|c| self.kept == c.entered - c.rejected)
    }
}

/// Raw input record: one note.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoteRecord {
    pub note_id: String,
    pub text: String,
}

pub fn read_notes(reader: impl Read) -> Result<Vec<NoteRecord>, PrepError> {
    let reader = BufReader::new(reader);
    let mut notes = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let note: NoteRecord = serde_json::from_str(&line).map_err(|e| PrepError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        notes.push(note);
    }
    Ok(notes)
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub dataset: Vec<DocumentPair>,
    pub stats: StageStats,
    pub warnings: Vec<String>,
}

pub const SPLIT_STAGE: u32 = 1;

/// Run the full pipeline: split, clean, filter. Deterministic given the
/// corpus order; output order equals input order.
pub fn run_pipeline(
    notes: &[NoteRecord],
    rules: &[CompiledRule],
    mode: ContextMode,
) -> PipelineOutput {
    let section_requires: Vec<&CompiledRule> = rules
        .iter()
        .filter(|r| r.rule.kind == RuleKind::SectionRequire)
        .collect();
    let mut output = PipelineOutput {
        dataset: Vec::new(),
        stats: StageStats::default(),
        warnings: Vec::new(),
    };
    // make the rule stages visible in the stats even when nothing reaches
    // them
    for rule in rules {
        output.stats.stages.entry(rule.rule.stage).or_default();
    }
    for note in notes {
        output.stats.enter(SPLIT_STAGE);
        let (context, summary) = match split_sections(&note.note_id, &note.text, mode) {
            Ok((context, summary, warnings)) => {
                output.warnings.extend(warnings);
                (context, summary)
            }
            Err(PrepError::SectionMissing { .. }) => {
                output.stats.reject(SPLIT_STAGE);
                continue;
            }
            Err(e) => {
                output.warnings.push(format!("note {}: {e}", note.note_id));
                output.stats.reject(SPLIT_STAGE);
                continue;
            }
        };
        let mut entered_stage = None;
        for rule in rules {
            if entered_stage != Some(rule.rule.stage) {
                output.stats.enter(rule.rule.stage);
                entered_stage = Some(rule.rule.stage);
            }
        }
        match apply_rules(&summary, rules) {
            Outcome::Rejected { stage, .. } => {
                output.stats.reject(stage);
                // stages after the rejection were never entered
                for later in output
                    .stats
                    .stages
                    .range_mut((stage + 1)..)
                    .map(|(_, c)| c)
                {
                    later.entered -= 1;
                }
            }
            Outcome::Kept { text, edits } => {
                let mut rejected = false;
                for rule in &section_requires {
                    let re = rule.regex.as_ref().expect("compiled");
                    if !re.is_match(&context) {
                        output.stats.reject(rule.rule.stage);
                        for later in output
                            .stats
                            .stages
                            .range_mut((rule.rule.stage + 1)..)
                            .map(|(_, c)| c)
                        {
                            later.entered -= 1;
                        }
                        rejected = true;
                        break;
                    }
                }
                if rejected {
                    continue;
                }
                if !edits.is_empty() {
                    for id in &edits {
                        let stage = rules
                            .iter()
                            .find(|r| &r.rule.id == id)
                            .map(|r| r.rule.stage)
                            .expect("edit rule exists");
                        output.stats.stages.entry(stage).or_default().transformed += 1;
                    }
                }
                output.stats.kept += 1;
                output
                    .dataset
                    .push(DocumentPair::new(note.note_id.clone(), context, text));
            }
        }
    }
    output
}

pub const ANNO_MAX_CONTEXT: usize = 4000;
pub const ANNO_MIN_SUMMARY: usize = 600;

/// Annotation subset: short contexts, long summaries; bounds inclusive.
pub fn filter_anno_subset(dataset: &[DocumentPair]) -> Vec<DocumentPair> {
    dataset
        .iter()
        .filter(|d| {
            d.context.chars().count() <= ANNO_MAX_CONTEXT
                && d.summary.chars().count() >= ANNO_MIN_SUMMARY
        })
        .cloned()
        .collect()
}

/// Text table mirroring the pipeline flow chart.
pub fn render_stage_stats(stats: &StageStats, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{:<8} {:>10} {:>10} {:>12}", "stage", "entered", "rejected", "transformed")?;
    for (stage, count) in &stats.stages {
        writeln!(
            out,
            "{:<8} {:>10} {:>10} {:>12}",
            stage, count.entered, count.rejected, count.transformed
        )?;
    }
    writeln!(out, "kept     {:>10}", stats.kept)
}
