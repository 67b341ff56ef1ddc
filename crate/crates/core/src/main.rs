//! Command-line front end for the hallucination annotation toolkit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use halluc::agreement::{likert_alpha, read_ratings, span_overlap_f1};
use halluc::align::{align_with_threshold, project_spans, DEFAULT_CONFIDENCE_THRESHOLD};
use halluc::entity::{
    detect, detect_from_mentions, read_mentions, tune_tau, DetectorConfig, EmbeddingStore, Lexicon,
    MentionSide,
};
use halluc::eval::evaluate_corpus;
use halluc::llm::client::{EndpointConfig, LlmClient, RunMode};
use halluc::llm::detect::{detect_batch, summarize_with_llm, DEFAULT_CONCURRENCY};
use halluc::llm::prompts::{Decoding, Exemplar, PromptSpec, PromptTask, DEFAULT_GUIDELINES};
use halluc::metrics::{metric_report, read_external_scores, MetricReport, PrfScore};
use halluc::model::{validate, AnnotationSet, DocumentPair};
use halluc::prep::{filter_anno_subset, load_rules, read_notes, render_stage_stats, run_pipeline, ContextMode as PrepContextMode};
use halluc::report::{
    render_class_recall_table, render_detection_table, render_likert_agreement_table,
    render_metrics_table, render_span_agreement_table, ClassRecallRow, DetectionRow, MetricsRow,
    SpanAgreementRow,
};
use halluc::run::{sample_shots, Manifest};
use halluc::standoff::{load_corpus, load_standoff, write_standoff};
use halluc::tagged::ClassMode;

/// Exit code 1: the inputs were readable but invalid.
#[derive(Debug)]
enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn val_err(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

#[derive(Parser)]
#[command(name = "halluc", version, about = "Span-level hallucination annotation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ClassAware,
    ClassAgnostic,
}

impl From<ModeArg> for ClassMode {
    fn from(mode: ModeArg) -> ClassMode {
        match mode {
            ModeArg::ClassAware => ClassMode::ClassAware,
            ModeArg::ClassAgnostic => ClassMode::ClassAgnostic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ContextModeArg {
    Short,
    Full,
}

#[derive(Args, Clone)]
struct EndpointArgs {
    /// Chat-completions base URL.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    endpoint: String,
    #[arg(long, default_value = "gpt-4")]
    model: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "LLM_API_KEY")]
    credential_env: String,
    /// Serve responses from this fixture directory; no network access.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Record live responses into this fixture directory.
    #[arg(long)]
    record: Option<PathBuf>,
}

impl EndpointArgs {
    fn client(&self) -> Result<LlmClient, CliError> {
        let config = EndpointConfig {
            base_url: self.endpoint.clone(),
            model: self.model.clone(),
            credential_env: self.credential_env.clone(),
            ..EndpointConfig::default()
        };
        let mode = match (&self.replay, &self.record) {
            (Some(dir), _) => RunMode::Replay(dir.clone()),
            (None, Some(dir)) => RunMode::Record(dir.clone()),
            (None, None) => RunMode::Live,
        };
        LlmClient::new(config, mode).map_err(io_err)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess raw notes into context/summary pairs.
    Prep {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long, value_name = "NOTES_JSONL")]
        input: PathBuf,
        #[arg(long, value_name = "DATASET_JSONL")]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "short")]
        context_mode: ContextModeArg,
    },
    /// Filter a dataset to the annotation subset (short context, long summary).
    Subset {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Entity-grounding detection baseline.
    DetectEntity {
        #[arg(long, value_name = "CORPUS_JSONL")]
        input: PathBuf,
        #[arg(long, value_name = "LEXICON_TSV")]
        lexicon: PathBuf,
        #[arg(long, value_name = "EMBEDDINGS_TXT")]
        embeddings: Option<PathBuf>,
        /// Externally recognized mentions; bypasses the gazetteer.
        #[arg(long, value_name = "MENTIONS_JSONL")]
        mentions: Option<PathBuf>,
        #[arg(long, default_value_t = 0.85)]
        tau: f64,
        /// Tune tau on this gold file over --grid instead of detecting.
        #[arg(long, value_name = "GOLD_JSONL")]
        tune: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// LLM-based detection with record/replay.
    DetectLlm {
        #[arg(long, value_name = "CORPUS_JSONL")]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "class-aware")]
        mode: ModeArg,
        #[arg(long)]
        cot: bool,
        /// Exemplar pool (JSONL of {document, summary, spans, cot_description}).
        #[arg(long, value_name = "EXEMPLARS_JSONL")]
        examples: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        shots: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the bundled guideline template.
        #[arg(long)]
        guidelines: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_CONCURRENCY)]
        concurrency: usize,
        #[command(flatten)]
        endpoint: EndpointArgs,
    },
    /// Generate patient summaries with an LLM.
    Summarize {
        #[arg(long, value_name = "CORPUS_JSONL")]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Exemplar pool (corpus JSONL); pairs are sampled from it.
        #[arg(long, value_name = "EXAMPLES_JSONL")]
        examples: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        shots: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        endpoint: EndpointArgs,
    },
    /// Score predicted annotations against gold.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "class-agnostic")]
        mode: ModeArg,
        /// Write the structured report here; the text table always prints.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Row label in the rendered tables.
        #[arg(long, default_value = "model")]
        name: String,
        /// Dataset label in the rendered tables.
        #[arg(long, default_value = "dataset")]
        dataset: String,
    },
    /// Inter-annotator agreement over spans and Likert ratings.
    Agree {
        /// First annotator's standoff file.
        #[arg(long)]
        a: Option<PathBuf>,
        /// Second annotator's standoff file.
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long, value_name = "RATINGS_JSONL")]
        ratings: Option<PathBuf>,
        #[arg(long, default_value = "annotation")]
        task: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarization metrics against reference summaries.
    Metrics {
        /// Reference corpus: id, context (source), summary (reference).
        #[arg(long)]
        corpus: PathBuf,
        /// Candidate corpus: same ids, summary holds the candidate text.
        #[arg(long)]
        candidates: PathBuf,
        /// Externally computed scores ({doc_id, name, value} JSONL).
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long, default_value = "model")]
        name: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Align a variant text against an original and project spans.
    Align {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        variant: PathBuf,
        #[arg(long, value_name = "SPANS_JSONL")]
        spans: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Validate annotation files against their corpus.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e.message());
            ExitCode::from(e.code())
        }
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| io_err(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(format!("{}: {e}", path.display())))
}

fn read_corpus(path: &Path) -> Result<Vec<DocumentPair>, CliError> {
    load_corpus(path).map_err(schema_or_io)
}

fn read_standoff_file(path: &Path) -> Result<Vec<AnnotationSet>, CliError> {
    load_standoff(path).map_err(schema_or_io)
}

fn schema_or_io(e: halluc::standoff::StandoffError) -> CliError {
    match e {
        halluc::standoff::StandoffError::Io(e) => io_err(e),
        other => val_err(other),
    }
}

fn write_manifest(
    subcommand: &str,
    config: serde_json::Value,
    inputs: &[&Path],
    seed: Option<u64>,
    output: &Path,
) -> Result<(), CliError> {
    let mut manifest = Manifest::new(subcommand, config);
    manifest.seed = seed;
    for input in inputs {
        manifest.add_input(input).map_err(io_err)?;
    }
    manifest.write_beside(output).map_err(io_err)?;
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let mut out = create(path)?;
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn load_exemplars(path: &Path) -> Result<Vec<Exemplar>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let mut exemplars = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let exemplar: Exemplar = serde_json::from_str(line)
            .map_err(|e| val_err(format!("{} line {i}: {e}", path.display())))?;
        exemplars.push(exemplar);
    }
    Ok(exemplars)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Prep {
            rules,
            input,
            output,
            context_mode,
        } => cmd_prep(&rules, &input, &output, context_mode),
        Command::Subset { input, output } => cmd_subset(&input, &output),
        Command::DetectEntity {
            input,
            lexicon,
            embeddings,
            mentions,
            tau,
            tune,
            grid,
            output,
        } => cmd_detect_entity(
            &input,
            &lexicon,
            embeddings.as_deref(),
            mentions.as_deref(),
            tau,
            tune.as_deref(),
            &grid,
            &output,
        ),
        Command::DetectLlm {
            input,
            output,
            mode,
            cot,
            examples,
            shots,
            seed,
            guidelines,
            threshold,
            concurrency,
            endpoint,
        } => cmd_detect_llm(
            &input,
            &output,
            mode.into(),
            cot,
            examples.as_deref(),
            shots,
            seed,
            guidelines.as_deref(),
            threshold,
            concurrency,
            &endpoint,
        ),
        Command::Summarize {
            input,
            output,
            examples,
            shots,
            seed,
            endpoint,
        } => cmd_summarize(&input, &output, examples.as_deref(), shots, seed, &endpoint),
        Command::Eval {
            gold,
            pred,
            mode,
            output,
            name,
            dataset,
        } => cmd_eval(&gold, &pred, mode.into(), output.as_deref(), &name, &dataset),
        Command::Agree {
            a,
            b,
            ratings,
            task,
            output,
        } => cmd_agree(a.as_deref(), b.as_deref(), ratings.as_deref(), &task, output.as_deref()),
        Command::Metrics {
            corpus,
            candidates,
            external,
            name,
            output,
        } => cmd_metrics(&corpus, &candidates, external.as_deref(), &name, output.as_deref()),
        Command::Align {
            original,
            variant,
            spans,
            threshold,
            output,
        } => cmd_align(&original, &variant, spans.as_deref(), threshold, output.as_deref()),
        Command::Validate {
            corpus,
            annotations,
        } => cmd_validate(&corpus, &annotations),
    }
}

fn cmd_prep(
    rules_path: &Path,
    input: &Path,
    output: &Path,
    context_mode: ContextModeArg,
) -> Result<(), CliError> {
    let (rules, incomplete) = load_rules(open(rules_path)?).map_err(val_err)?;
    if incomplete {
        eprintln!("note: rule config is marked incomplete");
    }
    let notes = read_notes(open(input)?).map_err(val_err)?;
    let mode = match context_mode {
        ContextModeArg::Short => PrepContextMode::Short,
        ContextModeArg::Full => PrepContextMode::Full,
    };
    let result = run_pipeline(&notes, &rules, mode);
    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    halluc::standoff::save_corpus(output, &result.dataset).map_err(schema_or_io)?;
    let mut stdout = std::io::stdout();
    render_stage_stats(&result.stats, &mut stdout).map_err(io_err)?;
    let config = serde_json::json!({
        "context_mode": match mode { PrepContextMode::Short => "short", PrepContextMode::Full => "full" },
        "stats": result.stats,
    });
    write_manifest("prep", config, &[rules_path, input], None, output)
}

fn cmd_subset(input: &Path, output: &Path) -> Result<(), CliError> {
    let dataset = read_corpus(input)?;
    let subset = filter_anno_subset(&dataset);
    println!("kept {} of {} records", subset.len(), dataset.len());
    halluc::standoff::save_corpus(output, &subset).map_err(schema_or_io)?;
    write_manifest(
        "subset",
        serde_json::json!({"max_context": 4000, "min_summary": 600}),
        &[input],
        None,
        output,
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_detect_entity(
    input: &Path,
    lexicon_path: &Path,
    embeddings_path: Option<&Path>,
    mentions_path: Option<&Path>,
    tau: f64,
    tune_path: Option<&Path>,
    grid: &[f64],
    output: &Path,
) -> Result<(), CliError> {
    let corpus = read_corpus(input)?;
    let lexicon = Lexicon::read(open(lexicon_path)?).map_err(val_err)?;
    let embeddings = embeddings_path
        .map(|p| EmbeddingStore::read(open(p)?).map_err(val_err))
        .transpose()?;
    let mentions = mentions_path
        .map(|p| read_mentions(open(p)?).map_err(val_err))
        .transpose()?;

    if let Some(gold_path) = tune_path {
        let gold = read_standoff_file(gold_path)?;
        let store = embeddings
            .as_ref()
            .ok_or_else(|| val_err("--tune requires --embeddings"))?;
        let tuning = tune_tau(&gold, &corpus, &lexicon, store, grid).map_err(val_err)?;
        if tuning.all_zero {
            eprintln!("warning: all grid points scored 0; returning smallest tau");
        }
        println!("tau* = {} (F1 {:.4})", tuning.tau, tuning.f1);
        let serialized = serde_json::to_string_pretty(&tuning).expect("tuning serializes");
        std::fs::write(output, serialized).map_err(io_err)?;
        let mut inputs = vec![input, lexicon_path, gold_path];
        if let Some(p) = embeddings_path {
            inputs.push(p);
        }
        return write_manifest(
            "detect-entity",
            serde_json::json!({"tune": true, "grid": grid}),
            &inputs,
            None,
            output,
        );
    }

    let cfg = DetectorConfig {
        tau,
        use_embeddings: embeddings.is_some(),
    };
    let mut sets = Vec::with_capacity(corpus.len());
    let mut missing: std::collections::BTreeSet<String> = Default::default();
    for doc in &corpus {
        let outcome = match &mentions {
            Some(all) => {
                let context: Vec<_> = all
                    .iter()
                    .filter(|m| m.doc_id == doc.id && m.side == MentionSide::Context)
                    .map(|m| halluc::entity::EntityMention {
                        start: m.start,
                        end: m.end,
                        concept_id: m.concept_id.clone(),
                        semantic_type: m.semantic_type.clone(),
                    })
                    .collect();
                let summary: Vec<_> = all
                    .iter()
                    .filter(|m| m.doc_id == doc.id && m.side == MentionSide::Summary)
                    .map(|m| halluc::entity::EntityMention {
                        start: m.start,
                        end: m.end,
                        concept_id: m.concept_id.clone(),
                        semantic_type: m.semantic_type.clone(),
                    })
                    .collect();
                detect_from_mentions(doc, &context, &summary, embeddings.as_ref(), &cfg)
            }
            None => detect(doc, &lexicon, embeddings.as_ref(), &cfg),
        };
        missing.extend(outcome.missing_embeddings);
        sets.push(outcome.set);
    }
    for concept in &missing {
        eprintln!("warning: no embedding for concept {concept}; exact matching used");
    }
    write_standoff(create(output)?, &sets).map_err(schema_or_io)?;
    let mut inputs = vec![input, lexicon_path];
    if let Some(p) = embeddings_path {
        inputs.push(p);
    }
    if let Some(p) = mentions_path {
        inputs.push(p);
    }
    write_manifest(
        "detect-entity",
        serde_json::json!({"tau": tau, "use_embeddings": cfg.use_embeddings}),
        &inputs,
        None,
        output,
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_detect_llm(
    input: &Path,
    output: &Path,
    mode: ClassMode,
    cot: bool,
    examples: Option<&Path>,
    shots: usize,
    seed: Option<u64>,
    guidelines_path: Option<&Path>,
    threshold: f64,
    concurrency: usize,
    endpoint: &EndpointArgs,
) -> Result<(), CliError> {
    let corpus = read_corpus(input)?;
    let guidelines = match guidelines_path {
        Some(p) => std::fs::read_to_string(p).map_err(io_err)?,
        None => DEFAULT_GUIDELINES.to_string(),
    };
    let mut spec = PromptSpec {
        task: PromptTask::Detection,
        mode,
        cot,
        shots: Vec::new(),
        decoding: Decoding::default(),
    };
    if shots > 0 {
        let pool_path = examples.ok_or_else(|| val_err("--shots requires --examples"))?;
        let seed = seed.ok_or_else(|| val_err("--shots requires --seed"))?;
        let pool = load_exemplars(pool_path)?;
        spec.shots = sample_shots(&pool, shots, seed).map_err(val_err)?;
    }
    let client = endpoint.client()?;
    let records = detect_batch(&corpus, &spec, &client, &guidelines, threshold, concurrency);
    let failures: Vec<&str> = records
        .iter()
        .filter(|r| r.diagnostics.error.is_some())
        .map(|r| r.doc_id.as_str())
        .collect();
    for record in &records {
        if let Some(error) = &record.diagnostics.error {
            eprintln!("warning: {}: {error}", record.doc_id);
        }
    }
    write_jsonl(output, &records)?;
    let mut inputs = vec![input];
    if let Some(p) = examples {
        inputs.push(p);
    }
    if let Some(p) = guidelines_path {
        inputs.push(p);
    }
    let config = serde_json::json!({
        "mode": mode, "cot": cot, "shots": shots, "threshold": threshold,
        "failed_docs": failures,
    });
    write_manifest("detect-llm", config, &inputs, seed, output)?;
    // a run where every document failed on transport should not exit 0
    if !records.is_empty() && records.iter().all(|r| r.diagnostics.error.is_some()) {
        return Err(io_err("all documents failed; see warnings above"));
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct SummaryRecord {
    doc_id: String,
    summary: String,
}

fn cmd_summarize(
    input: &Path,
    output: &Path,
    examples: Option<&Path>,
    shots: usize,
    seed: Option<u64>,
    endpoint: &EndpointArgs,
) -> Result<(), CliError> {
    let corpus = read_corpus(input)?;
    let shot_pairs: Vec<(String, String)> = if shots > 0 {
        let pool_path = examples.ok_or_else(|| val_err("--shots requires --examples"))?;
        let seed = seed.ok_or_else(|| val_err("--shots requires --seed"))?;
        let pool = read_corpus(pool_path)?;
        sample_shots(&pool, shots, seed)
            .map_err(val_err)?
            .into_iter()
            .map(|d| (d.context, d.summary))
            .collect()
    } else {
        Vec::new()
    };
    let client = endpoint.client()?;
    let mut records = Vec::with_capacity(corpus.len());
    for doc in &corpus {
        let summary = summarize_with_llm(doc, &shot_pairs, &client, Decoding::default())
            .map_err(io_err)?;
        records.push(SummaryRecord {
            doc_id: doc.id.clone(),
            summary,
        });
    }
    write_jsonl(output, &records)?;
    let mut inputs = vec![input];
    if let Some(p) = examples {
        inputs.push(p);
    }
    write_manifest(
        "summarize",
        serde_json::json!({"shots": shots}),
        &inputs,
        seed,
        output,
    )
}

fn cmd_eval(
    gold_path: &Path,
    pred_path: &Path,
    mode: ClassMode,
    output: Option<&Path>,
    name: &str,
    dataset: &str,
) -> Result<(), CliError> {
    let gold = read_standoff_file(gold_path)?;
    let pred = read_standoff_file(pred_path)?;
    let report = evaluate_corpus(&gold, &pred, mode);
    if report.no_gold_spans {
        eprintln!("warning: gold side contains no spans");
    }
    let datasets = vec![dataset.to_string()];
    let mut reports = BTreeMap::new();
    reports.insert(dataset.to_string(), report.clone());
    let row = DetectionRow {
        model: name.to_string(),
        reports,
    };
    print!("{}", render_detection_table(&datasets, &[row]));
    if mode == ClassMode::ClassAware {
        let recall_row = ClassRecallRow::from_report(name, &report);
        print!("\n{}", render_class_recall_table(&[recall_row]));
    }
    if let Some(path) = output {
        let serialized = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, serialized).map_err(io_err)?;
        write_manifest(
            "eval",
            serde_json::json!({"mode": mode}),
            &[gold_path, pred_path],
            None,
            path,
        )?;
    }
    Ok(())
}

fn cmd_agree(
    a_path: Option<&Path>,
    b_path: Option<&Path>,
    ratings_path: Option<&Path>,
    task: &str,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let mut structured = serde_json::Map::new();
    let mut inputs: Vec<&Path> = Vec::new();
    if let (Some(a_path), Some(b_path)) = (a_path, b_path) {
        let a = read_standoff_file(a_path)?;
        let b = read_standoff_file(b_path)?;
        let alpha = halluc::agreement::count_agreement(&[a.clone(), b.clone()])
            .map_err(val_err)?;
        let agnostic = span_overlap_f1(&a, &b, ClassMode::ClassAgnostic).map_err(val_err)?;
        let aware = span_overlap_f1(&a, &b, ClassMode::ClassAware).map_err(val_err)?;
        let row = SpanAgreementRow {
            task: task.to_string(),
            alpha: alpha.alpha,
            class_agnostic_f1: agnostic,
            class_aware_f1: aware,
        };
        print!("{}", render_span_agreement_table(&[row]));
        if alpha.degenerate {
            eprintln!("warning: expected disagreement is zero; alpha reported as 1.0");
        }
        structured.insert(
            "spans".to_string(),
            serde_json::json!({
                "task": task,
                "alpha": alpha,
                "class_agnostic_f1": agnostic,
                "class_aware_f1": aware,
            }),
        );
        inputs.push(a_path);
        inputs.push(b_path);
    }
    if let Some(ratings_path) = ratings_path {
        let ratings = read_ratings(open(ratings_path)?).map_err(val_err)?;
        let alphas = likert_alpha(&ratings);
        print!("{}", render_likert_agreement_table(&alphas));
        structured.insert(
            "likert".to_string(),
            serde_json::to_value(&alphas).expect("alphas serialize"),
        );
        inputs.push(ratings_path);
    }
    if structured.is_empty() {
        return Err(val_err("nothing to do: pass --a/--b and/or --ratings"));
    }
    if let Some(path) = output {
        let serialized = serde_json::to_string_pretty(&serde_json::Value::Object(structured))
            .expect("report serializes");
        std::fs::write(path, serialized).map_err(io_err)?;
        write_manifest("agree", serde_json::json!({"task": task}), &inputs, None, path)?;
    }
    Ok(())
}

fn mean_prf(scores: &[PrfScore]) -> PrfScore {
    let n = scores.len().max(1) as f64;
    let mut total = PrfScore::default();
    for score in scores {
        total.precision += score.precision;
        total.recall += score.recall;
        total.f1 += score.f1;
    }
    PrfScore {
        precision: total.precision / n,
        recall: total.recall / n,
        f1: total.f1 / n,
    }
}

fn cmd_metrics(
    corpus_path: &Path,
    candidates_path: &Path,
    external_path: Option<&Path>,
    name: &str,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let corpus = read_corpus(corpus_path)?;
    let candidates = read_corpus(candidates_path)?;
    let by_id: BTreeMap<&str, &DocumentPair> =
        candidates.iter().map(|d| (d.id.as_str(), d)).collect();
    let external = external_path
        .map(|p| read_external_scores(open(p)?).map_err(val_err))
        .transpose()?;
    let mut per_doc: Vec<MetricReport> = Vec::new();
    for reference in &corpus {
        let Some(candidate) = by_id.get(reference.id.as_str()) else {
            return Err(val_err(format!("no candidate for document {}", reference.id)));
        };
        per_doc.push(metric_report(
            &reference.context,
            &candidate.summary,
            &reference.summary,
        ));
    }
    if per_doc.is_empty() {
        return Err(val_err("empty corpus"));
    }
    // macro-average the per-document reports
    let mut rouge_n = BTreeMap::new();
    for n in 1..=4 {
        let key = n.to_string();
        let scores: Vec<PrfScore> = per_doc.iter().map(|r| r.rouge_n[&key]).collect();
        rouge_n.insert(key, mean_prf(&scores));
    }
    let rouge_l_scores: Vec<PrfScore> = per_doc.iter().map(|r| r.rouge_l).collect();
    let mut external_means: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    if let Some(scores) = &external {
        for score in scores {
            let entry = external_means.entry(score.name.clone()).or_insert((0.0, 0));
            entry.0 += score.value;
            entry.1 += 1;
        }
    }
    let aggregate = MetricReport {
        rouge_n,
        rouge_l: mean_prf(&rouge_l_scores),
        sari: per_doc.iter().map(|r| r.sari).sum::<f64>() / per_doc.len() as f64,
        words: (per_doc.iter().map(|r| r.words).sum::<u64>() as f64 / per_doc.len() as f64)
            .round() as u64,
        external_scores: if external_means.is_empty() {
            None
        } else {
            Some(
                external_means
                    .into_iter()
                    .map(|(name, (sum, count))| (name, sum / count as f64))
                    .collect(),
            )
        },
    };
    let row = MetricsRow {
        model: name.to_string(),
        report: aggregate.clone(),
    };
    print!("{}", render_metrics_table(&[row]));
    if let Some(path) = output {
        let structured = serde_json::json!({
            "model": name,
            "aggregate": aggregate,
            "per_document": corpus
                .iter()
                .zip(&per_doc)
                .map(|(doc, report)| serde_json::json!({"doc_id": doc.id, "report": report}))
                .collect::<Vec<_>>(),
        });
        let serialized =
            serde_json::to_string_pretty(&structured).expect("report serializes");
        std::fs::write(path, serialized).map_err(io_err)?;
        let mut inputs = vec![corpus_path, candidates_path];
        if let Some(p) = external_path {
            inputs.push(p);
        }
        write_manifest("metrics", serde_json::json!({"name": name}), &inputs, None, path)?;
    }
    Ok(())
}

fn cmd_align(
    original_path: &Path,
    variant_path: &Path,
    spans_path: Option<&Path>,
    threshold: f64,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let original = std::fs::read_to_string(original_path).map_err(io_err)?;
    let variant = std::fs::read_to_string(variant_path).map_err(io_err)?;
    let map = align_with_threshold(&variant, &original, threshold).map_err(val_err)?;
    println!("confidence {:.4}", map.confidence);
    if let Some(spans_path) = spans_path {
        let sets = read_standoff_file(spans_path)?;
        let mut projected = Vec::with_capacity(sets.len());
        for set in &sets {
            let (spans, dropped) = project_spans(&set.spans, &map);
            for drop in &dropped {
                eprintln!(
                    "warning: {}: dropped span ({}, {}): {}",
                    set.doc_id, drop.span.start, drop.span.end, drop.reason
                );
            }
            projected.push(AnnotationSet::new(&set.doc_id, &set.annotator, spans));
        }
        if let Some(path) = output {
            write_standoff(create(path)?, &projected).map_err(schema_or_io)?;
            write_manifest(
                "align",
                serde_json::json!({"threshold": threshold, "confidence": map.confidence}),
                &[original_path, variant_path, spans_path],
                None,
                path,
            )?;
        }
    }
    Ok(())
}

fn cmd_validate(corpus_path: &Path, annotations_path: &Path) -> Result<(), CliError> {
    let corpus = read_corpus(corpus_path)?;
    let by_id: BTreeMap<&str, &DocumentPair> = corpus.iter().map(|d| (d.id.as_str(), d)).collect();
    let sets = read_standoff_file(annotations_path)?;
    let mut violation_count = 0usize;
    for set in &sets {
        let Some(doc) = by_id.get(set.doc_id.as_str()) else {
            eprintln!("{}: no such document in corpus", set.doc_id);
            violation_count += 1;
            continue;
        };
        for violation in validate(set, doc) {
            eprintln!(
                "{}: span {}: {:?}: {}",
                set.doc_id, violation.span_index, violation.rule, violation.detail
            );
            violation_count += 1;
        }
    }
    if violation_count > 0 {
        return Err(val_err(format!("{violation_count} violation(s) found")));
    }
    println!("{} annotation sets valid", sets.len());
    Ok(())
}
