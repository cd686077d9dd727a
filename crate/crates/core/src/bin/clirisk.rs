use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use clirisk::embeddings::{save_embeddings, train_embeddings, Word2VecParams};
use clirisk::harness::experiment::ExperimentConfig;
use clirisk::harness::{
    corpus_fingerprint, generate_responses, run_experiment, sensitive_rule, split_by_command, CorpusSpec, SplitRatios,
};
use clirisk::metrics::{auc, evaluate_at, sweep, threshold_at_recall, write_curve_csv, MetricConfig};
use clirisk::models::{self, load_model, save_model, FeatureMatrix, ModelKind, ModelSpec, Parameters};
use clirisk::redactor::redact;
use clirisk::schema::{flatten_response, read_corpus, read_response, record_document, write_corpus, Document, FieldRecord};
use clirisk::tokenizer::{Tokenizer, TokenizerConfig};
use clirisk::transforms::{EmbeddingSource, FittedTransform, TransformConfig, TransformKind};

/// Field-level sensitivity models for command-line responses.
#[derive(Parser)]
#[command(name = "clirisk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus (JSONL field records).
    GenCorpus(GenCorpusArgs),
    /// Print the tokens of one or more identifiers.
    Tokenize(TokenizeArgs),
    /// Train word embeddings on the documents of a corpus.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Fit a transform and a model on a corpus and write the artifact.
    Train(TrainArgs),
    /// Run the transform x model grid, or score a corpus with one artifact.
    Evaluate(EvaluateArgs),
    /// Threshold sweep over scores.
    Sweep(SweepArgs),
    /// Mask sensitive values in a response document.
    Redact(RedactArgs),
    /// Print a model artifact's settings and top feature importances.
    InspectModel(InspectArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 5000)]
    records: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.035)]
    positive_rate: f64,
    /// Probability of flipping a positive label to negative.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    /// Number of distinct commands (default: one per 44 records).
    #[arg(long)]
    commands: Option<usize>,
    /// Comma-separated sensitive stems.
    #[arg(long, value_delimiter = ',')]
    stems: Option<Vec<String>>,
    /// Also write the generated responses, one JSON envelope per line.
    #[arg(long)]
    responses_out: Option<PathBuf>,
}

#[derive(Args)]
struct TokenizeArgs {
    #[arg(required = true)]
    text: Vec<String>,
    /// Keep the original capitalization.
    #[arg(long)]
    keep_case: bool,
}

#[derive(Args)]
struct TrainEmbeddingsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    transform: TransformKind,
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Embedding file for `we`; embeddings are trained on the corpus when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Share of commands held out to pick the threshold.
    #[arg(long, default_value_t = 0.2)]
    tune_fraction: f64,
    /// Pick the largest threshold keeping this tune recall instead of max F-beta.
    #[arg(long)]
    recall_floor: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    beta: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Score the corpus with this artifact instead of running the grid.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "bow,tfidf,we,bow-pf,tfidf-pf")]
    transforms: Vec<TransformKind>,
    #[arg(long, value_delimiter = ',', default_value = "lr,bt,nn")]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = 20)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw a new command split for every repetition.
    #[arg(long)]
    reseed_splits: bool,
    /// Write one tune-split curve CSV per run under <out-dir>/curves.
    #[arg(long)]
    curves: bool,
    /// Directory for runs.csv, cells.csv and report.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    beta: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// CSV with `score` and `label` columns.
    #[arg(long, conflicts_with_all = ["model", "corpus"])]
    scores: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    corpus: Option<PathBuf>,
    /// Curve CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.99)]
    recall_floor: f64,
}

#[derive(Args)]
struct RedactArgs {
    #[arg(long)]
    model: PathBuf,
    /// Response tree, or an envelope with command, module and response.
    #[arg(long)]
    response: PathBuf,
    #[arg(long)]
    command: Option<String>,
    #[arg(long)]
    module: Option<String>,
    /// Overrides the artifact's threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Tokenize(a) => tokenize(a),
        Command::TrainEmbeddings(a) => train_embeddings_cmd(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Redact(a) => redact_cmd(a),
        Command::InspectModel(a) => inspect(a),
    }
}

fn load_corpus(path: &Path) -> Result<Vec<FieldRecord>> {
    let records = read_corpus(path).with_context(|| format!("reading corpus {}", path.display()))?;
    if records.is_empty() {
        bail!("corpus {} is empty", path.display());
    }
    Ok(records)
}

fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let mut spec = CorpusSpec {
        record_count: a.records,
        positive_rate: a.positive_rate,
        label_noise_rate: a.noise,
        command_pool_size: a.commands,
        seed: a.seed,
        ..CorpusSpec::default()
    };
    if let Some(stems) = a.stems {
        spec.sensitive_stems = stems;
    }
    let responses = generate_responses(&spec)?;
    let records = clirisk::harness::generate_corpus(&spec)?;
    write_corpus(&a.out, &records)?;
    if let Some(path) = a.responses_out {
        let mut w = BufWriter::new(File::create(&path)?);
        for r in &responses {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let positives = records.iter().filter(|r| r.label).count();
    let clean = records.iter().filter(|r| sensitive_rule(r, &spec.sensitive_stems)).count();
    println!(
        "wrote {} records from {} commands to {} ({} positive, {} before label noise)",
        records.len(),
        responses.len(),
        a.out.display(),
        positives,
        clean
    );
    Ok(())
}

fn tokenize(a: TokenizeArgs) -> Result<()> {
    let tok = if a.keep_case {
        Tokenizer::case_preserving()
    } else {
        Tokenizer::new(TokenizerConfig::default())
    };
    for text in &a.text {
        println!("{}", tok.tokenize(text).join(" "));
    }
    Ok(())
}

fn documents(records: &[FieldRecord]) -> Vec<Document> {
    let tok = Tokenizer::new(TokenizerConfig::default());
    records.iter().map(|r| record_document(r, &tok)).collect()
}

fn train_embeddings_cmd(a: TrainEmbeddingsArgs) -> Result<()> {
    let records = load_corpus(&a.corpus)?;
    let params = Word2VecParams {
        dim: a.dim,
        window: a.window,
        negatives: a.negatives,
        epochs: a.epochs,
        seed: a.seed,
        ..Word2VecParams::default()
    };
    let table = train_embeddings(&documents(&records), &params)?;
    save_embeddings(&a.out, &table)?;
    println!("wrote {} vectors of dimension {} to {}", table.len(), table.dim(), a.out.display());
    Ok(())
}

fn matrix(transform: &FittedTransform, records: &[&FieldRecord]) -> Result<FeatureMatrix> {
    let featurizer = transform.featurizer()?;
    let mut x = FeatureMatrix::new(featurizer.dimension());
    for r in records {
        x.push_dense(&featurizer.transform(r).values)?;
    }
    Ok(x)
}

fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

fn train(a: TrainArgs) -> Result<()> {
    let records = load_corpus(&a.corpus)?;
    if !(0.0..1.0).contains(&a.tune_fraction) {
        bail!("--tune-fraction must be in [0, 1)");
    }
    let ratios = SplitRatios {
        train: 1.0 - a.tune_fraction,
        tune: a.tune_fraction,
        validate: 0.0,
    };
    let plan = split_by_command(&records, &ratios, a.seed)?;
    let idx = plan.indices(&records);
    let train_records: Vec<FieldRecord> = idx.train.iter().map(|&i| records[i].clone()).collect();

    let config = TransformConfig::new(a.transform);
    let embeddings = match (a.transform, &a.embeddings) {
        (TransformKind::We, Some(path)) => {
            let path = path.canonicalize().with_context(|| format!("embedding file {}", path.display()))?;
            Some(EmbeddingSource::File(path))
        }
        (TransformKind::We, None) => {
            let params = Word2VecParams {
                dim: config.dims_per_word,
                seed: a.seed,
                ..Word2VecParams::default()
            };
            Some(EmbeddingSource::Inline(train_embeddings(&documents(&train_records), &params)?))
        }
        _ => None,
    };
    let fitted = FittedTransform::fit(config, TokenizerConfig::default(), &train_records, embeddings)?;
    let train_refs: Vec<&FieldRecord> = train_records.iter().collect();
    let x = matrix(&fitted, &train_refs)?;
    let y: Vec<bool> = train_records.iter().map(|r| r.label).collect();
    let mut model = models::train(&x, &y, &ModelSpec::new(a.model, a.seed))?;

    let tune_refs: Vec<&FieldRecord> = idx.tune.iter().map(|&i| &records[i]).collect();
    let tune_y: Vec<bool> = tune_refs.iter().map(|r| r.label).collect();
    let threshold = if tune_refs.is_empty() || !tune_y.contains(&true) {
        eprintln!("warning: tune split has no positives; keeping threshold 0.5");
        0.5
    } else {
        let scores = model.score_matrix(&matrix(&fitted, &tune_refs)?)?;
        let t = match a.recall_floor {
            Some(floor) => threshold_at_recall(&scores, &tune_y, floor)?.threshold,
            None => {
                let config = MetricConfig {
                    beta: a.beta,
                    ..MetricConfig::default()
                };
                let s = sweep(&scores, &tune_y, &config)?;
                println!(
                    "tune split: max F{} = {:.4} (precision {:.4}, recall {:.4})",
                    a.beta, s.best.fbeta, s.best.precision, s.best.recall
                );
                s.best.threshold
            }
        };
        t.min(1.0)
    };
    model = model.with_transform(fitted)?.with_threshold(threshold)?;
    model.metadata.trained_at = Some(timestamp());
    model.metadata.corpus_fingerprint = Some(corpus_fingerprint(&records));
    save_model(&model, &a.out)?;
    println!(
        "trained {} on {} with {} features ({} train / {} tune records); threshold {}; wrote {}",
        a.model,
        a.transform,
        model.n_features,
        train_records.len(),
        tune_refs.len(),
        threshold,
        a.out.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let records = load_corpus(&a.corpus)?;
    if let Some(path) = &a.model {
        let model = load_model(path)?;
        let scores = model.score_records(&records)?;
        let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
        let point = evaluate_at(&scores, &labels, model.threshold, a.beta)?;
        println!("records {}", records.len());
        println!("threshold {}", model.threshold);
        println!("precision {:.6}", point.precision);
        println!("recall {:.6}", point.recall);
        println!("f{} {:.6}", a.beta, point.fbeta);
        match auc(&scores, &labels) {
            Ok(v) => println!("auc {v:.6}"),
            Err(e) => println!("auc n/a ({e})"),
        }
        return Ok(());
    }
    let config = ExperimentConfig {
        transforms: a.transforms,
        models: a.models,
        repetitions: a.repetitions,
        seed: a.seed,
        reseed_splits: a.reseed_splits,
        keep_curves: a.curves,
        metric: MetricConfig {
            beta: a.beta,
            ..MetricConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&records, &config)?;
    std::fs::create_dir_all(&a.out_dir)?;
    report.write_runs_csv(&a.out_dir.join("runs.csv"))?;
    report.write_cells_csv(&a.out_dir.join("cells.csv"))?;
    report.write_json(&a.out_dir.join("report.json"))?;
    if a.curves {
        report.write_curves(&a.out_dir.join("curves"))?;
    }
    println!("{:<10} {:<4} {:>6} {:>10} {:>10}", "transform", "model", "runs", "mean F5", "std");
    for c in &report.cells {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<10} {:<4} {:>6} {:>10} {:>10}{}",
            c.transform.to_string(),
            c.model.to_string(),
            c.completed_runs,
            fmt(c.mean_f5_validation),
            fmt(c.std_f5_validation),
            c.error.as_ref().map(|e| format!("  error: {e}")).unwrap_or_default()
        );
    }
    println!("wrote runs.csv, cells.csv and report.json to {}", a.out_dir.display());
    Ok(())
}

fn read_scores(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    #[derive(serde::Deserialize)]
    struct Row {
        score: f64,
        label: u8,
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let row: Row = row?;
        if row.label > 1 {
            bail!("labels must be 0 or 1, found {}", row.label);
        }
        scores.push(row.score);
        labels.push(row.label == 1);
    }
    Ok((scores, labels))
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let (scores, labels) = match (&a.scores, &a.model, &a.corpus) {
        (Some(path), _, _) => read_scores(path)?,
        (None, Some(model), Some(corpus)) => {
            let model = load_model(model)?;
            let records = load_corpus(corpus)?;
            (model.score_records(&records)?, records.iter().map(|r| r.label).collect())
        }
        _ => return Err(anyhow!("pass --scores, or --model together with --corpus")),
    };
    let config = MetricConfig {
        beta: a.beta,
        recall_floor: a.recall_floor,
    };
    let s = sweep(&scores, &labels, &config)?;
    println!(
        "max F{}: {:.6} at threshold {} (precision {:.6}, recall {:.6})",
        a.beta, s.best.fbeta, s.best.threshold, s.best.precision, s.best.recall
    );
    println!("plateau width (within 1% of max): {}", s.plateau_width);
    let r = threshold_at_recall(&scores, &labels, a.recall_floor)?;
    println!(
        "recall >= {}: threshold {} (precision {:.6}{}, recall {:.6})",
        a.recall_floor,
        r.threshold,
        r.precision,
        if r.vacuous_precision { ", nothing predicted" } else { "" },
        r.recall
    );
    match auc(&scores, &labels) {
        Ok(v) => println!("auc: {v:.6}"),
        Err(e) => println!("auc: n/a ({e})"),
    }
    if let Some(out) = &a.out {
        write_curve_csv(out, &s.curve)?;
        println!("wrote {} curve points to {}", s.curve.len(), out.display());
    }
    Ok(())
}

fn redact_cmd(a: RedactArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (envelope, response) = read_response(&a.response)?;
    let (env_command, env_module) = envelope.unzip();
    let command = a
        .command
        .or(env_command)
        .ok_or_else(|| anyhow!("the response has no command; pass --command"))?;
    let module = a.module.or(env_module).unwrap_or_default();
    let result = redact(&response, &command, &module, &model, a.threshold)?;
    debug_assert_eq!(result.audit.len(), flatten_response(&command, &module, &response)?.len());
    let text = serde_json::to_string_pretty(&result)?;
    match &a.out {
        Some(path) => {
            std::fs::write(path, text + "\n")?;
            eprintln!(
                "redacted {} of {} fields; wrote {}",
                result.redacted_count(),
                result.audit.len(),
                path.display()
            );
        }
        None => {
            let mut out = io::stdout().lock();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    println!("format: {} v{}", model.format, model.version);
    println!("model: {}", model.kind());
    println!("spec: {}", serde_json::to_string(&model.spec)?);
    println!("features: {}", model.n_features);
    if let Some(t) = &model.transform {
        println!("transform: {}", t.kind());
        println!("vocabulary: {} terms", t.vocabulary.len());
        println!("fitted documents: {}", t.document_frequency.documents());
        if let Some(e) = &t.embeddings {
            match e {
                EmbeddingSource::Inline(table) => println!("embeddings: inline, {} words", table.len()),
                EmbeddingSource::File(path) => println!("embeddings: {}", path.display()),
            }
        }
    }
    println!("threshold: {}", model.threshold);
    println!("training rows: {} ({} positive)", model.metadata.training_rows, model.metadata.training_positives);
    if let Some(fp) = &model.metadata.corpus_fingerprint {
        println!("corpus sha256: {fp}");
    }
    if let Some(ts) = model.metadata.trained_at {
        println!("trained at: {ts} (unix seconds)");
    }
    if let Parameters::Bt(b) = &model.parameters {
        println!("boosting rounds: {}", b.rounds.len());
    }
    match model.feature_importance(a.top_k) {
        Ok(rows) => {
            println!("top {} features:", rows.len());
            for r in rows {
                let block = r.block.map(|b| b.label()).unwrap_or("-");
                println!("  {:>6}  {:<12} {:<24} {:.6}", r.feature_index, block, r.word, r.weight);
            }
        }
        Err(models::ModelError::Unsupported(msg)) => println!("feature importance: {msg}"),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}
