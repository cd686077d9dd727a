//! The transform × model grid.
//!
//! Each repetition trains a fresh model on the train split, picks the max-F5
//! threshold on the tune split and reports F5 at that threshold on the
//! validation split. Transforms (and embeddings for `we`) are fitted on the
//! train split only. By default the split is fixed and repetitions differ
//! only in the model seed, so cells are paired across transforms and models.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::{split_by_command, SplitPlan, SplitRatios};
use super::{mean_var, significance, CorpusSpec, HarnessError};
use crate::embeddings::{train_embeddings, Word2VecParams};
use crate::metrics::{auc, evaluate_at, sweep, write_curve_csv, EvalPoint, MetricConfig};
use crate::models::{self, BtParams, FeatureMatrix, Hyperparameters, LrParams, ModelKind, ModelSpec, NnParams};
use crate::schema::{record_document, Document, FieldRecord};
use crate::tokenizer::{Tokenizer, TokenizerConfig};
use crate::transforms::{EmbeddingSource, FittedTransform, TransformConfig, TransformKind};

pub const REPORT_FORMAT: &str = "clirisk-experiment";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub transforms: Vec<TransformKind>,
    pub models: Vec<ModelKind>,
    pub repetitions: usize,
    pub seed: u64,
    pub ratios: SplitRatios,
    /// Draw a new split for every repetition instead of one for all.
    pub reseed_splits: bool,
    pub lr: LrParams,
    pub bt: BtParams,
    pub nn: NnParams,
    pub max_words: usize,
    pub dims_per_word: usize,
    /// Embedding training for `we`; `dim` and `seed` are overridden per split.
    pub word2vec: Word2VecParams,
    pub metric: MetricConfig,
    /// Keep every run's tune-split sweep curve in the report.
    pub keep_curves: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TransformConfig::new(TransformKind::We);
        Self {
            transforms: TransformKind::ALL.to_vec(),
            models: ModelKind::ALL.to_vec(),
            repetitions: 20,
            seed: 0,
            ratios: SplitRatios::default(),
            reseed_splits: false,
            lr: LrParams::default(),
            bt: BtParams::default(),
            nn: NnParams::default(),
            max_words: t.max_words,
            dims_per_word: t.dims_per_word,
            word2vec: Word2VecParams::default(),
            metric: MetricConfig::default(),
            keep_curves: false,
        }
    }
}

impl ExperimentConfig {
    pub fn hyperparameters(&self, kind: ModelKind) -> Hyperparameters {
        match kind {
            ModelKind::Lr => Hyperparameters::Lr(self.lr),
            ModelKind::Bt => Hyperparameters::Bt(self.bt),
            ModelKind::Nn => Hyperparameters::Nn(self.nn.clone()),
        }
    }

    pub fn transform_config(&self, kind: TransformKind) -> TransformConfig {
        TransformConfig {
            kind,
            max_words: self.max_words,
            dims_per_word: self.dims_per_word,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Experiment(m.to_string()));
        if self.transforms.is_empty() || self.models.is_empty() {
            return bad("at least one transform and one model are required");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be positive");
        }
        if self.ratios.tune == 0.0 || self.ratios.validate == 0.0 {
            return bad("experiments need non-empty tune and validate splits");
        }
        self.ratios.validate()?;
        self.metric.validate()?;
        for kind in ModelKind::ALL {
            self.hyperparameters(kind).validate()?;
        }
        Ok(())
    }
}

/// Seed for one stream of randomness, derived from the master seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

const SPLIT_STREAM: u64 = 1;
const EMBEDDING_STREAM: u64 = 2;
const MODEL_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub transform: TransformKind,
    pub model: ModelKind,
    pub repetition: usize,
    pub seed: u64,
    pub max_f5_tune: f64,
    pub threshold: f64,
    pub f5_validation: f64,
    pub precision_validation: f64,
    pub recall_validation: f64,
    /// Missing when the validation split holds a single class.
    pub auc_validation: Option<f64>,
    pub runtime_ms: u64,
    pub plateau_width_tune: f64,
    /// Document count the transform was fitted on.
    pub fit_documents: usize,
    pub train_records: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<EvalPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub transform: TransformKind,
    pub model: ModelKind,
    pub completed_runs: usize,
    pub mean_max_f5_tune: Option<f64>,
    pub std_max_f5_tune: Option<f64>,
    pub mean_f5_validation: Option<f64>,
    pub std_f5_validation: Option<f64>,
    pub mean_auc_validation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub transform_a: TransformKind,
    pub model_a: ModelKind,
    pub transform_b: TransformKind,
    pub model_b: ModelKind,
    /// Welch p-value on validation F5.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSize {
    pub transform: TransformKind,
    pub vocabulary: usize,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub seed: u64,
    pub repetitions: Vec<usize>,
    pub train_commands: usize,
    pub tune_commands: usize,
    pub validate_commands: usize,
    pub train_records: usize,
    pub tune_records: usize,
    pub validate_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    /// Filled in by callers that generated the corpus.
    pub corpus_spec: Option<CorpusSpec>,
    pub corpus_records: usize,
    pub corpus_positives: usize,
    pub splits: Vec<SplitSummary>,
    pub feature_sizes: Vec<FeatureSize>,
    pub runs: Vec<RunRow>,
    pub cells: Vec<CellSummary>,
    pub pairwise: Vec<PairwiseTest>,
    pub runtime_ms: u64,
    /// Precision reported when nothing is predicted positive.
    pub empty_prediction_precision: f64,
}

struct Prepared {
    x: FeatureMatrix,
    y: Vec<bool>,
}

fn featurize(transform: &FittedTransform, records: &[FieldRecord], idx: &[usize]) -> Result<Prepared, HarnessError> {
    let featurizer = transform.featurizer()?;
    let mut x = FeatureMatrix::new(featurizer.dimension());
    for &i in idx {
        x.push_dense(&featurizer.transform(&records[i]).values)?;
    }
    Ok(Prepared {
        x,
        y: idx.iter().map(|&i| records[i].label).collect(),
    })
}

fn fit_transform(
    config: &ExperimentConfig,
    kind: TransformKind,
    train: &[FieldRecord],
    split_seed: u64,
) -> Result<FittedTransform, HarnessError> {
    let tokenizer = TokenizerConfig::default();
    let embeddings = if kind == TransformKind::We {
        let tok = Tokenizer::new(tokenizer);
        let docs: Vec<Document> = train.iter().map(|r| record_document(r, &tok)).collect();
        let params = Word2VecParams {
            dim: config.dims_per_word,
            seed: derive_seed(config.seed, &[EMBEDDING_STREAM, split_seed]),
            ..config.word2vec
        };
        Some(EmbeddingSource::Inline(train_embeddings(&docs, &params)?))
    } else {
        None
    };
    Ok(FittedTransform::fit(config.transform_config(kind), tokenizer, train, embeddings)?)
}

struct Matrices {
    train: Prepared,
    tune: Prepared,
    validate: Prepared,
    fit_documents: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    config: &ExperimentConfig,
    transform: TransformKind,
    model: ModelKind,
    repetition: usize,
    data: &Matrices,
) -> Result<RunRow, HarnessError> {
    let started = Instant::now();
    let seed = derive_seed(config.seed, &[MODEL_STREAM, repetition as u64]);
    let spec = ModelSpec {
        params: config.hyperparameters(model),
        seed,
    };
    let trained = models::train(&data.train.x, &data.train.y, &spec)?;
    let tune_scores = trained.score_matrix(&data.tune.x)?;
    let tuned = sweep(&tune_scores, &data.tune.y, &config.metric)?;
    let threshold = tuned.best.threshold;
    let val_scores = trained.score_matrix(&data.validate.x)?;
    let point = evaluate_at(&val_scores, &data.validate.y, threshold, config.metric.beta)?;
    Ok(RunRow {
        transform,
        model,
        repetition,
        seed,
        max_f5_tune: tuned.best.fbeta,
        threshold,
        f5_validation: point.fbeta,
        precision_validation: point.precision,
        recall_validation: point.recall,
        auc_validation: auc(&val_scores, &data.validate.y).ok(),
        runtime_ms: started.elapsed().as_millis() as u64,
        plateau_width_tune: tuned.plateau_width,
        fit_documents: data.fit_documents,
        train_records: data.train.y.len(),
        curve: if config.keep_curves { tuned.curve } else { Vec::new() },
    })
}

pub fn run_experiment(records: &[FieldRecord], config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let started = Instant::now();
    config.validate()?;
    let positives = records.iter().filter(|r| r.label).count();
    if positives == 0 || positives == records.len() {
        return Err(HarnessError::Experiment("the corpus must contain both classes".into()));
    }

    let n_splits = if config.reseed_splits { config.repetitions } else { 1 };
    let mut plans: Vec<(SplitPlan, Vec<usize>)> = Vec::with_capacity(n_splits);
    for s in 0..n_splits {
        let seed = derive_seed(config.seed, &[SPLIT_STREAM, s as u64]);
        let reps = if config.reseed_splits { vec![s] } else { (0..config.repetitions).collect() };
        plans.push((split_by_command(records, &config.ratios, seed)?, reps));
    }

    let mut runs: Vec<RunRow> = Vec::new();
    let mut errors: Vec<(TransformKind, ModelKind, String)> = Vec::new();
    let mut splits = Vec::new();
    let mut feature_sizes: Vec<FeatureSize> = Vec::new();

    for (plan, reps) in &plans {
        let idx = plan.indices(records);
        splits.push(SplitSummary {
            seed: plan.seed,
            repetitions: reps.clone(),
            train_commands: plan.train.len(),
            tune_commands: plan.tune.len(),
            validate_commands: plan.validate.len(),
            train_records: idx.train.len(),
            tune_records: idx.tune.len(),
            validate_records: idx.validate.len(),
        });
        let train_records: Vec<FieldRecord> = idx.train.iter().map(|&i| records[i].clone()).collect();

        for &transform in &config.transforms {
            let prepared = fit_transform(config, transform, &train_records, plan.seed).and_then(|fitted| {
                if !feature_sizes.iter().any(|f| f.transform == transform) {
                    feature_sizes.push(FeatureSize {
                        transform,
                        vocabulary: fitted.vocabulary.len(),
                        dimension: fitted.dimension(),
                    });
                }
                Ok(Matrices {
                    train: featurize(&fitted, records, &idx.train)?,
                    tune: featurize(&fitted, records, &idx.tune)?,
                    validate: featurize(&fitted, records, &idx.validate)?,
                    fit_documents: fitted.document_frequency.documents(),
                })
            });
            let data = match prepared {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("transform {transform} failed: {e}");
                    for &model in &config.models {
                        errors.push((transform, model, e.to_string()));
                    }
                    continue;
                }
            };
            let jobs: Vec<(ModelKind, usize)> = config
                .models
                .iter()
                .flat_map(|&m| reps.iter().map(move |&r| (m, r)))
                .collect();
            let results: Vec<_> = jobs
                .par_iter()
                .map(|&(model, rep)| (model, run_one(config, transform, model, rep, &data)))
                .collect();
            for (model, result) in results {
                match result {
                    Ok(row) => runs.push(row),
                    Err(e) => {
                        log::warn!("{transform}/{model} failed: {e}");
                        errors.push((transform, model, e.to_string()));
                    }
                }
            }
        }
    }

    let order = |t: TransformKind, m: ModelKind| {
        (
            config.transforms.iter().position(|&x| x == t),
            config.models.iter().position(|&x| x == m),
        )
    };
    runs.sort_by_key(|r| (order(r.transform, r.model), r.repetition));

    let mut cells = Vec::new();
    for &transform in &config.transforms {
        for &model in &config.models {
            let rows: Vec<&RunRow> = runs.iter().filter(|r| r.transform == transform && r.model == model).collect();
            let stats = |f: fn(&RunRow) -> f64| {
                if rows.is_empty() {
                    (None, None)
                } else {
                    let (m, v) = mean_var(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
                    (Some(m), Some(v.sqrt()))
                }
            };
            let (mean_tune, std_tune) = stats(|r| r.max_f5_tune);
            let (mean_val, std_val) = stats(|r| r.f5_validation);
            let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc_validation).collect();
            cells.push(CellSummary {
                transform,
                model,
                completed_runs: rows.len(),
                mean_max_f5_tune: mean_tune,
                std_max_f5_tune: std_tune,
                mean_f5_validation: mean_val,
                std_f5_validation: std_val,
                mean_auc_validation: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
                error: errors
                    .iter()
                    .find(|(t, m, _)| *t == transform && *m == model)
                    .map(|(_, _, e)| e.clone()),
            });
        }
    }

    let mut pairwise = Vec::new();
    let scores = |c: &CellSummary| -> Vec<f64> {
        runs.iter()
            .filter(|r| r.transform == c.transform && r.model == c.model)
            .map(|r| r.f5_validation)
            .collect()
    };
    for (i, a) in cells.iter().enumerate() {
        for b in &cells[i + 1..] {
            if let Ok(p) = significance(&scores(a), &scores(b)) {
                pairwise.push(PairwiseTest {
                    transform_a: a.transform,
                    model_a: a.model,
                    transform_b: b.transform,
                    model_b: b.model,
                    p_value: p,
                });
            }
        }
    }

    Ok(ExperimentReport {
        format: REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        config: config.clone(),
        corpus_spec: None,
        corpus_records: records.len(),
        corpus_positives: positives,
        splits,
        feature_sizes,
        runs,
        cells,
        pairwise,
        runtime_ms: started.elapsed().as_millis() as u64,
        empty_prediction_precision: 1.0,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    pub fn cell(&self, transform: TransformKind, model: ModelKind) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.transform == transform && c.model == model)
    }

    /// The report with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.runtime_ms = 0;
        r.runs.iter_mut().for_each(|row| row.runtime_ms = 0);
        r
    }

    /// One line per run.
    pub fn write_runs_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "transform",
            "model",
            "repetition",
            "seed",
            "max_f5_tune",
            "threshold",
            "f5_validation",
            "precision_validation",
            "recall_validation",
            "auc_validation",
            "runtime_ms",
        ])?;
        for r in &self.runs {
            w.write_record([
                r.transform.to_string(),
                r.model.to_string(),
                r.repetition.to_string(),
                r.seed.to_string(),
                r.max_f5_tune.to_string(),
                r.threshold.to_string(),
                r.f5_validation.to_string(),
                r.precision_validation.to_string(),
                r.recall_validation.to_string(),
                opt(r.auc_validation),
                r.runtime_ms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One line per transform × model cell.
    pub fn write_cells_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "transform",
            "model",
            "completed_runs",
            "mean_max_f5_tune",
            "std_max_f5_tune",
            "mean_f5_validation",
            "std_f5_validation",
            "mean_auc_validation",
            "error",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.transform.to_string(),
                c.model.to_string(),
                c.completed_runs.to_string(),
                opt(c.mean_max_f5_tune),
                opt(c.std_max_f5_tune),
                opt(c.mean_f5_validation),
                opt(c.std_f5_validation),
                opt(c.mean_auc_validation),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Writes `<transform>_<model>_<repetition>.csv` for every run that kept
    /// its curve.
    pub fn write_curves(&self, dir: &Path) -> Result<usize, HarnessError> {
        fs::create_dir_all(dir)?;
        let mut written = 0;
        for r in self.runs.iter().filter(|r| !r.curve.is_empty()) {
            let path = dir.join(format!("{}_{}_{}.csv", r.transform, r.model, r.repetition));
            write_curve_csv(&path, &r.curve)?;
            written += 1;
        }
        Ok(written)
    }
}
