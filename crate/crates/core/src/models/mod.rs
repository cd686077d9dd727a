//! Classifiers behind one interface: logistic regression (`lr`), AdaBoost over
//! shallow trees (`bt`) and a small feed-forward network (`nn`).
//!
//! A [`TrainedModel`] bundles the learned parameters with the fitted transform
//! that produced its inputs, so a stored artifact can score raw field records.

pub mod boost;
pub mod logistic;
pub mod matrix;
pub mod mlp;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Feature, FieldRecord};
use crate::transforms::{FittedTransform, TransformError};

pub use boost::{BoostedTrees, BtParams};
pub use logistic::{LogisticModel, LrParams};
pub use matrix::{FeatureMatrix, SparseRow};
pub use mlp::{Mlp, NnParams};

pub const ARTIFACT_FORMAT: &str = "clirisk-model";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("expected {expected} features, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("cannot load model: {0}")]
    Load(String),
    #[error("unsupported model artifact version {found} (this build reads version {ARTIFACT_VERSION})")]
    Version { found: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Bt,
    Nn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lr, ModelKind::Bt, ModelKind::Nn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Bt => "bt",
            ModelKind::Nn => "nn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown model kind {s:?} (expected lr, bt or nn)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparameters {
    Lr(LrParams),
    Bt(BtParams),
    Nn(NnParams),
}

impl Hyperparameters {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Lr => Hyperparameters::Lr(LrParams::default()),
            ModelKind::Bt => Hyperparameters::Bt(BtParams::default()),
            ModelKind::Nn => Hyperparameters::Nn(NnParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Lr(_) => ModelKind::Lr,
            Hyperparameters::Bt(_) => ModelKind::Bt,
            Hyperparameters::Nn(_) => ModelKind::Nn,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive_rate = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let positive_count = |name: &str, v: usize| {
            if v > 0 {
                Ok(())
            } else {
                Err(ModelError::Config(format!("{name} must be positive")))
            }
        };
        match self {
            Hyperparameters::Lr(p) => {
                positive_rate("learning_rate", p.learning_rate)?;
                positive_count("epochs", p.epochs)?;
                positive_count("batch_size", p.batch_size)?;
                if !(p.l2.is_finite() && p.l2 >= 0.0 && p.learning_rate * p.l2 < 1.0) {
                    return Err(ModelError::Config(format!("l2 must be in [0, 1/learning_rate), got {}", p.l2)));
                }
            }
            Hyperparameters::Bt(p) => {
                positive_count("rounds", p.rounds)?;
                positive_count("max_depth", p.max_depth)?;
            }
            Hyperparameters::Nn(p) => {
                positive_rate("learning_rate", p.learning_rate)?;
                positive_count("epochs", p.epochs)?;
                positive_count("batch_size", p.batch_size)?;
                if p.hidden.is_empty() || p.hidden.contains(&0) {
                    return Err(ModelError::Config("hidden layer sizes must be non-empty and positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub params: Hyperparameters,
    pub seed: u64,
}

impl ModelSpec {
    /// Default hyperparameters for `kind`.
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self {
            params: Hyperparameters::default_for(kind),
            seed,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Parameters {
    Lr(LogisticModel),
    Bt(BoostedTrees),
    Nn(Mlp),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Seconds since the Unix epoch; left empty by library training so that
    /// artifacts stay reproducible.
    pub trained_at: Option<u64>,
    pub corpus_fingerprint: Option<String>,
    pub training_rows: usize,
    pub training_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub n_features: usize,
    pub parameters: Parameters,
    pub transform: Option<FittedTransform>,
    pub threshold: f64,
    pub metadata: ModelMetadata,
}

/// One row of a feature-importance report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Importance {
    pub feature_index: usize,
    pub word: String,
    /// Record feature the column belongs to, for per-feature transforms.
    pub block: Option<Feature>,
    pub weight: f64,
}

pub fn train(features: &FeatureMatrix, labels: &[bool], spec: &ModelSpec) -> Result<TrainedModel, ModelError> {
    spec.params.validate()?;
    if features.n_rows() != labels.len() {
        return Err(ModelError::Shape {
            expected: features.n_rows(),
            found: labels.len(),
        });
    }
    if labels.len() < 2 {
        return Err(ModelError::Config("training needs at least two rows".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(ModelError::SingleClass);
    }
    let parameters = match &spec.params {
        Hyperparameters::Lr(p) => Parameters::Lr(LogisticModel::train(features, labels, p, spec.seed)),
        Hyperparameters::Bt(p) => Parameters::Bt(BoostedTrees::train(features, labels, p)),
        Hyperparameters::Nn(p) => Parameters::Nn(Mlp::train(features, labels, p, spec.seed)),
    };
    Ok(TrainedModel {
        format: ARTIFACT_FORMAT.to_string(),
        version: ARTIFACT_VERSION,
        spec: spec.clone(),
        n_features: features.n_features(),
        parameters,
        transform: None,
        threshold: 0.5,
        metadata: ModelMetadata {
            trained_at: None,
            corpus_fingerprint: None,
            training_rows: labels.len(),
            training_positives: positives,
        },
    })
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// Binds the transform that produced the training features.
    pub fn with_transform(mut self, transform: FittedTransform) -> Result<Self, ModelError> {
        if transform.dimension() != self.n_features {
            return Err(ModelError::Shape {
                expected: self.n_features,
                found: transform.dimension(),
            });
        }
        self.transform = Some(transform);
        Ok(self)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ModelError::Config(format!("threshold must be in [0, 1], got {threshold}")));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn score_row(&self, row: SparseRow<'_>) -> Result<f64, ModelError> {
        if let Some(&last) = row.indices.last() {
            if last as usize >= self.n_features {
                return Err(ModelError::Shape {
                    expected: self.n_features,
                    found: last as usize + 1,
                });
            }
        }
        Ok(match &self.parameters {
            Parameters::Lr(m) => m.predict(row),
            Parameters::Bt(m) => m.predict(row),
            Parameters::Nn(m) => m.predict(row),
        })
    }

    pub fn predict_proba(&self, features: &[f64]) -> Result<f64, ModelError> {
        if features.len() != self.n_features {
            return Err(ModelError::Shape {
                expected: self.n_features,
                found: features.len(),
            });
        }
        let (indices, values) = matrix::sparse_from_dense(features);
        self.score_row(SparseRow {
            indices: &indices,
            values: &values,
        })
    }

    pub fn score_matrix(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        if x.n_features() != self.n_features {
            return Err(ModelError::Shape {
                expected: self.n_features,
                found: x.n_features(),
            });
        }
        x.rows().map(|row| self.score_row(row)).collect()
    }

    /// Featurizes raw records with the bound transform and scores them.
    pub fn score_records(&self, records: &[FieldRecord]) -> Result<Vec<f64>, ModelError> {
        let transform = self
            .transform
            .as_ref()
            .ok_or_else(|| ModelError::Config("model has no bound transform".into()))?;
        let featurizer = transform.featurizer()?;
        records
            .iter()
            .map(|r| self.predict_proba(&featurizer.transform(r).values))
            .collect()
    }

    /// Ranked feature weights, normalized to sum to one.
    ///
    /// `lr` uses absolute weights. `bt` credits each round's weight to every
    /// feature its tree splits on. Ties are ordered by feature index.
    pub fn feature_importance(&self, top_k: usize) -> Result<Vec<Importance>, ModelError> {
        let raw: Vec<f64> = match &self.parameters {
            Parameters::Lr(m) => m.weights.iter().map(|w| w.abs()).collect(),
            Parameters::Bt(m) => {
                let mut acc = vec![0.0; self.n_features];
                for round in &m.rounds {
                    for f in round.tree.split_features() {
                        acc[f] += round.alpha;
                    }
                }
                acc
            }
            Parameters::Nn(_) => {
                return Err(ModelError::Unsupported(
                    "feature importance is not available for nn models".into(),
                ))
            }
        };
        let total: f64 = raw.iter().sum();
        let mut ranked: Vec<(usize, f64)> = raw
            .into_iter()
            .map(|w| if total > 0.0 { w / total } else { 0.0 })
            .enumerate()
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(top_k);
        Ok(ranked
            .into_iter()
            .map(|(i, weight)| {
                let (block, word) = match &self.transform {
                    Some(t) => t.describe_feature(i),
                    None => (None, format!("f{i}")),
                };
                Importance {
                    feature_index: i,
                    word,
                    block,
                    weight,
                }
            })
            .collect())
    }
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), ModelError> {
    let text = serde_json::to_string(model)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ModelError> {
    let bytes = fs::read(path)?;
    parse_model(&bytes)
}

pub fn parse_model(bytes: &[u8]) -> Result<TrainedModel, ModelError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| ModelError::Load(format!("not a model artifact: {e}")))?;
    if value.get("format").and_then(|f| f.as_str()) != Some(ARTIFACT_FORMAT) {
        return Err(ModelError::Load("missing or unknown format tag".into()));
    }
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ModelError::Load("missing version".into()))?;
    if version != u64::from(ARTIFACT_VERSION) {
        return Err(ModelError::Version { found: version });
    }
    let model: TrainedModel =
        serde_json::from_value(value).map_err(|e| ModelError::Load(format!("malformed model artifact: {e}")))?;
    let expected = match &model.parameters {
        Parameters::Lr(m) => m.weights.len(),
        Parameters::Bt(_) => model.n_features,
        Parameters::Nn(m) => m.n_features(),
    };
    if expected != model.n_features || model.kind() != parameters_kind(&model.parameters) {
        return Err(ModelError::Load("parameters do not match the declared model".into()));
    }
    if let Some(t) = &model.transform {
        if t.dimension() != model.n_features {
            return Err(ModelError::Load("bound transform dimension does not match the parameters".into()));
        }
    }
    if !(0.0..=1.0).contains(&model.threshold) {
        return Err(ModelError::Load(format!("threshold {} outside [0, 1]", model.threshold)));
    }
    Ok(model)
}

fn parameters_kind(p: &Parameters) -> ModelKind {
    match p {
        Parameters::Lr(_) => ModelKind::Lr,
        Parameters::Bt(_) => ModelKind::Bt,
        Parameters::Nn(_) => ModelKind::Nn,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separable(n: usize) -> (FeatureMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let positive = i % 2 == 0;
            let a: f64 = rng.gen_range(0.5..2.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            rows.push(vec![if positive { a } else { -a }, b]);
            labels.push(positive);
        }
        (FeatureMatrix::from_dense(2, &rows).unwrap(), labels)
    }

    #[test]
    fn separable_lr_fits_training_set() {
        let (x, y) = separable(20);
        let model = train(&x, &y, &ModelSpec::new(ModelKind::Lr, 1)).unwrap();
        let scores = model.score_matrix(&x).unwrap();
        for (s, l) in scores.iter().zip(&y) {
            assert_eq!(*s >= 0.5, *l);
            if *l {
                assert!(*s > 0.5);
            }
        }
    }

    #[test]
    fn xor_with_depth_two_boosting() {
        let x = FeatureMatrix::from_dense(2, &[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
        let y = [false, true, true, false];
        let spec = ModelSpec {
            params: Hyperparameters::Bt(BtParams { rounds: 50, max_depth: 2 }),
            seed: 0,
        };
        let model = train(&x, &y, &spec).unwrap();
        let scores = model.score_matrix(&x).unwrap();
        assert!(scores.iter().zip(&y).all(|(s, l)| (*s >= 0.5) == *l));
    }

    #[test]
    fn zero_lr_scores_half() {
        let model = TrainedModel {
            format: ARTIFACT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            spec: ModelSpec::new(ModelKind::Lr, 0),
            n_features: 3,
            parameters: Parameters::Lr(LogisticModel::zeros(3)),
            transform: None,
            threshold: 0.5,
            metadata: ModelMetadata::default(),
        };
        assert_eq!(model.predict_proba(&[4.0, -1.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(model.predict_proba(&[1.0]), Err(ModelError::Shape { expected: 3, found: 1 })));
    }

    #[test]
    fn lr_importance_normalizes_absolute_weights() {
        let (x, y) = separable(10);
        let mut model = train(&x, &y, &ModelSpec::new(ModelKind::Lr, 0)).unwrap();
        model.parameters = Parameters::Lr(LogisticModel {
            weights: vec![3.0, -1.0],
            bias: 0.0,
        });
        let imp = model.feature_importance(5).unwrap();
        assert_eq!(imp.len(), 2);
        assert_eq!((imp[0].feature_index, imp[0].weight), (0, 0.75));
        assert_eq!((imp[1].feature_index, imp[1].weight), (1, 0.25));
    }

    #[test]
    fn nn_importance_is_unsupported() {
        let (x, y) = separable(10);
        let mut spec = ModelSpec::new(ModelKind::Nn, 0);
        spec.params = Hyperparameters::Nn(NnParams {
            hidden: vec![4],
            epochs: 2,
            ..NnParams::default()
        });
        let model = train(&x, &y, &spec).unwrap();
        assert!(matches!(model.feature_importance(3), Err(ModelError::Unsupported(_))));
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = separable(4);
        let err = train(&x, &[true; 4], &ModelSpec::new(ModelKind::Lr, 0)).unwrap_err();
        assert!(matches!(err, ModelError::SingleClass));
    }

    #[test]
    fn artifact_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (x, y) = separable(30);
        for kind in ModelKind::ALL {
            let mut spec = ModelSpec::new(kind, 5);
            if let Hyperparameters::Nn(p) = &mut spec.params {
                p.epochs = 3;
            }
            let model = train(&x, &y, &spec).unwrap().with_threshold(0.37).unwrap();
            let path = dir.path().join(format!("{kind}.json"));
            save_model(&model, &path).unwrap();
            let loaded = load_model(&path).unwrap();
            assert_eq!(loaded, model);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..100 {
                let v = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                assert_eq!(
                    loaded.predict_proba(&v).unwrap().to_bits(),
                    model.predict_proba(&v).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn truncated_and_foreign_versions_fail_to_load() {
        let (x, y) = separable(10);
        let model = train(&x, &y, &ModelSpec::new(ModelKind::Lr, 0)).unwrap();
        let text = serde_json::to_string(&model).unwrap();
        assert!(matches!(parse_model(&text.as_bytes()[..text.len() / 2]), Err(ModelError::Load(_))));
        let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(parse_model(bumped.as_bytes()), Err(ModelError::Version { found: 2 })));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(1000.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
