//! Synthetic corpora, command-grouped splits and the transform × model
//! experiment grid.

pub mod corpus;
pub mod experiment;
pub mod split;

use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::embeddings::EmbeddingError;
use crate::metrics::MetricError;
use crate::models::ModelError;
use crate::schema::{FieldRecord, SchemaError};
use crate::transforms::TransformError;

pub use corpus::{generate_corpus, generate_responses, sensitive_rule, CorpusSpec, GeneratedResponse};
pub use experiment::{run_experiment, CellSummary, ExperimentConfig, ExperimentReport, PairwiseTest, RunRow};
pub use split::{split_by_command, Partition, SplitIndices, SplitPlan, SplitRatios};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid corpus parameters: {0}")]
    Spec(String),
    #[error("cannot split corpus: {0}")]
    Split(String),
    #[error("invalid experiment: {0}")]
    Experiment(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Two-sided Welch t-test p-value for a difference in means.
///
/// Two constant samples give 1 when their means agree and 0 otherwise.
pub fn significance(a: &[f64], b: &[f64]) -> Result<f64, HarnessError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(HarnessError::Experiment("significance needs at least two values per sample".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| HarnessError::Experiment(e.to_string()))?;
    Ok((2.0 * dist.sf(t.abs())).clamp(0.0, 1.0))
}

/// Mean and unbiased sample variance.
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// SHA-256 over the corpus in its JSONL form, hex encoded.
pub fn corpus_fingerprint(records: &[FieldRecord]) -> String {
    let mut hasher = Sha256::new();
    for r in records {
        hasher.update(serde_json::to_vec(r).expect("records always serialize"));
        hasher.update(b"\n");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_one() {
        let a = [0.91, 0.93, 0.92, 0.95];
        assert!((significance(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(significance(&[0.5; 4], &[0.5; 3]).unwrap(), 1.0);
        assert_eq!(significance(&[0.5; 4], &[0.6; 3]).unwrap(), 0.0);
    }

    #[test]
    fn separated_samples_are_significant() {
        let jitter = |i: usize| (i as f64 - 4.5) * 1e-3;
        let a: Vec<f64> = (0..10).map(|i| 0.9 + jitter(i)).collect();
        let b: Vec<f64> = (0..10).map(|i| 0.5 - jitter(i)).collect();
        let p = significance(&a, &b).unwrap();
        assert!(p < 1e-3, "{p}");
        assert_eq!(p, significance(&b, &a).unwrap());
    }

    #[test]
    fn matches_hand_computed_t() {
        // means 2 and 4, variances 1 and 4, n = 3 each:
        // t = -2 / sqrt(5/3), df = (5/3)^2 / ((1/3)^2/2 + (4/3)^2/2) = 50/17.
        let p = significance(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        let t = 2.0 / (5.0f64 / 3.0).sqrt();
        let dist = StudentsT::new(0.0, 1.0, 50.0 / 17.0).unwrap();
        assert!((p - 2.0 * (1.0 - dist.cdf(t))).abs() < 1e-12);
        assert!(p > 0.1 && p < 0.5);
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let corpus = generate_corpus(&CorpusSpec {
            record_count: 300,
            ..CorpusSpec::default()
        })
        .unwrap();
        let a = corpus_fingerprint(&corpus);
        assert_eq!(a.len(), 64);
        assert_eq!(a, corpus_fingerprint(&corpus));
        let mut changed = corpus.clone();
        changed[0].label = !changed[0].label;
        assert_ne!(a, corpus_fingerprint(&changed));
    }
}
