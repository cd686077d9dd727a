//! Precision, recall, F-beta, ROC AUC and threshold sweeps.
//!
//! A score at or above the threshold counts as a positive prediction.
//! Precision with no positive predictions is taken to be 1.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no positive labels, recall is undefined")]
    NoPositives,
    #[error("both classes must be present")]
    SingleClass,
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("invalid metric configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub beta: f64,
    pub recall_floor: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            beta: 5.0,
            recall_floor: 0.99,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(MetricError::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.recall_floor) {
            return Err(MetricError::Config(format!(
                "recall floor must be in [0, 1], got {}",
                self.recall_floor
            )));
        }
        Ok(())
    }
}

/// `(1 + b^2) p r / (b^2 p + r)`, and 0 when both are 0.
pub fn fbeta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub fbeta: f64,
}

impl EvalPoint {
    fn from_confusion(threshold: f64, c: &Confusion, beta: f64) -> Self {
        let precision = c.precision();
        let recall = c.recall();
        Self {
            threshold,
            precision,
            recall,
            fbeta: fbeta(precision, recall, beta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    /// One point per candidate threshold, ascending by threshold.
    pub curve: Vec<EvalPoint>,
    pub best: EvalPoint,
    /// Threshold span of the contiguous stretch of the curve around the best
    /// point whose F-beta stays within 1% of the maximum.
    pub plateau_width: f64,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(bad));
    }
    Ok(())
}

/// Scores sorted descending with prefix positive counts, answering
/// "how many predictions/positives at or above t" by binary search.
struct Ranked {
    desc: Vec<f64>,
    positives_prefix: Vec<usize>,
    positives: usize,
}

impl Ranked {
    fn new(scores: &[f64], labels: &[bool]) -> Self {
        let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut positives_prefix = Vec::with_capacity(pairs.len() + 1);
        positives_prefix.push(0);
        let mut acc = 0;
        for &(_, l) in &pairs {
            acc += usize::from(l);
            positives_prefix.push(acc);
        }
        Self {
            desc: pairs.into_iter().map(|p| p.0).collect(),
            positives_prefix,
            positives: acc,
        }
    }

    fn confusion(&self, threshold: f64) -> Confusion {
        let predicted = self.desc.partition_point(|&s| s >= threshold);
        let tp = self.positives_prefix[predicted];
        let fp = predicted - tp;
        let negatives = self.desc.len() - self.positives;
        Confusion {
            tp,
            fp,
            tn: negatives - fp,
            fn_: self.positives - tp,
        }
    }

    /// Every distinct score plus the sentinels 0 and just above max(1, top score), ascending.
    fn candidates(&self) -> Vec<f64> {
        let top = self.desc.first().copied().unwrap_or(0.0);
        let mut c: Vec<f64> = self.desc.clone();
        c.push(0.0);
        c.push(top.max(1.0).next_up());
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    }
}

pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion, MetricError> {
    check_inputs(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn evaluate_at(scores: &[f64], labels: &[bool], threshold: f64, beta: f64) -> Result<EvalPoint, MetricError> {
    let c = confusion_at(scores, labels, threshold)?;
    Ok(EvalPoint::from_confusion(threshold, &c, beta))
}

/// Evaluates every candidate threshold and picks the one with the highest
/// F-beta, preferring higher recall and then the lower threshold on ties.
pub fn sweep(scores: &[f64], labels: &[bool], config: &MetricConfig) -> Result<Sweep, MetricError> {
    check_inputs(scores, labels)?;
    config.validate()?;
    let ranked = Ranked::new(scores, labels);
    if ranked.positives == 0 {
        return Err(MetricError::NoPositives);
    }
    let curve: Vec<EvalPoint> = ranked
        .candidates()
        .into_iter()
        .map(|t| EvalPoint::from_confusion(t, &ranked.confusion(t), config.beta))
        .collect();

    let mut best_idx = 0;
    for (i, p) in curve.iter().enumerate().skip(1) {
        let b = &curve[best_idx];
        // Ascending thresholds: an equal point later on never wins.
        if p.fbeta > b.fbeta || (p.fbeta == b.fbeta && p.recall > b.recall) {
            best_idx = i;
        }
    }
    let best = curve[best_idx];
    let floor = best.fbeta * 0.99;
    let mut lo = best_idx;
    while lo > 0 && curve[lo - 1].fbeta >= floor {
        lo -= 1;
    }
    let mut hi = best_idx;
    while hi + 1 < curve.len() && curve[hi + 1].fbeta >= floor {
        hi += 1;
    }
    let plateau_width = curve[hi].threshold - curve[lo].threshold;
    Ok(Sweep {
        curve,
        best,
        plateau_width,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallChoice {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    /// True when no example scores at or above the threshold, in which case
    /// precision is reported as 1 by convention.
    pub vacuous_precision: bool,
}

/// The largest threshold whose recall is at least `recall_floor`.
pub fn threshold_at_recall(scores: &[f64], labels: &[bool], recall_floor: f64) -> Result<RecallChoice, MetricError> {
    check_inputs(scores, labels)?;
    if !(0.0..=1.0).contains(&recall_floor) {
        return Err(MetricError::Config(format!("recall floor must be in [0, 1], got {recall_floor}")));
    }
    let ranked = Ranked::new(scores, labels);
    if ranked.positives == 0 {
        return Err(MetricError::NoPositives);
    }
    for t in ranked.candidates().into_iter().rev() {
        let c = ranked.confusion(t);
        if c.recall() >= recall_floor {
            return Ok(RecallChoice {
                threshold: t,
                precision: c.precision(),
                recall: c.recall(),
                vacuous_precision: c.tp + c.fp == 0,
            });
        }
    }
    unreachable!("the lowest candidate threshold predicts every example positive")
}

/// Probability that a random positive outscores a random negative, ties counting half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_inputs(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mann-Whitney U from midranks.
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                positive_rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

pub fn write_curve_csv(path: &Path, curve: &[EvalPoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "precision", "recall", "fbeta"])?;
    for p in curve {
        w.write_record([
            p.threshold.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.fbeta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
