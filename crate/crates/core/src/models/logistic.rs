//! Logistic regression trained by mini-batch gradient descent on log-loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{FeatureMatrix, SparseRow};
use super::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub batch_size: usize,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            l2: 1e-4,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn zeros(n_features: usize) -> Self {
        Self {
            weights: vec![0.0; n_features],
            bias: 0.0,
        }
    }

    pub fn margin(&self, row: SparseRow<'_>) -> f64 {
        self.bias + row.iter().map(|(i, v)| self.weights[i] * v).sum::<f64>()
    }

    pub fn predict(&self, row: SparseRow<'_>) -> f64 {
        sigmoid(self.margin(row))
    }

    /// Mean log-loss plus `l2 / 2 * |w|^2`, with its gradient with respect
    /// to the weights and the bias.
    pub fn loss_and_gradient(&self, x: &FeatureMatrix, y: &[bool], l2: f64) -> (f64, Vec<f64>, f64) {
        let n = x.n_rows() as f64;
        let mut grad = vec![0.0; self.weights.len()];
        let mut grad_bias = 0.0;
        let mut loss = 0.0;
        for (row, &label) in x.rows().zip(y) {
            let z = self.margin(row);
            loss += log_loss(z, label);
            let err = sigmoid(z) - f64::from(u8::from(label));
            for (i, v) in row.iter() {
                grad[i] += err * v;
            }
            grad_bias += err;
        }
        let penalty: f64 = self.weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
        for (g, w) in grad.iter_mut().zip(&self.weights) {
            *g = *g / n + l2 * w;
        }
        (loss / n + penalty, grad, grad_bias / n)
    }

    pub fn train(x: &FeatureMatrix, y: &[bool], params: &LrParams, seed: u64) -> Self {
        let d = x.n_features();
        // w = scale * v, so L2 shrinkage is one multiplication per batch.
        let mut v = vec![0.0; d];
        let mut scale = 1.0;
        let mut bias = 0.0;
        let mut grad = vec![0.0; d];
        let mut touched: Vec<usize> = Vec::new();
        let mut order: Vec<usize> = (0..x.n_rows()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lr = params.learning_rate;

        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(params.batch_size.max(1)) {
                let b = batch.len() as f64;
                let mut grad_bias = 0.0;
                for &r in batch {
                    let row = x.row(r);
                    let z = bias + scale * row.iter().map(|(i, val)| v[i] * val).sum::<f64>();
                    let err = sigmoid(z) - f64::from(u8::from(y[r]));
                    for (i, val) in row.iter() {
                        if grad[i] == 0.0 {
                            touched.push(i);
                        }
                        grad[i] += err * val;
                    }
                    grad_bias += err;
                }
                scale *= 1.0 - lr * params.l2;
                for &i in &touched {
                    v[i] -= lr * grad[i] / b / scale;
                    grad[i] = 0.0;
                }
                touched.clear();
                bias -= lr * grad_bias / b;
                if scale < 1e-9 {
                    v.iter_mut().for_each(|w| *w *= scale);
                    scale = 1.0;
                }
            }
        }
        Self {
            weights: v.into_iter().map(|w| w * scale).collect(),
            bias,
        }
    }
}

fn log_loss(z: f64, label: bool) -> f64 {
    // -log(sigmoid(z)) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    let softplus = |t: f64| if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
    if label {
        softplus(-z)
    } else {
        softplus(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_problem(seed: u64, n: usize, d: usize) -> (FeatureMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| if rng.gen_bool(0.5) { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect())
            .collect();
        let labels = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        (FeatureMatrix::from_dense(d, &rows).unwrap(), labels)
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..5 {
            let (x, y) = random_problem(seed, 12, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let model = LogisticModel {
                weights: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                bias: rng.gen_range(-1.0..1.0),
            };
            let l2 = 0.01;
            let (_, grad, grad_bias) = model.loss_and_gradient(&x, &y, l2);
            let h = 1e-6;
            for j in 0..=4 {
                let mut plus = model.clone();
                let mut minus = model.clone();
                if j < 4 {
                    plus.weights[j] += h;
                    minus.weights[j] -= h;
                } else {
                    plus.bias += h;
                    minus.bias -= h;
                }
                let numeric = (plus.loss_and_gradient(&x, &y, l2).0 - minus.loss_and_gradient(&x, &y, l2).0) / (2.0 * h);
                let analytic = if j < 4 { grad[j] } else { grad_bias };
                let rel = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4, "seed {seed} param {j}: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn log_loss_is_stable_for_large_margins() {
        assert!(log_loss(800.0, false).is_finite());
        assert!(log_loss(-800.0, true).is_finite());
        assert!((log_loss(0.0, true) - 2f64.ln()).abs() < 1e-15);
    }
}
