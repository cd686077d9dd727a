//! Fully-connected network: rectified hidden layers and one sigmoid output,
//! trained with Adam on mean binary cross-entropy.
//!
//! Input rows are sparse, so the first layer only receives updates for the
//! input features present in the current batch (lazy Adam).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{FeatureMatrix, SparseRow};
use super::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for NnParams {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 32,
        }
    }
}

/// Weights are stored input-major: `weights[i * outputs + j]` connects input
/// `i` to output `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Gradients shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn zeros(n_features: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![n_features];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// He-uniform hidden layers, Glorot-uniform output layer, zero biases.
    pub fn init(n_features: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(n_features, hidden);
        let last = net.layers.len() - 1;
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let limit = if k == last {
                (6.0 / (layer.inputs + layer.outputs) as f64).sqrt()
            } else {
                (6.0 / layer.inputs.max(1) as f64).sqrt()
            };
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    pub fn n_features(&self) -> usize {
        self.layers[0].inputs
    }

    /// Pre-activations of every layer for one row.
    fn forward(&self, row: SparseRow<'_>) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let first = &self.layers[0];
        let mut z = first.bias.clone();
        for (i, v) in row.iter() {
            let w = &first.weights[i * first.outputs..(i + 1) * first.outputs];
            for (zj, wj) in z.iter_mut().zip(w) {
                *zj += v * wj;
            }
        }
        pre.push(z);
        for layer in &self.layers[1..] {
            let input: Vec<f64> = pre.last().unwrap().iter().map(|&a| a.max(0.0)).collect();
            let mut z = layer.bias.clone();
            for (i, a) in input.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let w = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                for (zj, wj) in z.iter_mut().zip(w) {
                    *zj += a * wj;
                }
            }
            pre.push(z);
        }
        pre
    }

    pub fn predict(&self, row: SparseRow<'_>) -> f64 {
        sigmoid(self.forward(row).last().unwrap()[0])
    }

    fn empty_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    /// Adds one example's loss gradient to `grads` and returns its loss.
    fn backprop(&self, row: SparseRow<'_>, label: bool, grads: &mut Gradients) -> f64 {
        let pre = self.forward(row);
        let out = pre.last().unwrap()[0];
        let y = f64::from(u8::from(label));
        let loss = if label { softplus(-out) } else { softplus(out) };

        let mut delta = vec![sigmoid(out) - y];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let g = &mut grads.layers[k];
            for (gb, d) in g.bias.iter_mut().zip(&delta) {
                *gb += d;
            }
            if k == 0 {
                for (i, v) in row.iter() {
                    let gw = &mut g.weights[i * layer.outputs..(i + 1) * layer.outputs];
                    for (gwj, d) in gw.iter_mut().zip(&delta) {
                        *gwj += v * d;
                    }
                }
                break;
            }
            let below = &pre[k - 1];
            let mut next = vec![0.0; layer.inputs];
            for i in 0..layer.inputs {
                let a = below[i].max(0.0);
                let w = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                let gw = &mut g.weights[i * layer.outputs..(i + 1) * layer.outputs];
                let mut back = 0.0;
                for j in 0..layer.outputs {
                    gw[j] += a * delta[j];
                    back += w[j] * delta[j];
                }
                next[i] = if below[i] > 0.0 { back } else { 0.0 };
            }
            delta = next;
        }
        loss
    }

    /// Mean cross-entropy over the rows and its gradient.
    pub fn loss_and_gradients(&self, x: &FeatureMatrix, y: &[bool]) -> (f64, Gradients) {
        let mut grads = self.empty_gradients();
        let mut loss = 0.0;
        for (row, &label) in x.rows().zip(y) {
            loss += self.backprop(row, label, &mut grads);
        }
        let n = x.n_rows() as f64;
        for g in &mut grads.layers {
            g.weights.iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v /= n);
        }
        (loss / n, grads)
    }

    pub fn train(x: &FeatureMatrix, y: &[bool], params: &NnParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::init(x.n_features(), &params.hidden, &mut rng);
        let mut grads = net.empty_gradients();
        let mut first_moment = net.empty_gradients();
        let mut second_moment = net.empty_gradients();
        let mut order: Vec<usize> = (0..x.n_rows()).collect();
        let mut touched: Vec<usize> = Vec::new();
        let mut seen = vec![false; x.n_features()];
        let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
        let mut step = 0i32;

        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(params.batch_size.max(1)) {
                for &r in batch {
                    let row = x.row(r);
                    for (i, _) in row.iter() {
                        if !seen[i] {
                            seen[i] = true;
                            touched.push(i);
                        }
                    }
                    net.backprop(row, y[r], &mut grads);
                }
                step += 1;
                let b = batch.len() as f64;
                let lr = params.learning_rate * (1.0 - f64::powi(beta2, step)).sqrt() / (1.0 - f64::powi(beta1, step));
                let adam = |p: &mut f64, g: &mut f64, m: &mut f64, v: &mut f64| {
                    let grad = *g / b;
                    *m = beta1 * *m + (1.0 - beta1) * grad;
                    *v = beta2 * *v + (1.0 - beta2) * grad * grad;
                    *p -= lr * *m / (v.sqrt() + eps);
                    *g = 0.0;
                };
                for k in 0..net.layers.len() {
                    let (layer, g) = (&mut net.layers[k], &mut grads.layers[k]);
                    let (m, v) = (&mut first_moment.layers[k], &mut second_moment.layers[k]);
                    if k == 0 {
                        let width = layer.outputs;
                        for &i in &touched {
                            for j in i * width..(i + 1) * width {
                                adam(&mut layer.weights[j], &mut g.weights[j], &mut m.weights[j], &mut v.weights[j]);
                            }
                        }
                    } else {
                        for j in 0..layer.weights.len() {
                            adam(&mut layer.weights[j], &mut g.weights[j], &mut m.weights[j], &mut v.weights[j]);
                        }
                    }
                    for j in 0..layer.bias.len() {
                        adam(&mut layer.bias[j], &mut g.bias[j], &mut m.bias[j], &mut v.bias[j]);
                    }
                }
                for &i in &touched {
                    seen[i] = false;
                }
                touched.clear();
            }
        }
        net
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_half() {
        let net = Mlp::zeros(5, &[4]);
        let x = FeatureMatrix::from_dense(5, &[vec![1.0, -2.0, 3.0, 0.0, 5.0]]).unwrap();
        assert_eq!(net.predict(x.row(0)), 0.5);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::init(5, &[6, 3], &mut rng);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..5).map(|_| if rng.gen_bool(0.7) { rng.gen_range(-1.5..1.5) } else { 0.0 }).collect())
            .collect();
        let y: Vec<bool> = (0..10).map(|i| i % 3 == 0).collect();
        let x = FeatureMatrix::from_dense(5, &rows).unwrap();
        let (_, grads) = net.loss_and_gradients(&x, &y);
        let h = 1e-6;
        let mut checked = 0;
        for k in 0..net.layers.len() {
            let n_w = net.layers[k].weights.len();
            for p in 0..n_w + net.layers[k].bias.len() {
                let bump = |delta: f64| {
                    let mut n = net.clone();
                    if p < n_w {
                        n.layers[k].weights[p] += delta;
                    } else {
                        n.layers[k].bias[p - n_w] += delta;
                    }
                    n.loss_and_gradients(&x, &y).0
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                let analytic = if p < n_w { grads.layers[k].weights[p] } else { grads.layers[k].bias[p - n_w] };
                if analytic.abs() < 1e-7 && numeric.abs() < 1e-7 {
                    continue;
                }
                let rel = (numeric - analytic).abs() / analytic.abs().max(numeric.abs());
                assert!(rel < 1e-3, "layer {k} param {p}: {analytic} vs {numeric}");
                checked += 1;
            }
        }
        assert!(checked > 40);
    }
}
