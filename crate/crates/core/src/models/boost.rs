//! Discrete AdaBoost over depth-limited decision trees.
//!
//! Each round fits a tree to the current example weights by weighted Gini
//! impurity, weighs it by `alpha = ln((1 - err) / err) / 2`, and scales up
//! the weights of the examples it got wrong. The ensemble margin
//! `f(x) = sum(alpha * h(x))` maps to a probability with `sigmoid(2 f(x))`.

use serde::{Deserialize, Serialize};

use super::matrix::{FeatureMatrix, SparseRow};
use super::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtParams {
    pub rounds: usize,
    pub max_depth: usize,
}

impl Default for BtParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { vote: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn vote(&self, row: SparseRow<'_>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { vote } => return vote,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row.get(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub alpha: f64,
    pub tree: Tree,
}

/// Ensemble training statistics after each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    /// Mean of `exp(-y f(x))` over the training set.
    pub exp_loss: f64,
    /// Share of training examples on the wrong side of `f(x) = 0`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub rounds: Vec<Round>,
    pub history: Vec<RoundStats>,
}

const MIN_ERROR: f64 = 1e-10;

impl BoostedTrees {
    pub fn margin(&self, row: SparseRow<'_>) -> f64 {
        self.rounds.iter().map(|r| r.alpha * r.tree.vote(row)).sum()
    }

    pub fn predict(&self, row: SparseRow<'_>) -> f64 {
        sigmoid(2.0 * self.margin(row))
    }

    pub fn train(x: &FeatureMatrix, y: &[bool], params: &BtParams) -> Self {
        let n = x.n_rows();
        let signs: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
        let columns = x.sorted_columns();
        let mut weights = vec![1.0 / n as f64; n];
        let mut margins = vec![0.0; n];
        let mut rounds = Vec::new();
        let mut history = Vec::new();

        for _ in 0..params.rounds {
            let tree = fit_tree(x, &columns, &signs, &weights, params.max_depth);
            let votes: Vec<f64> = x.rows().map(|row| tree.vote(row)).collect();
            let err: f64 = (0..n).filter(|&i| votes[i] != signs[i]).map(|i| weights[i]).sum();
            if err >= 0.5 {
                break;
            }
            let err = err.max(MIN_ERROR);
            let alpha = 0.5 * ((1.0 - err) / err).ln();
            let mut total = 0.0;
            for i in 0..n {
                weights[i] *= (-alpha * signs[i] * votes[i]).exp();
                total += weights[i];
                margins[i] += alpha * votes[i];
            }
            weights.iter_mut().for_each(|w| *w /= total);
            rounds.push(Round { alpha, tree });
            history.push(RoundStats {
                exp_loss: margins.iter().zip(&signs).map(|(m, s)| (-m * s).exp()).sum::<f64>() / n as f64,
                error: margins
                    .iter()
                    .zip(&signs)
                    .filter(|(m, s)| (**m >= 0.0) != (**s > 0.0))
                    .count() as f64
                    / n as f64,
            });
            if err <= MIN_ERROR {
                // The last tree alone separates the weighted training set.
                break;
            }
        }
        Self { rounds, history }
    }
}

#[derive(Clone, Copy, Default)]
struct Mass {
    pos: f64,
    neg: f64,
    count: usize,
}

impl Mass {
    fn add(&mut self, sign: f64, w: f64) {
        if sign > 0.0 {
            self.pos += w;
        } else {
            self.neg += w;
        }
        self.count += 1;
    }

    fn minus(self, other: Mass) -> Mass {
        Mass {
            pos: self.pos - other.pos,
            neg: self.neg - other.neg,
            count: self.count - other.count,
        }
    }

    fn plus(self, other: Mass) -> Mass {
        Mass {
            pos: self.pos + other.pos,
            neg: self.neg + other.neg,
            count: self.count + other.count,
        }
    }

    /// Weighted Gini impurity times the node weight.
    fn impurity(&self) -> f64 {
        let w = self.pos + self.neg;
        if w <= 0.0 {
            0.0
        } else {
            w - (self.pos * self.pos + self.neg * self.neg) / w
        }
    }

    fn vote(&self) -> f64 {
        if self.pos > self.neg {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

const NO_NODE: u32 = u32::MAX;

fn fit_tree(
    x: &FeatureMatrix,
    columns: &[Vec<(u32, f64)>],
    signs: &[f64],
    weights: &[f64],
    max_depth: usize,
) -> Tree {
    let n = signs.len();
    let mut nodes = Vec::new();
    let mut totals = Mass::default();
    for i in 0..n {
        totals.add(signs[i], weights[i]);
    }
    nodes.push(TreeNode::Leaf { vote: totals.vote() });
    // Frontier node of each row, NO_NODE once its node is final.
    let mut node_of = vec![0u32; n];
    let mut frontier: Vec<(usize, Mass)> = vec![(0, totals)];

    for _ in 0..max_depth {
        // Only impure nodes are worth splitting.
        frontier.retain(|(_, m)| m.pos > 0.0 && m.neg > 0.0);
        if frontier.is_empty() {
            break;
        }
        let mut slot = vec![NO_NODE; nodes.len()];
        for (k, (id, _)) in frontier.iter().enumerate() {
            slot[*id] = k as u32;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut buffers: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); frontier.len()];

        for (feature, column) in columns.iter().enumerate() {
            for b in &mut buffers {
                b.clear();
            }
            for &(row, value) in column {
                let node = node_of[row as usize];
                if node == NO_NODE {
                    continue;
                }
                let k = slot[node as usize];
                if k != NO_NODE {
                    let r = row as usize;
                    buffers[k as usize].push((value, signs[r], weights[r]));
                }
            }
            for (k, (_, mass)) in frontier.iter().enumerate() {
                if let Some(c) = best_split(feature, &buffers[k], *mass) {
                    if best[k].is_none_or(|b| c.impurity < b.impurity) {
                        best[k] = Some(c);
                    }
                }
            }
        }

        // Materialize the splits and route rows to the children.
        let mut children: Vec<Option<(usize, usize, Candidate)>> = vec![None; frontier.len()];
        let mut next_frontier = Vec::new();
        for (k, (id, _)) in frontier.iter().enumerate() {
            if let Some(c) = best[k] {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(TreeNode::Leaf { vote: -1.0 });
                nodes.push(TreeNode::Leaf { vote: -1.0 });
                nodes[*id] = TreeNode::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                };
                children[k] = Some((left, right, c));
            }
        }
        let mut child_mass = vec![Mass::default(); nodes.len()];
        for r in 0..n {
            let node = node_of[r];
            if node == NO_NODE {
                continue;
            }
            let k = slot[node as usize];
            if k == NO_NODE {
                node_of[r] = NO_NODE;
                continue;
            }
            match children[k as usize] {
                Some((left, right, c)) => {
                    let value = x.row(r).get(c.feature);
                    let child = if value <= c.threshold { left } else { right };
                    node_of[r] = child as u32;
                    child_mass[child].add(signs[r], weights[r]);
                }
                None => node_of[r] = NO_NODE,
            }
        }
        for (left, right, _) in children.iter().flatten() {
            for &id in &[*left, *right] {
                nodes[id] = TreeNode::Leaf {
                    vote: child_mass[id].vote(),
                };
                next_frontier.push((id, child_mass[id]));
            }
        }
        frontier = next_frontier;
    }
    Tree { nodes }
}

/// Best threshold on one feature for one node. `entries` holds the node's
/// non-zero values sorted ascending; rows missing from it sit at zero.
fn best_split(feature: usize, entries: &[(f64, f64, f64)], node: Mass) -> Option<Candidate> {
    let mut nonzero = Mass::default();
    for &(_, s, w) in entries {
        nonzero.add(s, w);
    }
    let zeros = node.minus(nonzero);

    // Value groups in ascending order, the implicit zero group in its place.
    let split_at = entries.partition_point(|e| e.0 < 0.0);
    let mut groups: Vec<(f64, Mass)> = Vec::new();
    let push = |value: f64, s: f64, w: f64, groups: &mut Vec<(f64, Mass)>| match groups.last_mut() {
        Some((v, m)) if *v == value => m.add(s, w),
        _ => {
            let mut m = Mass::default();
            m.add(s, w);
            groups.push((value, m));
        }
    };
    for &(v, s, w) in &entries[..split_at] {
        push(v, s, w, &mut groups);
    }
    if zeros.count > 0 {
        groups.push((0.0, zeros));
    }
    for &(v, s, w) in &entries[split_at..] {
        push(v, s, w, &mut groups);
    }
    if groups.len() < 2 {
        return None;
    }

    let mut left = Mass::default();
    let mut best: Option<Candidate> = None;
    for pair in groups.windows(2) {
        left = left.plus(pair[0].1);
        let right = node.minus(left);
        let impurity = left.impurity() + right.impurity();
        if best.is_none_or(|b| impurity < b.impurity) {
            best = Some(Candidate {
                feature,
                threshold: 0.5 * (pair[0].0 + pair[1].0),
                impurity,
            });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn xor() -> (FeatureMatrix, Vec<bool>) {
        let rows = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        (FeatureMatrix::from_dense(2, &rows).unwrap(), vec![false, true, true, false])
    }

    #[test]
    fn depth_two_trees_fit_xor() {
        let (x, y) = xor();
        let model = BoostedTrees::train(&x, &y, &BtParams { rounds: 50, max_depth: 2 });
        for (row, &label) in x.rows().zip(&y) {
            assert_eq!(model.predict(row) >= 0.5, label);
        }
    }

    #[test]
    fn stumps_cannot_fit_xor() {
        let (x, y) = xor();
        let model = BoostedTrees::train(&x, &y, &BtParams { rounds: 50, max_depth: 1 });
        assert!(model.rounds.is_empty());
    }

    #[test]
    fn negative_values_split_around_zero() {
        let rows = [[-2.0], [-1.0], [0.0], [0.0], [1.5]];
        let y = [true, true, false, false, false];
        let x = FeatureMatrix::from_dense(1, &rows).unwrap();
        let model = BoostedTrees::train(&x, &y, &BtParams { rounds: 5, max_depth: 1 });
        let tree = &model.rounds[0].tree;
        assert!(matches!(tree.nodes[0], TreeNode::Split { threshold, .. } if threshold == -0.5));
        for (row, &label) in x.rows().zip(&y) {
            assert_eq!(model.predict(row) >= 0.5, label);
        }
    }

    #[test]
    fn exponential_loss_never_increases() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..120)
                .map(|_| (0..6).map(|_| rng.gen_range(0..4) as f64).collect())
                .collect();
            let y: Vec<bool> = rows.iter().map(|r| r[0] + r[1] > 3.0 || rng.gen_bool(0.1)).collect();
            let x = FeatureMatrix::from_dense(6, &rows).unwrap();
            let model = BoostedTrees::train(&x, &y, &BtParams { rounds: 40, max_depth: 2 });
            let mut prev = 1.0;
            for s in &model.history {
                assert!(s.exp_loss <= prev * (1.0 + 1e-12), "seed {seed}: {} > {prev}", s.exp_loss);
                assert!(s.error <= s.exp_loss + 1e-12);
                prev = s.exp_loss;
            }
        }
    }
}
