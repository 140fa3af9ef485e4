//! Gradient-boosted regression trees for multi-class classification.
//!
//! Each boosting round fits one tree per class to the second-order
//! statistics of the softmax cross-entropy at the current margins:
//! `g = p - y`, `h = 2 p (1 - p)`. Trees are grown level by level with an
//! exact greedy search over all distinct feature values. For a node with
//! gradient sum `G` and hessian sum `H`:
//!
//! * leaf weight: `-G / (H + lambda)`, scaled by the learning rate
//! * split gain: `1/2 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma`
//!
//! with `lambda = 1`. A split is kept only if its gain is positive and both
//! children reach `min_child_weight` hessian mass.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparameters, Reader};
use super::{ClassifierError, ModelKind};
use crate::rng::Xoshiro256StarStar;

/// L2 penalty on leaf weights.
pub const LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_estimators: usize,
    pub subsample: f64,
    pub min_child_weight: f64,
    pub gamma: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { learning_rate: 0.3, max_depth: 6, n_estimators: 100, subsample: 1.0, min_child_weight: 1.0, gamma: 0.0 }
    }
}

impl GbtParams {
    pub fn from_hyper(h: &Hyperparameters) -> Result<Self, ClassifierError> {
        let r = Reader::new(ModelKind::Gbt, h)?;
        let d = Self::default();
        let p = Self {
            learning_rate: r.float("learning_rate", d.learning_rate)?,
            max_depth: r.usize("max_depth", d.max_depth)?,
            n_estimators: r.usize("n_estimators", d.n_estimators)?,
            subsample: r.float("subsample", d.subsample)?,
            min_child_weight: r.float("min_child_weight", d.min_child_weight)?,
            gamma: r.float("gamma", d.gamma)?,
        };
        r.check("learning_rate", p.learning_rate > 0.0 && p.learning_rate.is_finite(), "must be positive")?;
        r.check("subsample", p.subsample > 0.0 && p.subsample <= 1.0, "must be in (0, 1]")?;
        r.check("min_child_weight", p.min_child_weight >= 0.0, "must be non-negative")?;
        r.check("gamma", p.gamma >= 0.0, "must be non-negative")?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub n_classes: usize,
    /// `rounds[r][c]` is the tree for class `c` in round `r`.
    pub rounds: Vec<Vec<Tree>>,
}

fn softmax_row(margins: &[f64], out: &mut [f64]) {
    let m = margins.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(margins) {
        *o = (v - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

struct NodeStats {
    grad: f64,
    hess: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grows one tree with level-wise exact greedy search.
///
/// `sorted[f]` lists row indices ordered by feature `f`; `node_of[i]` is the
/// current node of row `i` or `usize::MAX` for rows outside the subsample.
fn grow_tree(
    x: ArrayView2<'_, f64>,
    sorted: &[Vec<usize>],
    grad: &[f64],
    hess: &[f64],
    in_sample: &[bool],
    p: &GbtParams,
) -> Tree {
    const NONE: usize = usize::MAX;
    let n = x.nrows();
    let mut node_of: Vec<usize> = (0..n).map(|i| if in_sample[i] { 0 } else { NONE }).collect();
    let mut nodes: Vec<Option<TreeNode>> = vec![None];
    let mut stats = vec![NodeStats {
        grad: (0..n).filter(|&i| in_sample[i]).map(|i| grad[i]).sum(),
        hess: (0..n).filter(|&i| in_sample[i]).map(|i| hess[i]).sum(),
    }];
    let mut frontier = vec![0usize];
    let leaf = |s: &NodeStats| -s.grad / (s.hess + LAMBDA) * p.learning_rate;

    for _depth in 0..p.max_depth {
        if frontier.is_empty() {
            break;
        }
        // map node id -> slot in frontier
        let mut slot = vec![NONE; nodes.len()];
        for (k, &id) in frontier.iter().enumerate() {
            slot[id] = k;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut acc_g = vec![0.0; frontier.len()];
        let mut acc_h = vec![0.0; frontier.len()];
        let mut last = vec![f64::NAN; frontier.len()];
        for (f, order) in sorted.iter().enumerate() {
            acc_g.iter_mut().for_each(|v| *v = 0.0);
            acc_h.iter_mut().for_each(|v| *v = 0.0);
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &i in order {
                let id = node_of[i];
                if id == NONE || slot[id] == NONE {
                    continue;
                }
                let k = slot[id];
                let v = x[[i, f]];
                if !last[k].is_nan() && v > last[k] {
                    let s = &stats[id];
                    let (gl, hl) = (acc_g[k], acc_h[k]);
                    let (gr, hr) = (s.grad - gl, s.hess - hl);
                    if hl >= p.min_child_weight && hr >= p.min_child_weight {
                        let gain = 0.5
                            * (gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA) - s.grad * s.grad / (s.hess + LAMBDA))
                            - p.gamma;
                        if best[k].is_none_or(|b| gain > b.gain) {
                            let mut threshold = 0.5 * (last[k] + v);
                            if threshold <= last[k] {
                                threshold = v;
                            }
                            best[k] = Some(Candidate { gain, feature: f, threshold });
                        }
                    }
                }
                acc_g[k] += grad[i];
                acc_h[k] += hess[i];
                last[k] = v;
            }
        }

        let mut next = Vec::new();
        let mut split_of = vec![None; nodes.len()];
        for (k, &id) in frontier.iter().enumerate() {
            match best[k] {
                Some(c) if c.gain > 0.0 => {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(None);
                    nodes.push(None);
                    stats.push(NodeStats { grad: 0.0, hess: 0.0 });
                    stats.push(NodeStats { grad: 0.0, hess: 0.0 });
                    nodes[id] = Some(TreeNode::Split { feature: c.feature, threshold: c.threshold, left, right });
                    split_of[id] = Some((c.feature, c.threshold, left, right));
                    next.push(left);
                    next.push(right);
                }
                _ => nodes[id] = Some(TreeNode::Leaf { value: leaf(&stats[id]) }),
            }
        }
        split_of.resize(nodes.len(), None);
        for i in 0..n {
            let id = node_of[i];
            if id == NONE {
                continue;
            }
            if let Some((f, t, l, r)) = split_of[id] {
                let child = if x[[i, f]] < t { l } else { r };
                node_of[i] = child;
                stats[child].grad += grad[i];
                stats[child].hess += hess[i];
            }
        }
        frontier = next;
    }
    for id in frontier {
        nodes[id] = Some(TreeNode::Leaf { value: leaf(&stats[id]) });
    }
    Tree { nodes: nodes.into_iter().map(|n| n.expect("every node resolved")).collect() }
}

impl GbtModel {
    pub fn fit(params: &GbtParams, x: ArrayView2<'_, f64>, y: &[usize], n_classes: usize, seed: u64) -> Self {
        Self::fit_with_trace(params, x, y, n_classes, seed, |_, _| {})
    }

    /// Like [`GbtModel::fit`], calling `trace(round, margins)` after each
    /// boosting round.
    pub fn fit_with_trace(
        params: &GbtParams,
        x: ArrayView2<'_, f64>,
        y: &[usize],
        n_classes: usize,
        seed: u64,
        mut trace: impl FnMut(usize, &Array2<f64>),
    ) -> Self {
        let n = x.nrows();
        let sorted: Vec<Vec<usize>> = (0..x.ncols())
            .map(|f| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let mut margins = Array2::<f64>::zeros((n, n_classes));
        let mut rng = Xoshiro256StarStar::derived(seed, &[0x6B7]);
        let mut rounds = Vec::with_capacity(params.n_estimators);
        let mut prob = vec![0.0; n_classes];
        let mut grads = vec![vec![0.0; n]; n_classes];
        let mut hess = vec![vec![0.0; n]; n_classes];
        for round in 0..params.n_estimators {
            for i in 0..n {
                softmax_row(margins.row(i).as_slice().unwrap(), &mut prob);
                for c in 0..n_classes {
                    let target = (y[i] == c) as u8 as f64;
                    grads[c][i] = prob[c] - target;
                    hess[c][i] = (2.0 * prob[c] * (1.0 - prob[c])).max(1e-16);
                }
            }
            let in_sample: Vec<bool> = if params.subsample < 1.0 {
                (0..n).map(|_| rng.next_f64() < params.subsample).collect()
            } else {
                vec![true; n]
            };
            let trees: Vec<Tree> = (0..n_classes)
                .into_par_iter()
                .map(|c| grow_tree(x, &sorted, &grads[c], &hess[c], &in_sample, params))
                .collect();
            for (c, t) in trees.iter().enumerate() {
                for i in 0..n {
                    margins[[i, c]] += t.predict_row(x.row(i));
                }
            }
            rounds.push(trees);
            trace(round, &margins);
        }
        Self { params: params.clone(), n_classes, rounds }
    }

    pub fn margins(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut m = Array2::zeros((x.nrows(), self.n_classes));
        for (i, row) in x.outer_iter().enumerate() {
            for trees in &self.rounds {
                for (c, t) in trees.iter().enumerate() {
                    m[[i, c]] += t.predict_row(row);
                }
            }
        }
        m
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let m = self.margins(x);
        let mut out = Array2::zeros(m.raw_dim());
        let mut buf = vec![0.0; self.n_classes];
        for (i, row) in m.outer_iter().enumerate() {
            softmax_row(row.as_slice().unwrap(), &mut buf);
            for (c, &v) in buf.iter().enumerate() {
                out[[i, c]] = v;
            }
        }
        out
    }
}

/// Mean softmax cross-entropy of margins against class positions.
pub fn margin_cross_entropy(margins: &Array2<f64>, y: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, row) in margins.outer_iter().enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[y[i]];
    }
    total / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy(seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = Xoshiro256StarStar::new(seed);
        let n = 300;
        let x = Array2::from_shape_fn((n, 3), |_| rng.normal());
        let y = (0..n)
            .map(|i| {
                let s = x[[i, 0]] + 0.5 * x[[i, 1]] * x[[i, 2]];
                if s < -0.5 {
                    0
                } else if s < 0.5 {
                    1
                } else {
                    2
                }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn empty_ensemble_is_uniform() {
        let (x, y) = toy(1);
        let p = GbtParams { n_estimators: 0, ..GbtParams::default() };
        let m = GbtModel::fit(&p, x.view(), &y, 3, 0);
        for v in m.predict_proba(x.view()).iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn training_loss_non_increasing() {
        let (x, y) = toy(2);
        let p = GbtParams { learning_rate: 0.3, max_depth: 3, n_estimators: 60, ..GbtParams::default() };
        let mut losses = Vec::new();
        GbtModel::fit_with_trace(&p, x.view(), &y, 3, 0, |_, m| losses.push(margin_cross_entropy(m, &y)));
        assert!(losses[0] < (3.0f64).ln());
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn tree_shape_invariants() {
        let (x, y) = toy(3);
        let p = GbtParams { max_depth: 3, n_estimators: 20, subsample: 0.8, ..GbtParams::default() };
        let m = GbtModel::fit(&p, x.view(), &y, 3, 5);
        for t in m.rounds.iter().flatten() {
            assert!(t.depth() <= 3);
            for node in &t.nodes {
                if let TreeNode::Split { threshold, .. } = node {
                    assert!(threshold.is_finite());
                }
            }
        }
        let acc = m
            .predict_proba(x.view())
            .outer_iter()
            .zip(&y)
            .filter(|(r, &c)| r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 == c)
            .count() as f64
            / y.len() as f64;
        assert!(acc > 0.85, "train accuracy {acc}");
    }

    #[test]
    fn stump_on_separable_data() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [0usize, 0, 1, 1];
        let p = GbtParams { max_depth: 1, n_estimators: 1, min_child_weight: 0.0, ..GbtParams::default() };
        let m = GbtModel::fit(&p, x.view(), &y, 2, 0);
        match m.rounds[0][0].nodes[0] {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 1.5);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn gamma_blocks_weak_splits() {
        let (x, y) = toy(4);
        let p = GbtParams { gamma: 1e9, n_estimators: 3, ..GbtParams::default() };
        let m = GbtModel::fit(&p, x.view(), &y, 3, 0);
        assert!(m.rounds.iter().flatten().all(|t| t.nodes.len() == 1));
    }
}
