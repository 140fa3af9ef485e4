//! Shapley-value feature attribution with interventional masking.
//!
//! The value of a coalition `S` for an explained row `x` is the model output
//! averaged over background rows `b` with features outside `S` taken from
//! `b`: `v(S) = mean_b f(x_S, b_~S)`. For up to `exact_threshold` features
//! every coalition is evaluated and `phi` follows the Shapley formula;
//! otherwise coalitions are drawn under the Shapley kernel and `phi` solves
//! the kernel-weighted least squares problem with `sum(phi) = v(full) - v(empty)`
//! imposed exactly.

mod report;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{self, TrainedModel};
use crate::dataset::{stratified_sample, ClassId, Dataset};
use crate::rng::Xoshiro256StarStar;

pub use report::{ranking_svg, write_ranking_json, write_ranking_svg, write_shap_csv, SVG_TOP};

/// Rows per batched model call when evaluating coalitions.
const EVAL_CHUNK_ROWS: usize = 8192;

#[derive(Debug, Error)]
pub enum ShapError {
    #[error("background set is empty")]
    EmptyBackground,
    #[error("coalition budget {budget} is below the minimum {needed}")]
    BudgetTooSmall { budget: usize, needed: usize },
    #[error("input has {got} columns, model expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("requested {m} features but only {available} are ranked")]
    MTooLarge { m: usize, available: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A vector-valued function of feature rows, e.g. class probabilities.
pub trait Predictor: Sync {
    fn n_features(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn evaluate(&self, x: ArrayView2<'_, f64>) -> Array2<f64>;
}

impl Predictor for TrainedModel {
    fn n_features(&self) -> usize {
        TrainedModel::n_features(self)
    }

    fn n_outputs(&self) -> usize {
        self.n_classes()
    }

    fn evaluate(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.predict_proba_unchecked(x)
    }
}

/// Single-output linear function `w . x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Predictor for LinearPredictor {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn n_outputs(&self) -> usize {
        1
    }

    fn evaluate(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let w = ArrayView1::from(&self.weights[..]);
        x.dot(&w).mapv(|v| v + self.bias).insert_axis(ndarray::Axis(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoalitionBudget {
    /// Widths up to this use exhaustive enumeration.
    pub exact_threshold: usize,
    /// Coalitions evaluated per row in sampled mode, counting the empty and
    /// full coalitions.
    pub samples: usize,
}

impl Default for CoalitionBudget {
    fn default() -> Self {
        Self { exact_threshold: 15, samples: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapVector {
    pub phi: Vec<f64>,
    /// `v(empty)`: mean output over the background.
    pub base_value: f64,
    /// `v(full)`: the model output at the explained row.
    pub output: f64,
    pub exact: bool,
}

/// Evaluates `v(S)` for each coalition mask (bit `j` set = feature `j` taken
/// from `x`) on output `out`.
fn coalition_values<P: Predictor + ?Sized>(
    model: &P,
    x: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
    masks: &[Vec<bool>],
    out: usize,
) -> Vec<f64> {
    let nb = background.nrows();
    let m = x.len();
    let per_chunk = (EVAL_CHUNK_ROWS / nb).max(1);
    let mut values = Vec::with_capacity(masks.len());
    for group in masks.chunks(per_chunk) {
        let mut rows = Array2::zeros((group.len() * nb, m));
        for (g, mask) in group.iter().enumerate() {
            for b in 0..nb {
                let mut r = rows.row_mut(g * nb + b);
                for j in 0..m {
                    r[j] = if mask[j] { x[j] } else { background[[b, j]] };
                }
            }
        }
        let y = model.evaluate(rows.view());
        for g in 0..group.len() {
            let s: f64 = (0..nb).map(|b| y[[g * nb + b, out]]).sum();
            values.push(s / nb as f64);
        }
    }
    values
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn explain_exact<P: Predictor + ?Sized>(
    model: &P,
    x: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
    out: usize,
) -> ShapVector {
    let m = x.len();
    let n_masks = 1usize << m;
    let masks: Vec<Vec<bool>> = (0..n_masks).map(|s| (0..m).map(|j| s >> j & 1 == 1).collect()).collect();
    let v = coalition_values(model, x, background, &masks, out);
    // w(s) = s! (m - s - 1)! / m!
    let w: Vec<f64> = (0..m).map(|s| 1.0 / (m as f64 * binomial(m - 1, s))).collect();
    let mut phi = vec![0.0; m];
    for s in 0..n_masks {
        let size = (s as u64).count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if s >> j & 1 == 0 {
                *p += w[size] * (v[s | 1 << j] - v[s]);
            }
        }
    }
    ShapVector { phi, base_value: v[0], output: v[n_masks - 1], exact: true }
}

fn random_subset(rng: &mut Xoshiro256StarStar, m: usize, size: usize) -> Vec<bool> {
    let mut mask = vec![false; m];
    for j in rng.sample_indices(m, size) {
        mask[j] = true;
    }
    mask
}

/// Kernel-weighted coalitions: whole sizes are enumerated from the outside
/// in while the budget allows, the rest are sampled in complementary pairs.
fn kernel_coalitions(m: usize, budget: usize, rng: &mut Xoshiro256StarStar) -> (Vec<Vec<bool>>, Vec<f64>) {
    let mut remaining = budget - 2;
    let size_weight: Vec<f64> =
        (0..=m).map(|s| if s == 0 || s == m { 0.0 } else { (m - 1) as f64 / (s * (m - s)) as f64 }).collect();
    let total: f64 = size_weight.iter().sum();
    let mut share: Vec<f64> = size_weight.iter().map(|w| w / total).collect();
    let mut masks = Vec::new();
    let mut weights = Vec::new();
    let mut mass_left = 1.0;
    let n_pairs = (m - 1) / 2 + (m - 1) % 2;
    let mut complete = vec![false; m + 1];
    for p in 1..=n_pairs {
        let sizes: Vec<usize> = if p == m - p { vec![p] } else { vec![p, m - p] };
        let count: f64 = sizes.iter().map(|&s| binomial(m, s)).sum();
        if count > remaining as f64 {
            break;
        }
        // enumerate all subsets of these sizes
        for &s in &sizes {
            let per = share[s] / binomial(m, s);
            for combo in combinations(m, s) {
                masks.push(combo);
                weights.push(per);
            }
            mass_left -= share[s];
            complete[s] = true;
            share[s] = 0.0;
        }
        remaining -= count as usize;
    }
    if remaining >= 2 && mass_left > 1e-12 {
        let open: Vec<usize> = (1..m).filter(|&s| !complete[s]).collect();
        let open_mass: f64 = open.iter().map(|&s| share[s]).sum();
        let mut sampled: Vec<(Vec<bool>, f64)> = Vec::new();
        let mut seen: HashMap<Vec<bool>, usize> = HashMap::new();
        let n_draws = remaining / 2;
        for _ in 0..n_draws {
            let mut u = rng.next_f64() * open_mass;
            let mut size = *open.last().unwrap();
            for &s in &open {
                if u < share[s] {
                    size = s;
                    break;
                }
                u -= share[s];
            }
            let mask = random_subset(rng, m, size);
            let comp: Vec<bool> = mask.iter().map(|b| !b).collect();
            for mk in [mask, comp] {
                match seen.get(&mk) {
                    Some(&i) => sampled[i].1 += 1.0,
                    None => {
                        seen.insert(mk.clone(), sampled.len());
                        sampled.push((mk, 1.0));
                    }
                }
            }
        }
        let hits: f64 = sampled.iter().map(|e| e.1).sum();
        for (mk, c) in sampled {
            masks.push(mk);
            weights.push(mass_left * c / hits);
        }
    }
    (masks, weights)
}

fn combinations(m: usize, k: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut mask = vec![false; m];
        idx.iter().for_each(|&i| mask[i] = true);
        out.push(mask);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < m - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn explain_sampled<P: Predictor + ?Sized>(
    model: &P,
    x: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
    out: usize,
    budget: usize,
    rng: &mut Xoshiro256StarStar,
) -> ShapVector {
    let m = x.len();
    let (masks, weights) = kernel_coalitions(m, budget, rng);
    let ends = vec![vec![false; m], vec![true; m]];
    let ev = coalition_values(model, x, background, &ends, out);
    let (base, full) = (ev[0], ev[1]);
    let delta = full - base;
    let v = coalition_values(model, x, background, &masks, out);
    // eliminate the last coordinate through the efficiency constraint
    let k = m - 1;
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    for ((mask, &w), &val) in masks.iter().zip(&weights).zip(&v) {
        let zl = mask[m - 1] as u8 as f64;
        for j in 0..k {
            row[j] = mask[j] as u8 as f64 - zl;
        }
        let y = val - base - zl * delta;
        for i in 0..k {
            if row[i] == 0.0 {
                continue;
            }
            rhs[i] += w * row[i] * y;
            for j in 0..k {
                a[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    let sol = a.svd(true, true).solve(&rhs, 1e-12).unwrap_or_else(|_| DVector::zeros(k));
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    ShapVector { phi, base_value: base, output: full, exact: false }
}

/// Explains output column `output` of `model` at `x`.
pub fn shap_explain<P: Predictor + ?Sized>(
    model: &P,
    x: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
    output: usize,
    budget: &CoalitionBudget,
    seed: u64,
) -> Result<ShapVector, ShapError> {
    let m = model.n_features();
    if x.len() != m || background.ncols() != m {
        let got = if x.len() != m { x.len() } else { background.ncols() };
        return Err(ShapError::WidthMismatch { expected: m, got });
    }
    if background.nrows() == 0 {
        return Err(ShapError::EmptyBackground);
    }
    if m <= budget.exact_threshold {
        return Ok(explain_exact(model, x, background, output));
    }
    if budget.samples < m + 2 {
        return Err(ShapError::BudgetTooSmall { budget: budget.samples, needed: m + 2 });
    }
    let mut rng = Xoshiro256StarStar::derived(seed, &[0x54A9]);
    Ok(explain_sampled(model, x, background, output, budget.samples, &mut rng))
}

/// Attributions for a batch of rows, each explaining the row's predicted
/// output column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub features: Vec<String>,
    /// `values[[i, j]]`: contribution of feature `j` to row `i`.
    pub values: Array2<f64>,
    /// Mean background output per output column.
    pub base_values: Vec<f64>,
    /// Output column explained for each row.
    pub explained: Vec<usize>,
    /// Class id of every output column, when the model is a classifier.
    pub classes: Vec<ClassId>,
    pub exact: bool,
}

/// One [`shap_explain`] per row of `sample`, explaining the predicted
/// class. Row `i` draws coalitions from `derived(seed, [i])`.
pub fn shap_matrix<P: Predictor + ?Sized>(
    model: &P,
    features: &[String],
    sample: ArrayView2<'_, f64>,
    background: ArrayView2<'_, f64>,
    budget: &CoalitionBudget,
    seed: u64,
) -> Result<ShapMatrix, ShapError> {
    let m = model.n_features();
    if sample.ncols() != m {
        return Err(ShapError::WidthMismatch { expected: m, got: sample.ncols() });
    }
    if background.nrows() == 0 {
        return Err(ShapError::EmptyBackground);
    }
    let preds = model.evaluate(sample);
    let explained: Vec<usize> = preds.outer_iter().map(classifiers::argmax).collect();
    let rows: Vec<Result<ShapVector, ShapError>> = (0..sample.nrows())
        .into_par_iter()
        .map(|i| {
            shap_explain(
                model,
                sample.row(i),
                background,
                explained[i],
                budget,
                crate::rng::derive_seed(seed, &[i as u64]),
            )
        })
        .collect();
    let mut values = Array2::zeros((sample.nrows(), m));
    let mut exact = true;
    for (i, r) in rows.into_iter().enumerate() {
        let r = r?;
        exact &= r.exact;
        values.row_mut(i).assign(&Array1::from(r.phi));
    }
    let bg = model.evaluate(background);
    let base_values = (0..model.n_outputs()).map(|c| bg.column(c).mean().unwrap_or(0.0)).collect();
    Ok(ShapMatrix { features: features.to_vec(), values, base_values, explained, classes: Vec::new(), exact })
}

/// [`shap_matrix`] for a trained classifier on dataset rows.
pub fn explain_model(
    model: &TrainedModel,
    sample: &Dataset,
    background: &Dataset,
    budget: &CoalitionBudget,
    seed: u64,
) -> Result<ShapMatrix, ShapError> {
    let mut sm = shap_matrix(model, &model.variables, sample.values(), background.values(), budget, seed)?;
    sm.classes = model.classes.clone();
    Ok(sm)
}

/// Stratified background of at most `n` rows.
pub fn background_sample(ds: &Dataset, n: usize, seed: u64) -> Dataset {
    if n >= ds.n_samples() {
        return ds.clone();
    }
    ds.select_rows(&stratified_sample(ds, n, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub feature: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<RankEntry>,
}

/// Orders features by mean |phi|, descending; ties by feature id.
pub fn rank_features(sm: &ShapMatrix) -> Ranking {
    let n = sm.values.nrows().max(1) as f64;
    let mut entries: Vec<RankEntry> = sm
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| RankEntry {
            feature: f.clone(),
            importance: sm.values.column(j).iter().map(|v| v.abs()).sum::<f64>() / n,
        })
        .collect();
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance).then_with(|| a.feature.cmp(&b.feature)));
    Ranking { entries }
}

impl Ranking {
    pub fn features(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.feature.clone()).collect()
    }
}

/// The `m` most important feature ids, in rank order.
pub fn select_top(r: &Ranking, m: usize) -> Result<Vec<String>, ShapError> {
    if m > r.entries.len() {
        return Err(ShapError::MTooLarge { m, available: r.entries.len() });
    }
    Ok(r.entries[..m].iter().map(|e| e.feature.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Shapley values by averaging marginal contributions over all orderings.
    fn permutation_oracle<P: Predictor>(
        p: &P,
        x: ArrayView1<'_, f64>,
        bg: ArrayView2<'_, f64>,
        out: usize,
    ) -> Vec<f64> {
        let m = x.len();
        let value = |mask: &[bool]| coalition_values(p, x, bg, &[mask.to_vec()], out)[0];
        let mut perm: Vec<usize> = (0..m).collect();
        let mut phi = vec![0.0; m];
        let mut count = 0.0;
        fn next_perm(a: &mut [usize]) -> bool {
            let n = a.len();
            if n < 2 {
                return false;
            }
            let mut i = n - 1;
            while i > 0 && a[i - 1] >= a[i] {
                i -= 1;
            }
            if i == 0 {
                return false;
            }
            let mut j = n - 1;
            while a[j] <= a[i - 1] {
                j -= 1;
            }
            a.swap(i - 1, j);
            a[i..].reverse();
            true
        }
        loop {
            let mut mask = vec![false; m];
            let mut prev = value(&mask);
            for &j in &perm {
                mask[j] = true;
                let cur = value(&mask);
                phi[j] += cur - prev;
                prev = cur;
            }
            count += 1.0;
            if !next_perm(&mut perm) {
                break;
            }
        }
        phi.iter().map(|v| v / count).collect()
    }

    struct Interaction;
    impl Predictor for Interaction {
        fn n_features(&self) -> usize {
            4
        }
        fn n_outputs(&self) -> usize {
            2
        }
        fn evaluate(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
            Array2::from_shape_fn((x.nrows(), 2), |(i, c)| {
                let r = x.row(i);
                if c == 0 {
                    r[0] * r[1] + (r[2]).sin()
                } else {
                    r[3] * r[3] - r[0]
                }
            })
        }
    }

    #[test]
    fn exact_matches_permutation_oracle() {
        let bg = array![[0.1, -0.3, 0.7, 1.0], [1.2, 0.4, -0.5, 0.0], [-0.8, 0.9, 0.2, 0.3]];
        let x = array![0.5, -1.5, 2.0, 0.7];
        for out in 0..2 {
            let e = shap_explain(&Interaction, x.view(), bg.view(), out, &CoalitionBudget::default(), 0).unwrap();
            let o = permutation_oracle(&Interaction, x.view(), bg.view(), out);
            for (a, b) in e.phi.iter().zip(&o) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((e.phi.iter().sum::<f64>() - (e.output - e.base_value)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_closed_form() {
        let p = LinearPredictor { weights: vec![2.0, -1.0, 0.5], bias: 3.0 };
        let bg = array![[1.0, 2.0, 3.0], [3.0, 0.0, -1.0]];
        let x = array![0.0, 1.0, 5.0];
        let e = shap_explain(&p, x.view(), bg.view(), 0, &CoalitionBudget::default(), 0).unwrap();
        let means = [2.0, 1.0, 1.0];
        for j in 0..3 {
            assert!((e.phi[j] - p.weights[j] * (x[j] - means[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn null_player_and_symmetry() {
        let p = LinearPredictor { weights: vec![1.0, 1.0, 0.0], bias: 0.0 };
        let bg = array![[0.0, 1.0, 4.0], [1.0, 0.0, -2.0]];
        let e = shap_explain(&p, array![2.0, 2.0, 9.0].view(), bg.view(), 0, &CoalitionBudget::default(), 0).unwrap();
        assert_eq!(e.phi[2], 0.0);
        assert!((e.phi[0] - e.phi[1]).abs() < 1e-15);
    }

    #[test]
    fn sampled_with_full_budget_is_exact() {
        let x = array![0.5, -1.5, 2.0, 0.7];
        let bg = array![[0.1, -0.3, 0.7, 1.0], [1.2, 0.4, -0.5, 0.0]];
        let exact = shap_explain(&Interaction, x.view(), bg.view(), 0, &CoalitionBudget::default(), 0).unwrap();
        let b = CoalitionBudget { exact_threshold: 0, samples: 16 };
        let s = shap_explain(&Interaction, x.view(), bg.view(), 0, &b, 0).unwrap();
        assert!(!s.exact);
        for (a, c) in exact.phi.iter().zip(&s.phi) {
            assert!((a - c).abs() < 1e-9, "{a} vs {c}");
        }
    }

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(4, 4).len(), 1);
        assert_eq!(combinations(6, 1).len(), 6);
    }

    #[test]
    fn errors() {
        let p = LinearPredictor { weights: vec![1.0; 20], bias: 0.0 };
        let x = Array1::zeros(20);
        let bg = Array2::zeros((2, 20));
        let b = CoalitionBudget { exact_threshold: 15, samples: 21 };
        assert!(matches!(
            shap_explain(&p, x.view(), bg.view(), 0, &b, 0),
            Err(ShapError::BudgetTooSmall { budget: 21, needed: 22 })
        ));
        assert!(matches!(
            shap_explain(&p, x.view(), Array2::zeros((0, 20)).view(), 0, &b, 0),
            Err(ShapError::EmptyBackground)
        ));
    }

    #[test]
    fn ranking_and_selection() {
        let sm = ShapMatrix {
            features: vec!["f0".into(), "f1".into()],
            values: array![[1.0, -3.0], [1.0, 3.0]],
            base_values: vec![0.0],
            explained: vec![0, 0],
            classes: vec![],
            exact: true,
        };
        let r = rank_features(&sm);
        assert_eq!(r.features(), vec!["f1", "f0"]);
        assert_eq!(r.entries[0].importance, 3.0);
        assert_eq!(r.entries[1].importance, 1.0);
        assert_eq!(select_top(&r, 2).unwrap(), r.features());
        assert!(matches!(select_top(&r, 3), Err(ShapError::MTooLarge { m: 3, available: 2 })));
    }
}
