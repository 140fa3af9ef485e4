//! ICA-based LiNGAM.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::graph::{GraphKind, MixedGraph};
use super::CausalError;
use crate::rng::Xoshiro256StarStar;

/// Subset DP for the causal order is used up to this many variables.
const EXACT_ORDER_MAX: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LingamConfig {
    /// Edges with `|b| <` this are dropped.
    pub prune_threshold: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// ICA attempts from fresh random starts before giving up.
    pub restarts: usize,
    /// Residuals whose excess kurtosis is below this in absolute value
    /// count as Gaussian.
    pub kurtosis_floor: f64,
}

impl Default for LingamConfig {
    fn default() -> Self {
        Self { prune_threshold: 0.05, max_iter: 1000, tol: 1e-8, restarts: 10, kurtosis_floor: 0.2 }
    }
}

#[derive(Debug, Clone)]
pub struct LingamFit {
    pub graph: MixedGraph,
    /// `b[[i, j]]` is the effect of `j` on `i`, before pruning and ordering.
    pub b: Array2<f64>,
    /// Causal order, exogenous variables first.
    pub order: Vec<usize>,
    /// Excess kurtosis of each residual.
    pub kurtosis: Vec<f64>,
    /// Every residual looked Gaussian, so the order is unidentifiable.
    pub gaussian_degeneracy: bool,
    pub ica_iterations: usize,
}

fn sym_decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = DMatrix::from_diagonal(&e.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt()));
    &e.eigenvectors * inv_sqrt * e.eigenvectors.transpose() * w
}

/// Symmetric FastICA with the log-cosh contrast on whitened data `z`
/// (samples in columns). Returns the unmixing rows and iteration count.
fn fast_ica(z: &DMatrix<f64>, cfg: &LingamConfig, rng: &mut Xoshiro256StarStar) -> Option<(DMatrix<f64>, usize)> {
    let d = z.nrows();
    let n = z.ncols() as f64;
    let mut w = sym_decorrelate(&DMatrix::from_fn(d, d, |_, _| rng.normal()));
    for it in 1..=cfg.max_iter {
        let wz = &w * z;
        let g = wz.map(f64::tanh);
        let g_prime_mean: Vec<f64> = (0..d).map(|i| g.row(i).iter().map(|t| 1.0 - t * t).sum::<f64>() / n).collect();
        let mut next = &g * z.transpose() / n;
        for i in 0..d {
            for k in 0..d {
                next[(i, k)] -= g_prime_mean[i] * w[(i, k)];
            }
        }
        let next = sym_decorrelate(&next);
        let lim = (0..d).map(|i| (1.0 - next.row(i).dot(&w.row(i)).abs()).abs()).fold(0.0, f64::max);
        w = next;
        if lim < cfg.tol {
            return Some((w, it));
        }
    }
    None
}

/// Assignment of rows to columns minimizing the total cost (Hungarian
/// algorithm with potentials). `result[r]` is the column given to row `r`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

/// Order minimizing the squared mass of `b[[i, j]]` with `j` after `i`.
pub fn causal_order(b: &Array2<f64>) -> Vec<usize> {
    let d = b.nrows();
    let sq = b.mapv(|v| v * v);
    if d <= EXACT_ORDER_MAX {
        // best[S]: cheapest placement of set S as the first |S| positions
        let full = 1usize << d;
        let mut best = vec![f64::INFINITY; full];
        let mut choice = vec![usize::MAX; full];
        best[0] = 0.0;
        for s in 0..full {
            if !best[s].is_finite() {
                continue;
            }
            for v in 0..d {
                if s & (1 << v) != 0 {
                    continue;
                }
                let cost: f64 = (0..d).filter(|&a| s & (1 << a) != 0).map(|a| sq[[a, v]]).sum();
                let t = s | (1 << v);
                if best[s] + cost < best[t] {
                    best[t] = best[s] + cost;
                    choice[t] = v;
                }
            }
        }
        let mut order = Vec::with_capacity(d);
        let mut s = full - 1;
        while s != 0 {
            let v = choice[s];
            order.push(v);
            s &= !(1 << v);
        }
        order.reverse();
        order
    } else {
        let mut remaining: Vec<usize> = (0..d).collect();
        let mut order = Vec::with_capacity(d);
        while !remaining.is_empty() {
            let (pos, _) = remaining
                .iter()
                .enumerate()
                .map(|(p, &v)| (p, remaining.iter().filter(|&&u| u != v).map(|&u| sq[[v, u]]).sum::<f64>()))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            order.push(remaining.remove(pos));
        }
        order
    }
}

fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    if m2 > 0.0 {
        m4 / (m2 * m2) - 3.0
    } else {
        0.0
    }
}

/// ICA-LiNGAM on `data` (samples in rows, ideally standardized).
pub fn ica_lingam(
    data: ArrayView2<'_, f64>,
    names: &[String],
    cfg: &LingamConfig,
    seed: u64,
) -> Result<LingamFit, CausalError> {
    let (n, d) = data.dim();
    if d < 2 || names.len() != d {
        return Err(CausalError::TooFewVariables(d));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(CausalError::NonFinite);
    }
    let mean = data.sum_axis(ndarray::Axis(0)) / n as f64;
    let x = DMatrix::from_fn(d, n, |i, t| data[[t, i]] - mean[i]);
    let cov = &x * x.transpose() / n as f64;
    let eig = SymmetricEigen::new(cov);
    let k = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.max(1e-12).sqrt())) * eig.eigenvectors.transpose();
    let z = &k * &x;

    let mut found = None;
    for r in 0..cfg.restarts.max(1) {
        let mut rng = Xoshiro256StarStar::derived(seed, &[0x1CA, r as u64]);
        if let Some(res) = fast_ica(&z, cfg, &mut rng) {
            found = Some(res);
            break;
        }
        log::debug!("lingam: ICA restart {} did not converge", r + 1);
    }
    let (w_white, iters) = found.ok_or(CausalError::IcaNonConvergence { restarts: cfg.restarts.max(1) })?;
    let w = w_white * &k;

    // permute rows so the diagonal is as large as possible
    let cost: Vec<Vec<f64>> = (0..d).map(|r| (0..d).map(|c| 1.0 / w[(r, c)].abs().max(1e-12)).collect()).collect();
    let assign = min_cost_assignment(&cost);
    let mut pw = DMatrix::zeros(d, d);
    for (r, &c) in assign.iter().enumerate() {
        pw.set_row(c, &w.row(r));
    }
    let b = Array2::from_shape_fn((d, d), |(i, j)| {
        let scaled = pw[(i, j)] / pw[(i, i)];
        if i == j {
            0.0
        } else {
            -scaled
        }
    });

    let order = causal_order(&b);
    let mut pos = vec![0; d];
    for (p, &v) in order.iter().enumerate() {
        pos[v] = p;
    }
    let mut g = MixedGraph::new(names.to_vec(), GraphKind::WeightedDag);
    let mut kept = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            if i != j && pos[j] < pos[i] && b[[i, j]].abs() >= cfg.prune_threshold {
                kept[[i, j]] = b[[i, j]];
                g.add_directed(j, i);
                g.set_weight(j, i, b[[i, j]]);
            }
        }
    }

    let kurtosis: Vec<f64> = (0..d)
        .map(|i| {
            let resid: Vec<f64> =
                (0..n).map(|t| x[(i, t)] - (0..d).map(|j| kept[[i, j]] * x[(j, t)]).sum::<f64>()).collect();
            excess_kurtosis(&resid)
        })
        .collect();
    let gaussian_degeneracy = kurtosis.iter().all(|k| k.abs() < cfg.kurtosis_floor);
    if gaussian_degeneracy {
        log::warn!("lingam: all residuals look Gaussian; the causal order is not identifiable");
    }
    debug_assert!(g.is_acyclic());
    Ok(LingamFit { graph: g, b, order, kurtosis, gaussian_degeneracy, ica_iterations: iters })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(rng: &mut Xoshiro256StarStar, var: f64) -> f64 {
        (2.0 * rng.next_f64() - 1.0) * (3.0 * var).sqrt()
    }

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("X{i}")).collect()
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = Xoshiro256StarStar::new(3);
        for _ in 0..20 {
            let c: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.next_f64()).collect()).collect();
            let got = min_cost_assignment(&c);
            let total = |p: &[usize]| p.iter().enumerate().map(|(r, &k)| c[r][k]).sum::<f64>();
            let mut best = f64::INFINITY;
            let mut perm: Vec<usize> = (0..5).collect();
            permute(&mut perm, 0, &mut |p| best = best.min(total(p)));
            assert!((total(&got) - best).abs() < 1e-12);
        }
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn order_of_triangular_matrix() {
        // 2 -> 0 -> 1
        let mut b = Array2::zeros((3, 3));
        b[[0, 2]] = 0.9;
        b[[1, 0]] = -0.7;
        assert_eq!(causal_order(&b), vec![2, 0, 1]);
    }

    #[test]
    fn two_variable_weight() {
        let mut rng = Xoshiro256StarStar::new(11);
        let n = 10_000;
        let mut data = Array2::zeros((n, 2));
        for t in 0..n {
            let x = uniform(&mut rng, 1.0);
            data[[t, 0]] = x;
            data[[t, 1]] = 0.8 * x + uniform(&mut rng, 0.36);
        }
        let fit = ica_lingam(data.view(), &names(2), &LingamConfig::default(), 1).unwrap();
        assert!(fit.graph.is_directed(0, 1), "{:?}", fit.graph.edges());
        let w = fit.graph.weight(0, 1).unwrap();
        assert!((w - 0.8).abs() < 0.05, "{w}");
        assert!(!fit.gaussian_degeneracy);
    }

    #[test]
    fn gaussian_noise_flagged() {
        let mut rng = Xoshiro256StarStar::new(12);
        let n = 10_000;
        let mut data = Array2::zeros((n, 3));
        for t in 0..n {
            let x = rng.normal();
            let y = 0.5 * x + rng.normal();
            data[[t, 0]] = x;
            data[[t, 1]] = y;
            data[[t, 2]] = 0.5 * y + rng.normal();
        }
        let fit = ica_lingam(data.view(), &names(3), &LingamConfig::default(), 1).unwrap();
        assert!(fit.gaussian_degeneracy, "{:?}", fit.kurtosis);
    }
}
