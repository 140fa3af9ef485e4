use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::CausalError;

/// Ridge added to the diagonal when a correlation submatrix is singular.
pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
}

/// Conditional-independence test over variables `0..n_vars()`.
pub trait CiTest: Sync {
    fn n_vars(&self) -> usize;
    fn test(&self, i: usize, j: usize, cond: &[usize]) -> Result<CiResult, CausalError>;
    /// Number of `test` calls so far.
    fn calls(&self) -> usize;
}

/// Fisher z-test on partial correlations.
#[derive(Debug)]
pub struct FisherZ {
    corr: Array2<f64>,
    n_samples: usize,
    alpha: f64,
    calls: AtomicUsize,
}

impl FisherZ {
    pub fn new(data: ArrayView2<'_, f64>, alpha: f64) -> Self {
        Self { corr: correlation(data), n_samples: data.nrows(), alpha, calls: AtomicUsize::new(0) }
    }

    pub fn from_correlation(corr: Array2<f64>, n_samples: usize, alpha: f64) -> Self {
        Self { corr, n_samples, alpha, calls: AtomicUsize::new(0) }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Partial correlation of `i` and `j` given `cond`, from the inverse of
    /// the correlation submatrix.
    pub fn partial_correlation(&self, i: usize, j: usize, cond: &[usize]) -> Result<f64, CausalError> {
        if cond.is_empty() {
            return Ok(self.corr[[i, j]]);
        }
        let idx: Vec<usize> = [i, j].iter().chain(cond).copied().collect();
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |a, b| self.corr[[idx[a], idx[b]]]);
        let inv = match sub.clone().cholesky() {
            Some(c) => c.inverse(),
            None => {
                let ridged = sub + DMatrix::identity(k, k) * RIDGE;
                match ridged.cholesky() {
                    Some(c) => {
                        log::debug!("ridge applied for ({i},{j}|{cond:?})");
                        c.inverse()
                    }
                    None => return Err(CausalError::SingularSubmatrix { i, j, cond: cond.to_vec() }),
                }
            }
        };
        Ok(-inv[(0, 1)] / (inv[(0, 0)] * inv[(1, 1)]).sqrt())
    }
}

/// Pearson correlation matrix of the columns of `data`.
pub fn correlation(data: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = data.nrows() as f64;
    let d = data.ncols();
    let mean = data.sum_axis(ndarray::Axis(0)) / n;
    let centered = &data - &mean;
    let cov = centered.t().dot(&centered) / n;
    Array2::from_shape_fn((d, d), |(a, b)| {
        if a == b {
            1.0
        } else {
            let den = (cov[[a, a]] * cov[[b, b]]).sqrt();
            if den > 0.0 {
                cov[[a, b]] / den
            } else {
                0.0
            }
        }
    })
}

impl CiTest for FisherZ {
    fn n_vars(&self) -> usize {
        self.corr.nrows()
    }

    fn test(&self, i: usize, j: usize, cond: &[usize]) -> Result<CiResult, CausalError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let dof = self.n_samples as f64 - cond.len() as f64 - 3.0;
        if dof <= 0.0 {
            return Err(CausalError::TooFewSamples { n: self.n_samples, cond: cond.len() });
        }
        let rho = self.partial_correlation(i, j, cond)?.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
        let z = 0.5 * ((1.0 + rho) / (1.0 - rho)).ln() * dof.sqrt();
        let p = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
        Ok(CiResult { statistic: z, p_value: p, independent: p > self.alpha })
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Perfect test answering by d-separation in a known DAG. Only the
/// `observed` vertices are visible; the rest act as latent variables.
#[derive(Debug)]
pub struct DSepOracle {
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    observed: Vec<usize>,
    calls: AtomicUsize,
}

impl DSepOracle {
    /// `parents[v]` lists the parents of `v`; all vertices observed.
    pub fn new(parents: Vec<Vec<usize>>) -> Self {
        let n = parents.len();
        Self::with_observed(parents, (0..n).collect())
    }

    pub fn with_observed(parents: Vec<Vec<usize>>, observed: Vec<usize>) -> Self {
        let n = parents.len();
        let mut children = vec![Vec::new(); n];
        for (v, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(v);
            }
        }
        Self { parents, children, observed, calls: AtomicUsize::new(0) }
    }

    /// Whether `x` and `y` are d-separated by `z` (all in DAG indices).
    pub fn d_separated(&self, x: usize, y: usize, z: &[usize]) -> bool {
        let n = self.parents.len();
        let mut in_z = vec![false; n];
        z.iter().for_each(|&v| in_z[v] = true);
        // ancestors of z, z included
        let mut anc = in_z.clone();
        let mut stack: Vec<usize> = z.to_vec();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !anc[p] {
                    anc[p] = true;
                    stack.push(p);
                }
            }
        }
        // (vertex, arrived from a child) states of active trails from x
        let mut seen = vec![[false; 2]; n];
        let mut queue = vec![(x, true)];
        while let Some((v, up)) = queue.pop() {
            if seen[v][up as usize] {
                continue;
            }
            seen[v][up as usize] = true;
            if v == y && !in_z[v] {
                return false;
            }
            if up {
                if !in_z[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                    queue.extend(self.children[v].iter().map(|&c| (c, false)));
                }
            } else {
                if !in_z[v] {
                    queue.extend(self.children[v].iter().map(|&c| (c, false)));
                }
                if anc[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                }
            }
        }
        true
    }
}

impl CiTest for DSepOracle {
    fn n_vars(&self) -> usize {
        self.observed.len()
    }

    fn test(&self, i: usize, j: usize, cond: &[usize]) -> Result<CiResult, CausalError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let z: Vec<usize> = cond.iter().map(|&c| self.observed[c]).collect();
        let sep = self.d_separated(self.observed[i], self.observed[j], &z);
        Ok(CiResult { statistic: if sep { 0.0 } else { f64::INFINITY }, p_value: sep as u8 as f64, independent: sep })
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}
