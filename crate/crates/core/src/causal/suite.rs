//! Runs several causal-discovery algorithms on the same standardized data.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::MixedGraph;
use super::{fci, ica_lingam, notears, pc, rfci, standardize, ConstraintConfig, LingamConfig, NotearsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pc,
    Fci,
    Rfci,
    Lingam,
    Notears,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Pc, Algorithm::Fci, Algorithm::Rfci, Algorithm::Lingam, Algorithm::Notears];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Pc => "pc",
            Algorithm::Fci => "fci",
            Algorithm::Rfci => "rfci",
            Algorithm::Lingam => "lingam",
            Algorithm::Notears => "notears",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub algorithms: Vec<Algorithm>,
    pub constraint: ConstraintConfig,
    pub lingam: LingamConfig,
    pub notears: NotearsConfig,
    pub lambda1: f64,
    /// Standardize columns before running anything.
    pub standardize: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            constraint: ConstraintConfig::default(),
            lingam: LingamConfig::default(),
            notears: NotearsConfig::default(),
            lambda1: 0.05,
            standardize: true,
        }
    }
}

/// Outcome of one algorithm. A failure is kept as a message so the others
/// still count.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub result: Result<MixedGraph, String>,
    /// CI tests used (constraint-based algorithms only).
    pub ci_calls: Option<usize>,
    /// Algorithm-specific notes such as warnings and convergence figures.
    pub notes: Vec<String>,
}

fn run_one(alg: Algorithm, data: ArrayView2<'_, f64>, names: &[String], cfg: &SuiteConfig, seed: u64) -> AlgorithmRun {
    let mut notes = Vec::new();
    let mut ci_calls = None;
    let result = match alg {
        Algorithm::Pc | Algorithm::Fci | Algorithm::Rfci => {
            let f = match alg {
                Algorithm::Pc => pc,
                Algorithm::Fci => fci,
                _ => rfci,
            };
            f(data, names, &cfg.constraint).map(|out| {
                ci_calls = Some(out.ci_calls);
                out.graph
            })
        }
        Algorithm::Lingam => ica_lingam(data, names, &cfg.lingam, seed).map(|fit| {
            notes.push(format!("causal order: {:?}", fit.order.iter().map(|&i| &names[i]).collect::<Vec<_>>()));
            if fit.gaussian_degeneracy {
                notes.push("warning: residuals look Gaussian; orientation unreliable".into());
            }
            fit.graph
        }),
        Algorithm::Notears => notears(data, names, cfg.lambda1, &cfg.notears).map(|fit| {
            notes.push(format!("h = {:e}, thresholded h = {:e}, rho = {:e}", fit.h, fit.h_thresholded, fit.rho));
            if fit.cyclic_after_threshold {
                notes.push(format!("warning: cyclic after threshold; raised to {:.4}", fit.threshold));
            }
            fit.graph
        }),
    };
    if let Err(e) = &result {
        log::warn!("{alg} failed: {e}");
    }
    AlgorithmRun { algorithm: alg, result: result.map_err(|e| e.to_string()), ci_calls, notes }
}

/// Runs the configured algorithms concurrently; results follow
/// `cfg.algorithms` order.
pub fn run_suite(data: ArrayView2<'_, f64>, names: &[String], cfg: &SuiteConfig, seed: u64) -> Vec<AlgorithmRun> {
    let owned;
    let data = if cfg.standardize {
        owned = standardize(data);
        owned.view()
    } else {
        data
    };
    cfg.algorithms.par_iter().map(|&alg| run_one(alg, data, names, cfg, seed)).collect()
}

/// Successful graphs tagged with their algorithm name.
pub fn successful(runs: &[AlgorithmRun]) -> Vec<(String, MixedGraph)> {
    runs.iter().filter_map(|r| r.result.as_ref().ok().map(|g| (r.algorithm.to_string(), g.clone()))).collect()
}
