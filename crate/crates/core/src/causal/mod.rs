//! Causal discovery over a shared mixed-graph type: PC, FCI, RFCI,
//! ICA-LiNGAM and NOTEARS.

pub mod ci;
pub mod graph;
pub mod lingam;
pub mod notears;
pub mod pag;
pub mod pc;
pub mod skeleton;
pub mod suite;

use serde::{Deserialize, Serialize};

pub use ci::{correlation, CiResult, CiTest, DSepOracle, FisherZ};
pub use graph::{Edge, GraphKind, Mark, MixedGraph};
pub use lingam::{ica_lingam, LingamConfig, LingamFit};
pub use notears::{acyclicity_h, notears, NotearsConfig, NotearsFit};
pub use pag::{fci, fci_with_test, possible_dsep, rfci, rfci_with_test};
pub use pc::{pc, pc_with_test};
pub use skeleton::{stable_skeleton, SepsetTable, Skeleton};
pub use suite::{run_suite, successful, Algorithm, AlgorithmRun, SuiteConfig};

#[derive(Debug, thiserror::Error)]
pub enum CausalError {
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("marks on edge {a} - {b} not allowed in a {kind:?} graph")]
    InvalidMarks { a: String, b: String, kind: GraphKind },
    #[error("graph contains a directed cycle")]
    Cyclic,
    #[error("graph parse error: {0}")]
    Parse(String),
    #[error("singular correlation submatrix for ({i}, {j} | {cond:?})")]
    SingularSubmatrix { i: usize, j: usize, cond: Vec<usize> },
    #[error("{n} samples too few for a conditioning set of size {cond}")]
    TooFewSamples { n: usize, cond: usize },
    #[error("need at least two variables, got {0}")]
    TooFewVariables(usize),
    #[error("data contains non-finite values")]
    NonFinite,
    #[error("ICA did not converge after {restarts} restarts")]
    IcaNonConvergence { restarts: usize },
    #[error("NOTEARS did not reach h <= {h_tol:e} (h = {h:e}) after {iterations} outer iterations")]
    Nonconvergence { h: f64, h_tol: f64, iterations: usize },
}

/// Settings shared by the constraint-based algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    pub alpha: f64,
    /// Largest conditioning set tried.
    pub max_cond: usize,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self { alpha: 0.05, max_cond: 3 }
    }
}

/// Result of PC, FCI or RFCI.
#[derive(Debug, Clone)]
pub struct ConstraintOutput {
    pub graph: MixedGraph,
    pub sepsets: SepsetTable,
    /// CI tests issued by this call.
    pub ci_calls: usize,
}

/// Columns scaled to zero mean and unit variance (constant columns are only
/// centred).
pub fn standardize(data: ndarray::ArrayView2<'_, f64>) -> ndarray::Array2<f64> {
    let n = data.nrows().max(1) as f64;
    let mut out = data.to_owned();
    for mut col in out.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    out
}
