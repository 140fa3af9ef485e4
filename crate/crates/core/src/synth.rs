//! Synthetic data: random linear SEMs with known graphs, and a 52-variable
//! process-like dataset with injected faults.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::causal::{DSepOracle, GraphKind, MixedGraph};
use crate::dataset::{ClassId, Dataset, DatasetError, VariableSchema, MAX_CLASS_ID};
use crate::rng::Xoshiro256StarStar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    Gaussian,
    Uniform,
    Laplace,
}

impl Noise {
    /// A draw with zero mean and unit variance.
    pub fn draw(self, rng: &mut Xoshiro256StarStar) -> f64 {
        match self {
            Noise::Gaussian => rng.normal(),
            Noise::Uniform => (2.0 * rng.next_f64() - 1.0) * 3f64.sqrt(),
            Noise::Laplace => {
                let u = rng.next_f64() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln() / 2f64.sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemConfig {
    pub n_vars: usize,
    /// Probability of an edge between any two variables.
    pub edge_prob: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    pub noise: Noise,
    pub noise_std: f64,
}

impl Default for SemConfig {
    fn default() -> Self {
        Self { n_vars: 5, edge_prob: 0.4, weight_min: 0.5, weight_max: 1.5, noise: Noise::Uniform, noise_std: 1.0 }
    }
}

/// Linear SEM `x_j = Σ_i w[i, j] x_i + e_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSem {
    /// `weights[[i, j]]` is the effect of `i` on `j`.
    pub weights: Array2<f64>,
    /// A topological order of the generating DAG.
    pub order: Vec<usize>,
    pub noise: Noise,
    pub noise_std: Vec<f64>,
}

impl LinearSem {
    /// Random DAG over a random variable order; weights have random sign and
    /// magnitude in `[weight_min, weight_max]`.
    pub fn random(cfg: &SemConfig, seed: u64) -> Self {
        let d = cfg.n_vars;
        let mut rng = Xoshiro256StarStar::derived(seed, &[0x5E4]);
        let mut order: Vec<usize> = (0..d).collect();
        rng.shuffle(&mut order);
        let mut weights = Array2::zeros((d, d));
        for a in 0..d {
            for b in a + 1..d {
                if rng.next_f64() < cfg.edge_prob {
                    let mag = cfg.weight_min + (cfg.weight_max - cfg.weight_min) * rng.next_f64();
                    let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
                    weights[[order[a], order[b]]] = sign * mag;
                }
            }
        }
        Self { weights, order, noise: cfg.noise, noise_std: vec![cfg.noise_std; d] }
    }

    pub fn from_weights(weights: Array2<f64>, noise: Noise, noise_std: Vec<f64>) -> Option<Self> {
        let g = graph_from_weights(&weights, &default_names(weights.nrows()));
        let order = g.topological_order()?;
        Some(Self { weights, order, noise, noise_std })
    }

    pub fn n_vars(&self) -> usize {
        self.weights.nrows()
    }

    pub fn parents(&self) -> Vec<Vec<usize>> {
        let d = self.n_vars();
        (0..d).map(|j| (0..d).filter(|&i| self.weights[[i, j]] != 0.0).collect()).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Array2<f64> {
        let d = self.n_vars();
        let mut rng = Xoshiro256StarStar::derived(seed, &[0x5A4]);
        let mut x = Array2::zeros((n, d));
        for t in 0..n {
            for &j in &self.order {
                let mut v = self.noise_std[j] * self.noise.draw(&mut rng);
                for i in 0..d {
                    let w = self.weights[[i, j]];
                    if w != 0.0 {
                        v += w * x[[t, i]];
                    }
                }
                x[[t, j]] = v;
            }
        }
        x
    }

    pub fn true_graph(&self, names: &[String]) -> MixedGraph {
        graph_from_weights(&self.weights, names)
    }

    /// Perfect CI test for this SEM.
    pub fn oracle(&self) -> DSepOracle {
        DSepOracle::new(self.parents())
    }
}

pub fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("X{}", i + 1)).collect()
}

fn graph_from_weights(w: &Array2<f64>, names: &[String]) -> MixedGraph {
    let d = w.nrows();
    let mut g = MixedGraph::new(names.to_vec(), GraphKind::WeightedDag);
    for i in 0..d {
        for j in 0..d {
            if w[[i, j]] != 0.0 && !g.adjacent(i, j) {
                g.add_directed(i, j);
                g.set_weight(i, j, w[[i, j]]);
            }
        }
    }
    g
}

/// Process variables every fault is routed through, mimicking the cooling
/// and stripper loops that dominate real plant fault signatures.
pub const KEY_VARIABLES: [&str; 4] = ["XMV.11", "XMV.10", "XMEAS.17", "XMEAS.18"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TepLikeConfig {
    pub n_normal: usize,
    pub n_per_fault: usize,
    /// Fault ids to include, each in `1..=20`.
    pub faults: Vec<u8>,
    pub edge_prob: f64,
}

impl Default for TepLikeConfig {
    fn default() -> Self {
        Self { n_normal: 500, n_per_fault: 50, faults: (1..=MAX_CLASS_ID).collect(), edge_prob: 0.05 }
    }
}

/// Labelled 52-variable dataset on the TEP schema. Normal rows come from a
/// sparse linear SEM; each fault shifts a few exogenous terms (always
/// including some of [`KEY_VARIABLES`]) and the shift propagates downstream.
pub fn tep_like(cfg: &TepLikeConfig, seed: u64) -> Result<Dataset, DatasetError> {
    if let Some(&f) = cfg.faults.iter().find(|&&f| f == 0 || f > MAX_CLASS_ID) {
        return Err(DatasetError::InvalidParameter(format!("fault id {f} outside 1..=20")));
    }
    let schema = VariableSchema::tep52();
    let d = schema.len();
    let sem_cfg = SemConfig {
        n_vars: d,
        edge_prob: cfg.edge_prob,
        weight_min: 0.3,
        weight_max: 0.8,
        noise: Noise::Uniform,
        noise_std: 1.0,
    };
    let sem = LinearSem::random(&sem_cfg, seed);
    let key: Vec<usize> = KEY_VARIABLES.iter().filter_map(|id| schema.position(id)).collect();

    let n = cfg.n_normal + cfg.n_per_fault * cfg.faults.len();
    let mut values = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    let mut emit = |class: u8, shift: &[f64], count: usize, stream: u64, values: &mut Array2<f64>| {
        let mut rng = Xoshiro256StarStar::derived(seed, &[0x7E9, stream]);
        for _ in 0..count {
            for &j in &sem.order {
                let mut v = sem.noise.draw(&mut rng) + shift[j];
                for i in 0..d {
                    let w = sem.weights[[i, j]];
                    if w != 0.0 {
                        v += w * values[[row, i]];
                    }
                }
                values[[row, j]] = v;
            }
            labels.push(ClassId(class));
            row += 1;
        }
    };
    emit(0, &vec![0.0; d], cfg.n_normal, 0, &mut values);
    for &f in &cfg.faults {
        let mut rng = Xoshiro256StarStar::derived(seed, &[0xFA17, f as u64]);
        let mut shift = vec![0.0; d];
        for &k in &rng.sample_indices(key.len(), 2) {
            shift[key[k]] = (0.5 + 2.5 * rng.next_f64()) * if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
        }
        let other = rng.below(d);
        shift[other] += 0.5 + rng.next_f64();
        emit(f, &shift, cfg.n_per_fault, f as u64, &mut values);
    }
    Dataset::new(schema.variables, values, labels)
}
