use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, HyperValue, Hyperparameters, ModelKind, ModelSpec};
use crate::dataset::Dataset;
use crate::evaluation::{cross_validate, Averaging, MetricSet};
use crate::resampling::ResampleSettings;
use crate::rng::{derive_seed, Xoshiro256StarStar};

/// Draw attempts per requested candidate before giving up on finding new
/// distinct specs.
const RETRIES_PER_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    F1Macro,
    Accuracy,
    BalancedAccuracy,
    Auc,
}

impl Objective {
    pub fn score(self, m: &MetricSet) -> f64 {
        match self {
            Objective::F1Macro => m.f1,
            Objective::Accuracy => m.acc,
            Objective::BalancedAccuracy => m.bacc,
            Objective::Auc => m.auc,
        }
    }
}

fn default_n_iter() -> usize {
    20
}

/// Candidate values per hyperparameter for one model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub kind: ModelKind,
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<HyperValue>>,
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default)]
    pub objective: Objective,
}

impl SearchSpace {
    pub fn new(kind: ModelKind) -> Self {
        Self { kind, grid: BTreeMap::new(), n_iter: default_n_iter(), objective: Objective::default() }
    }

    pub fn with(mut self, key: &str, values: Vec<HyperValue>) -> Self {
        self.grid.insert(key.to_string(), values);
        self
    }

    /// Number of distinct specs the grid can produce.
    pub fn cardinality(&self) -> usize {
        self.grid.values().map(Vec::len).fold(1usize, |a, b| a.saturating_mul(b))
    }

    /// Draws up to `n_iter` distinct hyperparameter maps, each dimension
    /// uniformly, in draw order.
    pub fn sample(&self, seed: u64) -> Vec<Hyperparameters> {
        let mut rng = Xoshiro256StarStar::derived(seed, &[0x5EA7C4]);
        let want = self.n_iter.min(self.cardinality());
        let mut out: Vec<Hyperparameters> = Vec::with_capacity(want);
        let mut attempts = 0;
        while out.len() < want && attempts < want * RETRIES_PER_ITER {
            attempts += 1;
            let h: Hyperparameters =
                self.grid.iter().map(|(k, vals)| (k.clone(), vals[rng.below(vals.len())].clone())).collect();
            if !out.contains(&h) {
                out.push(h);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrial {
    pub spec: ModelSpec,
    /// Mean cross-validated objective; `-inf` when any fold failed.
    pub score: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: ModelSpec,
    pub best_score: f64,
    pub trials: Vec<SearchTrial>,
}

/// Random hyperparameter search scored by k-fold cross-validation on
/// rebalanced fold-train partitions. Candidate `i` trains with seed
/// `derive_seed(seed, [i])`; folds are shared across candidates. The
/// earliest candidate wins ties.
pub fn random_search(
    space: &SearchSpace,
    train: &Dataset,
    k: usize,
    seed: u64,
    resample: &ResampleSettings,
) -> Result<SearchOutcome, ClassifierError> {
    if space.n_iter == 0 || space.grid.values().any(Vec::is_empty) {
        return Err(ClassifierError::EmptySearchSpace);
    }
    let candidates = space.sample(seed);
    let trials: Vec<SearchTrial> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(i, h)| {
            let spec = ModelSpec::new(space.kind, h, derive_seed(seed, &[i as u64]));
            let res = spec.validate().map_err(|e| e.to_string()).and_then(|_| {
                cross_validate(&spec, train, k, resample, seed, Averaging::Macro).map_err(|e| e.to_string())
            });
            match res {
                Ok(cv) => SearchTrial { score: space.objective.score(&cv.summary.mean), spec, error: None },
                Err(e) => {
                    log::warn!("search candidate {i} failed: {e}");
                    SearchTrial { spec, score: f64::NEG_INFINITY, error: Some(e) }
                }
            }
        })
        .collect();
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.score > trials[best].score {
            best = i;
        }
    }
    Ok(SearchOutcome { best: trials[best].spec.clone(), best_score: trials[best].score, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClassId;
    use ndarray::Array2;

    #[test]
    fn sampling_distinct_and_bounded() {
        let s = SearchSpace::new(ModelKind::Knn)
            .with("k", vec![1i64.into(), 3i64.into()])
            .with("weights", vec!["uniform".into(), "distance".into()]);
        let a = s.sample(4);
        assert_eq!(a.len(), 4);
        for i in 0..a.len() {
            for j in 0..i {
                assert_ne!(a[i], a[j]);
            }
        }
        assert_eq!(a, s.sample(4));
        let big = SearchSpace::new(ModelKind::Knn).with("k", (1..100).map(HyperValue::Int).collect());
        assert_eq!(big.sample(0).len(), 20);
    }

    #[test]
    fn single_spec_space() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let y = (0..40).map(|i| ClassId((i >= 20) as u8)).collect();
        let ds = Dataset::from_parts(&["x"], x, y).unwrap();
        let s = SearchSpace::new(ModelKind::Knn).with("k", vec![3i64.into()]);
        let out = random_search(&s, &ds, 5, 1, &ResampleSettings::disabled()).unwrap();
        assert_eq!(out.trials.len(), 1);
        assert_eq!(out.best.hyperparameters["k"], HyperValue::Int(3));
    }

    #[test]
    fn failing_candidate_scores_negative_infinity() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let y = (0..40).map(|i| ClassId((i >= 20) as u8)).collect();
        let ds = Dataset::from_parts(&["x"], x, y).unwrap();
        let s = SearchSpace::new(ModelKind::Knn).with("k", vec![0i64.into(), 1i64.into()]);
        let out = random_search(&s, &ds, 5, 1, &ResampleSettings::disabled()).unwrap();
        let bad = out.trials.iter().find(|t| t.spec.hyperparameters["k"] == HyperValue::Int(0)).unwrap();
        assert_eq!(bad.score, f64::NEG_INFINITY);
        assert_eq!(out.best.hyperparameters["k"], HyperValue::Int(1));
    }
}
