//! Two-stage class rebalancing for training partitions: SMOTE oversampling
//! of the fault classes followed by random undersampling of the majority
//! (fault-free) class.
//!
//! Synthetic rows are interpolated between a minority row and one of its
//! `smote_k` nearest same-class neighbours. Neighbours are searched on
//! z-scored features when [`ResamplePlan::standardize_neighbors`] is set so
//! that variables with large engineering units do not dominate the metric;
//! interpolation itself happens in the original units.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClassId, Dataset, Scaler};
use crate::rng::Xoshiro256StarStar;

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("class {class} has {count} samples; SMOTE with k={k} needs more than k")]
    TooFewSamples { class: ClassId, count: usize, k: usize },
    #[error("undersampling target {target} exceeds the {count} rows of class {class}")]
    TargetExceedsCount { class: ClassId, target: usize, count: usize },
    #[error("oversampling target {target} below the {count} rows of class {class}")]
    TargetBelowCount { class: ClassId, target: usize, count: usize },
    #[error("smote_k must be at least 1")]
    InvalidK,
}

/// Concrete resampling targets for one training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub smote_k: usize,
    /// Desired per-class row counts after oversampling. Classes not listed
    /// are left alone.
    pub oversample_targets: BTreeMap<ClassId, usize>,
    pub majority_class: ClassId,
    /// Row count of the majority class after undersampling; `None` skips it.
    pub majority_target: Option<usize>,
    pub seed: u64,
    pub standardize_neighbors: bool,
}

impl ResamplePlan {
    /// Plan that leaves every class untouched.
    pub fn identity(seed: u64) -> Self {
        Self {
            smote_k: 5,
            oversample_targets: BTreeMap::new(),
            majority_class: ClassId::NORMAL,
            majority_target: None,
            seed,
            standardize_neighbors: true,
        }
    }
}

/// Ratio-based rebalancing policy from which per-partition plans are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSettings {
    pub enabled: bool,
    pub smote_k: usize,
    /// Each minority class is oversampled to `oversample_factor` times the
    /// median minority-class count.
    pub oversample_factor: f64,
    /// The majority class is undersampled to `majority_ratio` times the
    /// largest minority class after oversampling.
    pub majority_ratio: f64,
    pub majority_class: ClassId,
    pub standardize_neighbors: bool,
}

impl Default for ResampleSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            smote_k: 5,
            oversample_factor: 2.0,
            majority_ratio: 2.0,
            majority_class: ClassId::NORMAL,
            standardize_neighbors: true,
        }
    }
}

impl ResampleSettings {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    /// Derives concrete targets for `ds`.
    ///
    /// Minority classes with too few rows for SMOTE are left at their
    /// current size.
    pub fn plan_for(&self, ds: &Dataset, seed: u64) -> ResamplePlan {
        let mut plan = ResamplePlan {
            smote_k: self.smote_k,
            majority_class: self.majority_class,
            standardize_neighbors: self.standardize_neighbors,
            ..ResamplePlan::identity(seed)
        };
        if !self.enabled {
            return plan;
        }
        let counts = ds.class_counts();
        let mut minority: Vec<usize> =
            counts.iter().filter(|(c, _)| **c != self.majority_class).map(|(_, &n)| n).collect();
        if minority.is_empty() {
            return plan;
        }
        minority.sort_unstable();
        let mid = minority.len() / 2;
        let median = if minority.len() % 2 == 1 {
            minority[mid] as f64
        } else {
            (minority[mid - 1] + minority[mid]) as f64 / 2.0
        };
        let goal = (median * self.oversample_factor).round() as usize;
        let mut largest = 0usize;
        for (&class, &n) in &counts {
            if class == self.majority_class {
                continue;
            }
            let target = if goal > n && n > self.smote_k {
                plan.oversample_targets.insert(class, goal);
                goal
            } else {
                if goal > n {
                    log::warn!("class {class}: {n} rows, too few for SMOTE with k={}", self.smote_k);
                }
                n
            };
            largest = largest.max(target);
        }
        if let Some(&major) = counts.get(&self.majority_class) {
            let target = ((largest as f64) * self.majority_ratio).round() as usize;
            if target < major {
                plan.majority_target = Some(target);
            }
        }
        plan
    }
}

/// Per-class row counts at each stage of [`rebalance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub before: BTreeMap<ClassId, usize>,
    pub after_smote: BTreeMap<ClassId, usize>,
    pub after: BTreeMap<ClassId, usize>,
}

#[derive(Debug, Clone)]
pub struct Rebalanced {
    pub dataset: Dataset,
    pub report: ResampleReport,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For each row, the indices of its `k` nearest other rows, closest first,
/// ties broken by index. Brute force.
pub(crate) fn nearest_neighbors(points: ArrayView2<'_, f64>, k: usize) -> Vec<Vec<usize>> {
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = points.outer_iter().map(|r| r.to_vec()).collect();
    (0..n)
        .map(|i| {
            let mut d: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (squared_distance(&rows[i], &rows[j]), j)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

fn validate_oversampling(ds: &Dataset, plan: &ResamplePlan) -> Result<(), ResampleError> {
    if plan.smote_k == 0 {
        return Err(ResampleError::InvalidK);
    }
    let counts = ds.class_counts();
    for (&class, &target) in &plan.oversample_targets {
        let count = counts.get(&class).copied().unwrap_or(0);
        if target < count {
            return Err(ResampleError::TargetBelowCount { class, target, count });
        }
        if target > count && count <= plan.smote_k {
            return Err(ResampleError::TooFewSamples { class, count, k: plan.smote_k });
        }
    }
    Ok(())
}

/// Synthetic minority oversampling.
///
/// Output rows: every original row in its original order, then the synthetic
/// rows grouped by ascending class id. Each class uses its own derived random
/// stream, so output is identical for any thread count.
pub fn smote(ds: &Dataset, plan: &ResamplePlan) -> Result<Dataset, ResampleError> {
    validate_oversampling(ds, plan)?;
    let per_class = ds.class_indices();
    let metric_space = if plan.standardize_neighbors {
        Scaler::fit_dataset(ds).transform(ds.values())
    } else {
        ds.values().to_owned()
    };
    let jobs: Vec<(ClassId, usize)> = plan
        .oversample_targets
        .iter()
        .filter_map(|(&c, &t)| {
            let n = per_class.get(&c).map_or(0, Vec::len);
            (t > n).then_some((c, t - n))
        })
        .collect();
    let width = ds.n_features();
    let synthetic: Vec<(ClassId, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(class, n_new)| {
            let rows = &per_class[&class];
            let space = metric_space.select(ndarray::Axis(0), rows);
            let neighbors = nearest_neighbors(space.view(), plan.smote_k);
            let mut rng = Xoshiro256StarStar::derived(plan.seed, &[0x5307E, class.0 as u64]);
            let mut out = Vec::with_capacity(n_new * width);
            for _ in 0..n_new {
                let base = rng.below(rows.len());
                let nb = neighbors[base][rng.below(neighbors[base].len())];
                let u = rng.next_f64_closed();
                let x = ds.row(rows[base]);
                let z = ds.row(rows[nb]);
                out.extend(x.iter().zip(z.iter()).map(|(&a, &b)| a + u * (b - a)));
            }
            (class, out)
        })
        .collect();

    let n_syn: usize = synthetic.iter().map(|(_, v)| v.len() / width.max(1)).sum();
    let n_total = ds.n_samples() + n_syn;
    let mut data = Vec::with_capacity(n_total * width);
    data.extend(ds.values().iter().copied());
    let mut labels = ds.labels().to_vec();
    for (class, rows) in synthetic {
        labels.extend(std::iter::repeat_n(class, rows.len() / width.max(1)));
        data.extend(rows);
    }
    let values = Array2::from_shape_vec((n_total, width), data).expect("row-major buffer");
    Ok(ds.with_values(values, labels))
}

/// Uniform random undersampling of the plan's majority class. Kept rows
/// retain their relative order; other classes are untouched.
pub fn random_undersample(ds: &Dataset, plan: &ResamplePlan) -> Result<Dataset, ResampleError> {
    let Some(target) = plan.majority_target else {
        return Ok(ds.clone());
    };
    let class = plan.majority_class;
    let majority: Vec<usize> = ds.labels().iter().enumerate().filter(|(_, &c)| c == class).map(|(i, _)| i).collect();
    if target > majority.len() {
        return Err(ResampleError::TargetExceedsCount { class, target, count: majority.len() });
    }
    if target == majority.len() {
        return Ok(ds.clone());
    }
    let mut rng = Xoshiro256StarStar::derived(plan.seed, &[0x0DE5, class.0 as u64]);
    let chosen = rng.sample_indices(majority.len(), target);
    let mut keep = vec![true; ds.n_samples()];
    for &i in &majority {
        keep[i] = false;
    }
    for &p in &chosen {
        keep[majority[p]] = true;
    }
    let rows: Vec<usize> = (0..ds.n_samples()).filter(|&i| keep[i]).collect();
    Ok(ds.select_rows(&rows))
}

/// SMOTE followed by random undersampling. Only ever applied to training
/// partitions.
pub fn rebalance(ds: &Dataset, plan: &ResamplePlan) -> Result<Rebalanced, ResampleError> {
    if let Some(target) = plan.majority_target {
        let count = ds.class_counts().get(&plan.majority_class).copied().unwrap_or(0);
        if target > count {
            return Err(ResampleError::TargetExceedsCount { class: plan.majority_class, target, count });
        }
    }
    let before = ds.class_counts();
    let over = smote(ds, plan)?;
    let after_smote = over.class_counts();
    let dataset = random_undersample(&over, plan)?;
    let after = dataset.class_counts();
    log::debug!("rebalance {before:?} -> {after:?}");
    Ok(Rebalanced { dataset, report: ResampleReport { before, after_smote, after } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn plan(k: usize, targets: &[(u8, usize)], major: Option<usize>, seed: u64) -> ResamplePlan {
        ResamplePlan {
            smote_k: k,
            oversample_targets: targets.iter().map(|&(c, t)| (ClassId(c), t)).collect(),
            majority_class: ClassId(0),
            majority_target: major,
            seed,
            standardize_neighbors: false,
        }
    }

    fn blob(counts: &[(u8, usize)], width: usize, seed: u64) -> Dataset {
        let mut rng = Xoshiro256StarStar::new(seed);
        let labels: Vec<ClassId> = counts.iter().flat_map(|&(c, n)| std::iter::repeat_n(ClassId(c), n)).collect();
        let values = Array2::from_shape_fn((labels.len(), width), |(i, _)| labels[i].0 as f64 + rng.normal());
        let ids: Vec<String> = (0..width).map(|j| format!("v{j}")).collect();
        Dataset::from_parts(&ids, values, labels).unwrap()
    }

    #[test]
    fn identical_points_give_identical_synthetics() {
        let ds = Dataset::from_parts(
            &["a", "b"],
            array![[9.0, 9.0], [1.0, 2.0], [1.0, 2.0]],
            vec![ClassId(0), ClassId(1), ClassId(1)],
        )
        .unwrap();
        let out = smote(&ds, &plan(1, &[(1, 4)], None, 3)).unwrap();
        assert_eq!(out.n_samples(), 5);
        for i in 3..5 {
            assert_eq!(out.row(i).to_vec(), vec![1.0, 2.0]);
            assert_eq!(out.labels()[i], ClassId(1));
        }
        // originals preserved in place
        assert_eq!(out.row(0).to_vec(), vec![9.0, 9.0]);
    }

    #[test]
    fn two_point_segment() {
        let ds = Dataset::from_parts(&["a", "b"], array![[0.0, 0.0], [1.0, 1.0]], vec![ClassId(2); 2]).unwrap();
        let out = smote(&ds, &plan(1, &[(2, 3)], None, 5)).unwrap();
        let s = out.row(2);
        assert_eq!(s[0], s[1]);
        assert!((0.0..=1.0).contains(&s[0]));
    }

    #[test]
    fn too_few_samples() {
        let ds = blob(&[(0, 10), (1, 3)], 2, 1);
        assert_eq!(
            smote(&ds, &plan(5, &[(1, 10)], None, 1)).unwrap_err(),
            ResampleError::TooFewSamples { class: ClassId(1), count: 3, k: 5 }
        );
    }

    #[test]
    fn undersample_counts_identity_and_seeds() {
        let ds = blob(&[(0, 100), (1, 10)], 2, 2);
        let out = random_undersample(&ds, &plan(5, &[], Some(50), 1)).unwrap();
        assert_eq!(out.class_counts()[&ClassId(0)], 50);
        assert_eq!(out.class_counts()[&ClassId(1)], 10);
        let same = random_undersample(&ds, &plan(5, &[], Some(100), 1)).unwrap();
        assert_eq!(same, ds);
        let other = random_undersample(&ds, &plan(5, &[], Some(50), 2)).unwrap();
        assert_eq!(other.class_counts(), out.class_counts());
        assert_ne!(other.values(), out.values());
        assert!(matches!(
            random_undersample(&ds, &plan(5, &[], Some(101), 1)),
            Err(ResampleError::TargetExceedsCount { .. })
        ));
    }

    #[test]
    fn rebalance_binary_counts() {
        let ds = blob(&[(0, 500), (1, 25)], 3, 4);
        let out = rebalance(&ds, &plan(5, &[(1, 100)], Some(200), 9)).unwrap();
        assert_eq!(out.report.after[&ClassId(0)], 200);
        assert_eq!(out.report.after[&ClassId(1)], 100);
        assert_eq!(out.report.before[&ClassId(1)], 25);
    }

    #[test]
    fn rebalance_identity() {
        let ds = blob(&[(0, 20), (1, 5)], 2, 4);
        let out = rebalance(&ds, &ResamplePlan::identity(1)).unwrap();
        assert_eq!(out.dataset, ds);
    }

    #[test]
    fn rebalance_matches_plan_histogram() {
        let mut counts = vec![(0u8, 200usize)];
        counts.extend((1..=20).map(|c| (c as u8, 20usize)));
        let ds = blob(&counts, 4, 8);
        let targets: Vec<(u8, usize)> = (1..=20).map(|c| (c as u8, 100)).collect();
        let p = plan(5, &targets, None, 11);
        let out = rebalance(&ds, &p).unwrap();
        let mut expected: BTreeMap<ClassId, usize> = BTreeMap::new();
        expected.insert(ClassId(0), 200);
        for c in 1..=20 {
            expected.insert(ClassId(c), 100);
        }
        assert_eq!(out.report.after, expected);
    }

    #[test]
    fn default_settings_plan() {
        // fault counts 10, 20, 30 -> median 20 -> oversample to 40,
        // normal to 2 * 40 = 80
        let ds = blob(&[(0, 500), (1, 10), (2, 20), (3, 30)], 2, 1);
        let p = ResampleSettings::default().plan_for(&ds, 3);
        assert_eq!(p.oversample_targets.get(&ClassId(1)), Some(&40));
        assert_eq!(p.oversample_targets.get(&ClassId(3)), Some(&40));
        assert_eq!(p.majority_target, Some(80));
        let out = rebalance(&ds, &p).unwrap();
        assert_eq!(out.report.after.values().copied().collect::<Vec<_>>(), vec![80, 40, 40, 40]);
    }

    #[test]
    fn deterministic_for_seed() {
        let ds = blob(&[(0, 50), (1, 12)], 3, 5);
        let p = plan(3, &[(1, 40)], Some(30), 77);
        let a = rebalance(&ds, &p).unwrap().dataset;
        let b = rebalance(&ds, &p).unwrap().dataset;
        assert_eq!(a, b);
    }
}
