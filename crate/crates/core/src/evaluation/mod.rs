//! Classification metrics, stratified cross-validation and summaries.

mod metrics;

use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{self, ClassifierError, ModelSpec, TrainedModel};
use crate::dataset::{stratified_kfold, ClassId, Dataset, DatasetError};
use crate::resampling::{rebalance, ResampleError, ResampleReport, ResampleSettings};

pub use metrics::{
    auc_rank, compute_metrics, confusion, threshold_metrics, Averaging, BinaryCounts, ConfusionMatrix, MetricSet,
    Scores, ZeroDivision,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label {0} is not in the class list")]
    UnknownLabel(ClassId),
    #[error("length mismatch: {expected} labels vs {got} predictions")]
    LengthMismatch { expected: usize, got: usize },
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("scores are required for AUC")]
    ScoresMissingForAuc,
    #[error("score matrix {rows}x{cols} does not match {labels} labels and {classes} classes")]
    ScoreShape { rows: usize, cols: usize, labels: usize, classes: usize },
    #[error("binary averaging needs 2 classes, got {0}")]
    NotBinary(usize),
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// Evaluates `model` on `test`: confusion over the union of model and test
/// classes, then all six metrics.
pub fn evaluate(model: &TrainedModel, test: &Dataset, averaging: Averaging) -> Result<FoldResult, EvalError> {
    let proba = model.predict_proba(test.values())?;
    let mut classes = model.classes.clone();
    classes.extend(test.classes());
    classes.sort_unstable();
    classes.dedup();
    // align probability columns with the confusion classes
    let mut aligned = Array2::zeros((test.n_samples(), classes.len()));
    for (j, c) in model.classes.iter().enumerate() {
        let k = classes.binary_search(c).expect("model class present");
        aligned.column_mut(k).assign(&proba.column(j));
    }
    let pred: Vec<ClassId> = proba.outer_iter().map(|r| model.classes[classifiers::argmax(r)]).collect();
    let cm = confusion(&classes, test.labels(), &pred)?;
    let (metrics, zero_division) =
        compute_metrics(&cm, Some(Scores { y_true: test.labels(), proba: aligned.view() }), averaging)?;
    Ok(FoldResult { metrics, confusion: cm, zero_division, resample: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub metrics: MetricSet,
    pub confusion: ConfusionMatrix,
    pub zero_division: ZeroDivision,
    pub resample: Option<ResampleReport>,
}

/// Mean and sample standard deviation of each metric over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n_folds: usize,
    pub mean: MetricSet,
    pub std: MetricSet,
    pub folds: Vec<MetricSet>,
}

impl MetricSummary {
    pub fn from_folds(folds: Vec<MetricSet>) -> Self {
        let n = folds.len();
        let mut mean = [0.0; 6];
        for f in &folds {
            for (m, v) in mean.iter_mut().zip(f.to_array()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [0.0; 6];
        if n > 1 {
            for f in &folds {
                for ((s, v), m) in var.iter_mut().zip(f.to_array()).zip(mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s = (*s / (n - 1) as f64).sqrt());
        }
        Self { n_folds: n, mean: MetricSet::from_array(mean), std: MetricSet::from_array(var), folds }
    }

    /// `"0.872±0.006"` style cell for one metric.
    pub fn cell(&self, name: &str) -> Option<String> {
        Some(format!("{:.3}±{:.3}", self.mean.get(name)?, self.std.get(name)?))
    }
}

/// Renders rows of `(label, summary)` as an aligned text table.
pub fn summary_table(rows: &[(String, &MetricSummary)]) -> String {
    let mut header = vec!["model".to_string()];
    header.extend(MetricSet::NAMES.iter().map(|s| s.to_string()));
    let mut cells: Vec<Vec<String>> = vec![header];
    for (label, s) in rows {
        let mut r = vec![label.clone()];
        r.extend(MetricSet::NAMES.iter().map(|n| s.cell(n).unwrap()));
        cells.push(r);
    }
    let widths: Vec<usize> =
        (0..cells[0].len()).map(|j| cells.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, r) in cells.iter().enumerate() {
        let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub summary: MetricSummary,
    pub folds: Vec<FoldResult>,
}

/// Stratified k-fold cross-validation. Each fold-train partition is
/// rebalanced with `resample` before fitting; validation folds keep their
/// original class distribution.
pub fn cross_validate(
    spec: &ModelSpec,
    ds: &Dataset,
    k: usize,
    resample: &ResampleSettings,
    seed: u64,
    averaging: Averaging,
) -> Result<CvResult, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewFolds(k));
    }
    let folds = stratified_kfold(ds, k, seed)?;
    let results: Vec<Result<FoldResult, EvalError>> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let train = ds.select_rows(&fold.train);
            let valid = ds.select_rows(&fold.valid);
            let plan = resample.plan_for(&train, crate::rng::derive_seed(seed, &[0xF01D, i as u64]));
            let balanced = rebalance(&train, &plan)?;
            let model = classifiers::fit(spec, &balanced.dataset)?;
            let mut r = evaluate(&model, &valid, averaging)?;
            r.resample = Some(balanced.report);
            Ok(r)
        })
        .collect();
    let folds = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = MetricSummary::from_folds(folds.iter().map(|f| f.metrics).collect());
    Ok(CvResult { summary, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::ModelKind;
    use crate::rng::Xoshiro256StarStar;

    #[test]
    fn summary_mean_and_sample_std() {
        let f = |v: f64| MetricSet::from_array([v; 6]);
        let s = MetricSummary::from_folds(vec![f(0.1), f(0.2), f(0.3), f(0.4), f(0.5)]);
        assert!((s.mean.acc - 0.3).abs() < 1e-15);
        assert!((s.std.acc - (0.025f64).sqrt()).abs() < 1e-15);
        assert_eq!(s.cell("acc").unwrap(), "0.300±0.158");
    }

    #[test]
    fn separable_regions_give_zero_std() {
        let mut rng = Xoshiro256StarStar::new(3);
        let n = 100;
        let labels: Vec<ClassId> = (0..n).map(|i| ClassId((i % 2) as u8)).collect();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| labels[i].0 as f64 * 10.0 + rng.next_f64());
        let ds = Dataset::from_parts(&["x"], x, labels).unwrap();
        let spec = ModelSpec::with_defaults(ModelKind::Knn, 0);
        let r = cross_validate(&spec, &ds, 5, &ResampleSettings::disabled(), 1, Averaging::Auto).unwrap();
        assert_eq!(r.summary.n_folds, 5);
        assert_eq!(r.summary.std.acc, 0.0);
        assert_eq!(r.summary.mean.acc, 1.0);
        let mean: f64 = r.summary.folds.iter().map(|f| f.bacc).sum::<f64>() / 5.0;
        assert!((mean - r.summary.mean.bacc).abs() < 1e-15);
    }

    #[test]
    fn table_alignment() {
        let s = MetricSummary::from_folds(vec![MetricSet::from_array([0.5; 6]); 2]);
        let t = summary_table(&[("mlp/10".into(), &s), ("knn/52".into(), &s)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("mlp/10  0.500±0.000"));
    }
}
