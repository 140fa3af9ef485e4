use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::ClassId;

/// Counts indexed `[true][predicted]` over an ordered class list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassId>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<ClassId>, counts: Vec<Vec<u64>>) -> Self {
        assert_eq!(counts.len(), classes.len());
        assert!(counts.iter().all(|r| r.len() == classes.len()));
        Self { classes, counts }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn position(&self, c: ClassId) -> Option<usize> {
        self.classes.iter().position(|&x| x == c)
    }

    /// One-vs-rest counts for the class at position `i`.
    pub fn one_vs_rest(&self, i: usize) -> BinaryCounts {
        let tp = self.counts[i][i];
        let row: u64 = self.counts[i].iter().sum();
        let col: u64 = self.counts.iter().map(|r| r[i]).sum();
        let fn_ = row - tp;
        let fp = col - tp;
        BinaryCounts { tp, fp, fn_, tn: self.total() - tp - fp - fn_ }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// Builds the confusion matrix over `classes` (sorted, deduplicated).
pub fn confusion(classes: &[ClassId], y_true: &[ClassId], y_pred: &[ClassId]) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch { expected: y_true.len(), got: y_pred.len() });
    }
    let mut classes = classes.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let pos = |c: ClassId| classes.binary_search(&c).map_err(|_| EvalError::UnknownLabel(c));
    let n = classes.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        counts[pos(t)?][pos(p)?] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

/// How per-class quantities are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Averaging {
    /// Binary with the second class as positive when there are two classes,
    /// macro one-vs-rest otherwise.
    #[default]
    Auto,
    Macro,
    Binary {
        positive: ClassId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub acc: f64,
    pub bacc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 6] = ["acc", "bacc", "precision", "recall", "f1", "auc"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.acc, self.bacc, self.precision, self.recall, self.f1, self.auc]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { acc: a[0], bacc: a[1], precision: a[2], recall: a[3], f1: a[4], auc: a[5] }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|&n| n == name).map(|i| self.to_array()[i])
    }
}

/// Class probabilities for AUC, columns aligned with the confusion matrix
/// classes, together with the true labels of each row.
#[derive(Debug, Clone, Copy)]
pub struct Scores<'a> {
    pub y_true: &'a [ClassId],
    pub proba: ArrayView2<'a, f64>,
}

/// Classes whose terms hit a zero denominator and were set to 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ZeroDivision {
    pub precision: Vec<ClassId>,
    pub recall: Vec<ClassId>,
    pub specificity: Vec<ClassId>,
    pub auc: Vec<ClassId>,
}

impl ZeroDivision {
    pub fn is_empty(&self) -> bool {
        self.precision.is_empty() && self.recall.is_empty() && self.specificity.is_empty() && self.auc.is_empty()
    }
}

fn ratio(num: u64, den: u64, flag: &mut Vec<ClassId>, c: ClassId) -> f64 {
    if den == 0 {
        flag.push(c);
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Area under the ROC curve by the rank-sum statistic, ties counted half.
/// Returns `None` if either group is empty.
pub fn auc_rank(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of mid-ranks (1-based) of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

fn resolve(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Option<usize>, EvalError> {
    match averaging {
        Averaging::Macro => Ok(None),
        Averaging::Auto => Ok((cm.n_classes() == 2).then_some(1)),
        Averaging::Binary { positive } => {
            if cm.n_classes() != 2 {
                return Err(EvalError::NotBinary(cm.n_classes()));
            }
            cm.position(positive).map(Some).ok_or(EvalError::UnknownLabel(positive))
        }
    }
}

/// The five count-based metrics; `auc` is left at 0.
pub fn threshold_metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<(MetricSet, ZeroDivision), EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyConfusion);
    }
    let mut zd = ZeroDivision::default();
    let acc = cm.trace() as f64 / total as f64;
    let m = match resolve(cm, averaging)? {
        Some(pos) => {
            let c = cm.classes[pos];
            let b = cm.one_vs_rest(pos);
            let recall = ratio(b.tp, b.tp + b.fn_, &mut zd.recall, c);
            let precision = ratio(b.tp, b.tp + b.fp, &mut zd.precision, c);
            let tnr = ratio(b.tn, b.tn + b.fp, &mut zd.specificity, c);
            MetricSet {
                acc: (b.tp + b.tn) as f64 / total as f64,
                bacc: (recall + tnr) / 2.0,
                precision,
                recall,
                f1: f1_of(precision, recall),
                auc: 0.0,
            }
        }
        None => {
            let k = cm.n_classes() as f64;
            let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
            for (i, &c) in cm.classes.iter().enumerate() {
                let b = cm.one_vs_rest(i);
                let r = ratio(b.tp, b.tp + b.fn_, &mut zd.recall, c);
                let p = ratio(b.tp, b.tp + b.fp, &mut zd.precision, c);
                p_sum += p;
                r_sum += r;
                f_sum += f1_of(p, r);
            }
            MetricSet { acc, bacc: r_sum / k, precision: p_sum / k, recall: r_sum / k, f1: f_sum / k, auc: 0.0 }
        }
    };
    Ok((m, zd))
}

/// All six metrics. Count-based terms come from `cm`, AUC from `scores`.
pub fn compute_metrics(
    cm: &ConfusionMatrix,
    scores: Option<Scores<'_>>,
    averaging: Averaging,
) -> Result<(MetricSet, ZeroDivision), EvalError> {
    let scores = scores.ok_or(EvalError::ScoresMissingForAuc)?;
    if scores.proba.ncols() != cm.n_classes() || scores.proba.nrows() != scores.y_true.len() {
        return Err(EvalError::ScoreShape {
            rows: scores.proba.nrows(),
            cols: scores.proba.ncols(),
            labels: scores.y_true.len(),
            classes: cm.n_classes(),
        });
    }
    let (mut m, mut zd) = threshold_metrics(cm, averaging)?;
    let auc_for = |i: usize, zd: &mut ZeroDivision| {
        let c = cm.classes[i];
        let col: Vec<f64> = scores.proba.column(i).to_vec();
        let pos: Vec<bool> = scores.y_true.iter().map(|&t| t == c).collect();
        auc_rank(&col, &pos).unwrap_or_else(|| {
            zd.auc.push(c);
            0.0
        })
    };
    m.auc = match resolve(cm, averaging)? {
        Some(pos) => auc_for(pos, &mut zd),
        None => (0..cm.n_classes()).map(|i| auc_for(i, &mut zd)).sum::<f64>() / cm.n_classes() as f64,
    };
    if !zd.is_empty() {
        log::warn!("zero denominators set to 0: {zd:?}");
    }
    Ok((m, zd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn c(v: &[u8]) -> Vec<ClassId> {
        v.iter().map(|&x| ClassId(x)).collect()
    }

    #[test]
    fn confusion_hand_count() {
        let cm = confusion(&c(&[0, 1]), &c(&[0, 0, 1]), &c(&[0, 1, 1])).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        let d = confusion(&c(&[0, 1, 2]), &c(&[2, 0, 1, 2]), &c(&[2, 0, 1, 2])).unwrap();
        assert_eq!(d.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        let perm = confusion(&c(&[0, 1]), &c(&[1, 0, 0]), &c(&[1, 1, 0])).unwrap();
        assert_eq!(perm, cm);
        assert!(matches!(confusion(&c(&[0, 1]), &c(&[3]), &c(&[0])), Err(EvalError::UnknownLabel(ClassId(3)))));
    }

    #[test]
    fn binary_substitution() {
        // TP=40, TN=50, FP=10, FN=0 with class 1 positive.
        let cm = ConfusionMatrix::from_counts(c(&[0, 1]), vec![vec![50, 10], vec![0, 40]]);
        let (m, zd) = threshold_metrics(&cm, Averaging::Auto).unwrap();
        assert!(zd.is_empty());
        assert!((m.acc - 0.9).abs() < 1e-15);
        assert!((m.recall - 1.0).abs() < 1e-15);
        assert!((m.precision - 0.8).abs() < 1e-15);
        assert!((m.f1 - 8.0 / 9.0).abs() < 1e-15);
        assert!((m.bacc - (1.0 + 5.0 / 6.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_classifier() {
        let y = c(&[0, 1, 2, 0, 1, 2]);
        let cm = confusion(&c(&[0, 1, 2]), &y, &y).unwrap();
        let proba = Array2::from_shape_fn((6, 3), |(i, j)| (y[i].0 as usize == j) as u8 as f64);
        let (m, _) = compute_metrics(&cm, Some(Scores { y_true: &y, proba: proba.view() }), Averaging::Macro).unwrap();
        assert_eq!(m.to_array(), [1.0; 6]);
    }

    #[test]
    fn auc_four_points() {
        assert_eq!(auc_rank(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]), Some(0.75));
        assert_eq!(auc_rank(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(auc_rank(&[0.5], &[true]), None);
    }

    #[test]
    fn zero_denominator_flagged() {
        // nothing predicted as class 1
        let cm = ConfusionMatrix::from_counts(c(&[0, 1]), vec![vec![5, 0], vec![3, 0]]);
        let (m, zd) = threshold_metrics(&cm, Averaging::Binary { positive: ClassId(1) }).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(zd.precision, c(&[1]));
    }

    #[test]
    fn missing_scores() {
        let cm = ConfusionMatrix::from_counts(c(&[0, 1]), vec![vec![1, 0], vec![0, 1]]);
        assert!(matches!(compute_metrics(&cm, None, Averaging::Auto), Err(EvalError::ScoresMissingForAuc)));
        let y = c(&[0, 1]);
        let bad = array![[1.0], [0.0]];
        assert!(matches!(
            compute_metrics(&cm, Some(Scores { y_true: &y, proba: bad.view() }), Averaging::Auto),
            Err(EvalError::ScoreShape { .. })
        ));
    }
}
