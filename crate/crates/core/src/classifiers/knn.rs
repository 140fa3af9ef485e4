use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparameters, Reader};
use super::{ClassifierError, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Distance {
    Manhattan,
    Euclidean,
    Minkowski(f64),
}

impl Distance {
    fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::Minkowski(p) => a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteWeights {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub weights: VoteWeights,
    pub distance: Distance,
    /// Kept for preset fidelity; the search is brute force.
    pub leaf_size: usize,
}

impl KnnParams {
    /// A `metric` of "manhattan" or "euclidean" fixes the distance; `p` is
    /// only consulted for "minkowski".
    pub fn from_hyper(h: &Hyperparameters) -> Result<Self, ClassifierError> {
        let r = Reader::new(ModelKind::Knn, h)?;
        let k = r.usize("k", 5)?;
        r.check("k", k >= 1, "k must be at least 1")?;
        let weights = match r.text("weights", "uniform")?.as_str() {
            "uniform" => VoteWeights::Uniform,
            "distance" => VoteWeights::Distance,
            _ => return Err(r.invalid("weights", "expected uniform or distance")),
        };
        let p = r.float("p", 2.0)?;
        let distance = match r.text("metric", "minkowski")?.as_str() {
            "manhattan" | "cityblock" | "l1" => Distance::Manhattan,
            "euclidean" | "l2" => Distance::Euclidean,
            "minkowski" => {
                r.check("p", p >= 1.0, "p must be >= 1")?;
                if p == 1.0 {
                    Distance::Manhattan
                } else if p == 2.0 {
                    Distance::Euclidean
                } else {
                    Distance::Minkowski(p)
                }
            }
            _ => return Err(r.invalid("metric", "unknown metric")),
        };
        let leaf_size = r.usize("leaf_size", 30)?;
        Ok(Self { k, weights, distance, leaf_size })
    }
}

/// Memorised training set; prediction is a brute-force neighbour vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: KnnParams,
    pub train_x: Array2<f64>,
    /// Class positions (indices into the model's class list).
    pub train_y: Vec<usize>,
    pub n_classes: usize,
}

impl KnnModel {
    pub fn fit(params: KnnParams, x: ArrayView2<'_, f64>, y: &[usize], n_classes: usize) -> Self {
        Self { params, train_x: x.as_standard_layout().into_owned(), train_y: y.to_vec(), n_classes }
    }

    fn proba_row(&self, q: ArrayView1<'_, f64>) -> Vec<f64> {
        let q = q.to_vec();
        let width = self.train_x.ncols().max(1);
        let train = self.train_x.as_slice().expect("standard layout");
        let mut d: Vec<(f64, usize)> =
            train.chunks_exact(width).enumerate().map(|(i, r)| (self.params.distance.eval(&q, r), i)).collect();
        let k = self.params.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        let mut votes = vec![0.0; self.n_classes];
        match self.params.weights {
            VoteWeights::Uniform => {
                for &(_, i) in &d {
                    votes[self.train_y[i]] += 1.0;
                }
            }
            VoteWeights::Distance => {
                if d.iter().any(|&(dist, _)| dist == 0.0) {
                    for &(dist, i) in &d {
                        if dist == 0.0 {
                            votes[self.train_y[i]] += 1.0;
                        }
                    }
                } else {
                    for &(dist, i) in &d {
                        votes[self.train_y[i]] += 1.0 / dist;
                    }
                }
            }
        }
        let total: f64 = votes.iter().sum();
        votes.iter_mut().for_each(|v| *v /= total);
        votes
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let rows: Vec<Vec<f64>> = (0..x.nrows()).into_par_iter().map(|i| self.proba_row(x.row(i))).collect();
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (i, r) in rows.into_iter().enumerate() {
            for (j, v) in r.into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::hyper::HyperValue;
    use ndarray::array;

    #[test]
    fn manhattan_wins_over_p() {
        let mut h = Hyperparameters::new();
        h.insert("metric".into(), HyperValue::from("manhattan"));
        h.insert("p".into(), HyperValue::Int(2));
        assert_eq!(KnnParams::from_hyper(&h).unwrap().distance, Distance::Manhattan);
    }

    #[test]
    fn vote_fractions() {
        let params = KnnParams { k: 3, weights: VoteWeights::Uniform, distance: Distance::Euclidean, leaf_size: 30 };
        let x = array![[0.0], [0.1], [0.2], [5.0]];
        let m = KnnModel::fit(params, x.view(), &[0, 1, 1, 0], 2);
        let p = m.predict_proba(array![[0.05]].view());
        assert!((p[[0, 0]] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p[[0, 1]] - 2.0 / 3.0).abs() < 1e-12);
    }
}
