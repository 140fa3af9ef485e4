use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::Dataset;

/// Standard deviations below this are replaced by it.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-column z-score transform fitted on training data.
///
/// Uses the population (1/n) standard deviation. Columns that are exactly
/// constant map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(values: ArrayView2<'_, f64>) -> Self {
        assert!(values.nrows() > 0, "cannot fit a scaler on zero rows");
        let n = values.nrows() as f64;
        let mut mean = Vec::with_capacity(values.ncols());
        let mut std = Vec::with_capacity(values.ncols());
        for col in values.axis_iter(Axis(1)) {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                mean.push(first);
                std.push(STD_FLOOR);
                continue;
            }
            let m = col.sum() / n;
            // second pass refines the mean against cancellation
            let m = m + col.iter().map(|&v| v - m).sum::<f64>() / n;
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Self { mean, std }
    }

    pub fn fit_dataset(train: &Dataset) -> Self {
        Self::fit(train.values())
    }

    /// Identity transform over `width` columns.
    pub fn identity(width: usize) -> Self {
        Self { mean: vec![0.0; width], std: vec![1.0; width] }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, values: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(values.ncols(), self.width(), "scaler width mismatch");
        let mut out = values.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    pub fn transform_row(&self, row: ArrayView1<'_, f64>) -> Array1<f64> {
        Array1::from_iter(row.iter().enumerate().map(|(j, &v)| (v - self.mean[j]) / self.std[j]))
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        ds.with_values(self.transform(ds.values()), ds.labels().to_vec())
    }

    pub fn inverse_row(&self, row: ArrayView1<'_, f64>) -> Array1<f64> {
        Array1::from_iter(row.iter().enumerate().map(|(j, &v)| v * self.std[j] + self.mean[j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_zscores() {
        let x = array![[1.0], [2.0], [3.0]];
        let s = Scaler::fit(x.view());
        let t = s.transform(x.view());
        // population std of [1,2,3] is sqrt(2/3); z = ±1/sqrt(2/3)
        let z = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((t[[0, 0]] + z).abs() < 1e-12);
        assert_eq!(t[[1, 0]], 0.0);
        assert!((t[[2, 0]] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = array![[5.0, 0.1], [5.0, 0.1], [5.0, 0.1]];
        let t = Scaler::fit(x.view()).transform(x.view());
        assert!(t.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_matches_fit_transform() {
        let x = array![[1.0, -2.0], [4.0, 0.5], [2.5, 9.0]];
        let s = Scaler::fit(x.view());
        let a = s.transform(x.view());
        let b = s.transform(x.view().to_owned().view());
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn standardized_moments(col in proptest::collection::vec(-1e3f64..1e3, 3..60)) {
            prop_assume!(col.iter().any(|&v| (v - col[0]).abs() > 1e-6));
            let x = Array2::from_shape_vec((col.len(), 1), col.clone()).unwrap();
            let t = Scaler::fit(x.view()).transform(x.view());
            let n = col.len() as f64;
            let m = t.sum() / n;
            let v = t.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / n;
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((v.sqrt() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn affine_equivariance(col in proptest::collection::vec(-100f64..100.0, 3..40), a in 0.1f64..10.0, b in -50f64..50.0) {
            prop_assume!(col.iter().any(|&v| (v - col[0]).abs() > 1e-3));
            let x = Array2::from_shape_vec((col.len(), 1), col.clone()).unwrap();
            let y = x.mapv(|v| a * v + b);
            let tx = Scaler::fit(x.view()).transform(x.view());
            let ty = Scaler::fit(y.view()).transform(y.view());
            for (p, q) in tx.iter().zip(ty.iter()) {
                prop_assert!((p - q).abs() < 1e-8);
            }
        }
    }
}
