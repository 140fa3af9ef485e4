//! Process data: variable schema, labelled sample matrix, CSV ingestion,
//! stratified splitting and z-score scaling.

mod csvio;
mod scaler;
mod schema;
mod split;

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csvio::{load_csv, parse_label, write_csv, LoadedDataset};
pub use scaler::{Scaler, STD_FLOOR};
pub use schema::{VariableInfo, VariableKind, VariableSchema};
pub use split::{stratified_kfold, stratified_sample, stratified_split, stratified_split_indices, Fold};

/// Largest fault number (IDV 20).
pub const MAX_CLASS_ID: u8 = 20;

/// Class label: 0 is fault-free operation, 1..=20 the IDV fault number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u8);

impl ClassId {
    pub const NORMAL: ClassId = ClassId(0);

    pub fn is_fault(self) -> bool {
        self.0 != 0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("row {row}: label {value:?} outside 0..=20")]
    LabelOutOfRange { row: usize, value: String },
    #[error("class {class} has {count} samples, {needed} needed")]
    ClassTooSmall { class: ClassId, count: usize, needed: usize },
    #[error("duplicate variable id {0:?}")]
    DuplicateVariable(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Column-labelled sample matrix with one class label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    variables: Vec<VariableInfo>,
    values: Array2<f64>,
    labels: Vec<ClassId>,
}

impl Dataset {
    pub fn new(variables: Vec<VariableInfo>, values: Array2<f64>, labels: Vec<ClassId>) -> Result<Self, DatasetError> {
        if values.ncols() != variables.len() {
            return Err(DatasetError::ShapeMismatch(format!(
                "{} variables but {} columns",
                variables.len(),
                values.ncols()
            )));
        }
        if values.nrows() != labels.len() {
            return Err(DatasetError::ShapeMismatch(format!("{} rows but {} labels", values.nrows(), labels.len())));
        }
        // re-validate ids
        VariableSchema::new("", variables.clone())?;
        if let Some(row) = labels.iter().position(|c| c.0 > MAX_CLASS_ID) {
            return Err(DatasetError::LabelOutOfRange { row, value: labels[row].to_string() });
        }
        for ((r, c), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(DatasetError::NonFinite { row: r, col: c });
            }
        }
        Ok(Self { variables, values, labels })
    }

    /// Builds a dataset over bare variables named by `ids`.
    pub fn from_parts<S: AsRef<str>>(
        ids: &[S],
        values: Array2<f64>,
        labels: Vec<ClassId>,
    ) -> Result<Self, DatasetError> {
        let vars = ids.iter().map(|s| VariableInfo::bare(s.as_ref())).collect();
        Self::new(vars, values, labels)
    }

    pub fn variables(&self) -> &[VariableInfo] {
        &self.variables
    }

    pub fn variable_ids(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.id.clone()).collect()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn column_index(&self, id: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.id == id)
    }

    /// Sorted distinct class ids present in the data.
    pub fn classes(&self) -> Vec<ClassId> {
        self.class_counts().into_keys().collect()
    }

    pub fn class_counts(&self) -> BTreeMap<ClassId, usize> {
        let mut counts = BTreeMap::new();
        for &c in &self.labels {
            *counts.entry(c).or_insert(0) += 1;
        }
        counts
    }

    /// Row indices per class, ascending.
    pub fn class_indices(&self) -> BTreeMap<ClassId, Vec<usize>> {
        let mut out: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.labels.iter().enumerate() {
            out.entry(c).or_default().push(i);
        }
        out
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            variables: self.variables.clone(),
            values: self.values.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Columns at `indices`, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Dataset {
        Dataset {
            variables: indices.iter().map(|&i| self.variables[i].clone()).collect(),
            values: self.values.select(Axis(1), indices),
            labels: self.labels.clone(),
        }
    }

    pub fn select_variables<S: AsRef<str>>(&self, ids: &[S]) -> Result<Dataset, DatasetError> {
        let idx = ids
            .iter()
            .map(|id| {
                self.column_index(id.as_ref()).ok_or_else(|| DatasetError::UnknownVariable(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.select_columns(&idx))
    }

    /// Same variables, replaced values. Used by the scaler and resampler.
    pub(crate) fn with_values(&self, values: Array2<f64>, labels: Vec<ClassId>) -> Dataset {
        debug_assert_eq!(values.ncols(), self.variables.len());
        debug_assert_eq!(values.nrows(), labels.len());
        Dataset { variables: self.variables.clone(), values, labels }
    }

    /// Labels collapsed to fault-free (0) versus any fault (1).
    pub fn binary_labels(&self) -> Dataset {
        let labels = self.labels.iter().map(|c| ClassId(c.is_fault() as u8)).collect();
        Dataset { variables: self.variables.clone(), values: self.values.clone(), labels }
    }

    /// Numeric copy of the labels as an indicator column.
    ///
    /// With `fault = None` the column is 1 for any fault row; with
    /// `Some(id)` it is 1 only for that fault (one-vs-rest).
    pub fn fault_indicator(&self, fault: Option<ClassId>) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&c| match fault {
                None => c.is_fault() as u8 as f64,
                Some(f) => (c == f) as u8 as f64,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_shapes_and_labels() {
        let v = array![[1.0, 2.0], [3.0, 4.0]];
        assert!(matches!(
            Dataset::from_parts(&["a"], v.clone(), vec![ClassId(0), ClassId(1)]),
            Err(DatasetError::ShapeMismatch(_))
        ));
        assert!(matches!(
            Dataset::from_parts(&["a", "b"], v.clone(), vec![ClassId(0)]),
            Err(DatasetError::ShapeMismatch(_))
        ));
        assert!(matches!(
            Dataset::from_parts(&["a", "b"], v, vec![ClassId(0), ClassId(21)]),
            Err(DatasetError::LabelOutOfRange { row: 1, .. })
        ));
        let nan = array![[f64::NAN, 2.0]];
        assert!(matches!(
            Dataset::from_parts(&["a", "b"], nan, vec![ClassId(0)]),
            Err(DatasetError::NonFinite { row: 0, col: 0 })
        ));
    }

    #[test]
    fn selection_and_counts() {
        let v = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]];
        let ds = Dataset::from_parts(&["a", "b", "c"], v, vec![ClassId(0), ClassId(4), ClassId(4)]).unwrap();
        assert_eq!(ds.class_counts()[&ClassId(4)], 2);
        let sub = ds.select_variables(&["c", "a"]).unwrap();
        assert_eq!(sub.variable_ids(), vec!["c", "a"]);
        assert_eq!(sub.row(1).to_vec(), vec![6.0, 4.0]);
        let rows = ds.select_rows(&[2, 0]);
        assert_eq!(rows.labels(), &[ClassId(4), ClassId(0)]);
        assert_eq!(ds.binary_labels().labels(), &[ClassId(0), ClassId(1), ClassId(1)]);
        assert_eq!(ds.fault_indicator(Some(ClassId(4))), vec![0.0, 1.0, 1.0]);
        assert!(ds.select_variables(&["zz"]).is_err());
    }
}
