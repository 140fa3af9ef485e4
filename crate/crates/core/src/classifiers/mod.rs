//! The three model families (k-NN, MLP, gradient-boosted trees) behind one
//! fit/predict interface, plus presets, persistence and random search.

pub mod gbt;
pub mod hyper;
pub mod knn;
pub mod mlp;
mod persist;
mod presets;
mod search;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClassId, Dataset, DatasetError, Scaler};
use crate::resampling::ResampleError;

pub use hyper::{allowed_keys, HyperValue, Hyperparameters};
pub use persist::{load_model, model_summary, save_model, ModelSummary, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use presets::{preset, preset_table, PresetEntry, PresetTable};
pub use search::{random_search, Objective, SearchOutcome, SearchSpace, SearchTrial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Knn,
    Mlp,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Knn, ModelKind::Mlp, ModelKind::Gbt];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::Mlp => "mlp",
            ModelKind::Gbt => "gbt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(ModelKind::Knn),
            "mlp" => Ok(ModelKind::Mlp),
            "gbt" => Ok(ModelKind::Gbt),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("{kind}: unknown hyperparameter {key:?}")]
    UnknownHyperparameter { kind: ModelKind, key: String },
    #[error("{kind}: invalid hyperparameter {key:?}: {reason}")]
    InvalidHyperparameter { kind: ModelKind, key: String, reason: String },
    #[error("training set contains a single class")]
    SingleClassTrainingSet,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("input has {got} columns, model expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("search space is empty")]
    EmptySearchSpace,
    #[error("no preset for {kind}")]
    MissingPreset { kind: ModelKind },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What to train: model family, hyperparameters and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, hyperparameters: Hyperparameters, seed: u64) -> Self {
        Self { kind, hyperparameters, seed }
    }

    pub fn with_defaults(kind: ModelKind, seed: u64) -> Self {
        Self::new(kind, Hyperparameters::new(), seed)
    }

    pub fn set(mut self, key: &str, value: impl Into<HyperValue>) -> Self {
        self.hyperparameters.insert(key.to_string(), value.into());
        self
    }

    /// Checks every key and value without training.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self.kind {
            ModelKind::Knn => knn::KnnParams::from_hyper(&self.hyperparameters).map(|_| ()),
            ModelKind::Mlp => mlp::MlpParams::from_hyper(&self.hyperparameters).map(|_| ()),
            ModelKind::Gbt => gbt::GbtParams::from_hyper(&self.hyperparameters).map(|_| ()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Knn(knn::KnnModel),
    Mlp(mlp::Mlp),
    Gbt(gbt::GbtModel),
}

/// A fitted classifier together with the scaler applied to its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub scaler: Scaler,
    pub classes: Vec<ClassId>,
    pub variables: Vec<String>,
    pub params: ModelParams,
}

/// Trains `spec` on `train`. Inputs are z-scored with statistics of `train`.
pub fn fit(spec: &ModelSpec, train: &Dataset) -> Result<TrainedModel, ClassifierError> {
    if train.n_samples() == 0 {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(ClassifierError::SingleClassTrainingSet);
    }
    let scaler = Scaler::fit_dataset(train);
    let x = scaler.transform(train.values());
    let y: Vec<usize> = train.labels().iter().map(|c| classes.binary_search(c).expect("label in class list")).collect();
    let n_classes = classes.len();
    let params = match spec.kind {
        ModelKind::Knn => {
            let p = knn::KnnParams::from_hyper(&spec.hyperparameters)?;
            ModelParams::Knn(knn::KnnModel::fit(p, x.view(), &y, n_classes))
        }
        ModelKind::Mlp => {
            let p = mlp::MlpParams::from_hyper(&spec.hyperparameters)?;
            ModelParams::Mlp(mlp::fit(&p, x.view(), &y, n_classes, spec.seed)?)
        }
        ModelKind::Gbt => {
            let p = gbt::GbtParams::from_hyper(&spec.hyperparameters)?;
            ModelParams::Gbt(gbt::GbtModel::fit(&p, x.view(), &y, n_classes, spec.seed))
        }
    };
    Ok(TrainedModel { spec: spec.clone(), scaler, classes, variables: train.variable_ids(), params })
}

/// Position of the largest entry; the first one wins ties.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.scaler.width()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Probabilities for raw (unscaled) inputs; columns follow `classes`.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, ClassifierError> {
        if x.ncols() != self.n_features() {
            return Err(ClassifierError::WidthMismatch { expected: self.n_features(), got: x.ncols() });
        }
        Ok(self.predict_proba_unchecked(x))
    }

    pub(crate) fn predict_proba_unchecked(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let z = self.scaler.transform(x);
        match &self.params {
            ModelParams::Knn(m) => m.predict_proba(z.view()),
            ModelParams::Mlp(m) => m.predict_proba(z.view()),
            ModelParams::Gbt(m) => m.predict_proba(z.view()),
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<ClassId>, ClassifierError> {
        let p = self.predict_proba(x)?;
        Ok(p.outer_iter().map(|r| self.classes[argmax(r)]).collect())
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<ClassId>, ClassifierError> {
        self.predict(ds.values())
    }
}
