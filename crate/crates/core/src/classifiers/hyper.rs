use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, ModelKind};

/// A single hyperparameter value as written in config and preset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Int(i64),
    Float(f64),
    Text(String),
    IntList(Vec<i64>),
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Int(v) => write!(f, "{v}"),
            HyperValue::Float(v) => write!(f, "{v}"),
            HyperValue::Text(v) => write!(f, "{v}"),
            HyperValue::IntList(v) => {
                let parts: Vec<String> = v.iter().map(i64::to_string).collect();
                write!(f, "({})", parts.join(", "))
            }
        }
    }
}

impl From<i64> for HyperValue {
    fn from(v: i64) -> Self {
        HyperValue::Int(v)
    }
}

impl From<f64> for HyperValue {
    fn from(v: f64) -> Self {
        HyperValue::Float(v)
    }
}

impl From<&str> for HyperValue {
    fn from(v: &str) -> Self {
        HyperValue::Text(v.to_string())
    }
}

impl From<Vec<i64>> for HyperValue {
    fn from(v: Vec<i64>) -> Self {
        HyperValue::IntList(v)
    }
}

pub type Hyperparameters = BTreeMap<String, HyperValue>;

pub const KNN_KEYS: &[&str] = &["k", "weights", "metric", "p", "leaf_size"];
pub const MLP_KEYS: &[&str] =
    &["hidden_layers", "activation", "learning_rate", "l2", "batch_size", "max_epochs", "solver"];
pub const GBT_KEYS: &[&str] = &["learning_rate", "max_depth", "n_estimators", "subsample", "min_child_weight", "gamma"];

pub fn allowed_keys(kind: ModelKind) -> &'static [&'static str] {
    match kind {
        ModelKind::Knn => KNN_KEYS,
        ModelKind::Mlp => MLP_KEYS,
        ModelKind::Gbt => GBT_KEYS,
    }
}

/// Typed accessor over a hyperparameter map that rejects unknown keys.
pub(crate) struct Reader<'a> {
    kind: ModelKind,
    map: &'a Hyperparameters,
}

impl<'a> Reader<'a> {
    pub fn new(kind: ModelKind, map: &'a Hyperparameters) -> Result<Self, ClassifierError> {
        let allowed = allowed_keys(kind);
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(ClassifierError::UnknownHyperparameter { kind, key: k.clone() });
        }
        Ok(Self { kind, map })
    }

    pub fn invalid(&self, key: &str, why: &str) -> ClassifierError {
        ClassifierError::InvalidHyperparameter { kind: self.kind, key: key.to_string(), reason: why.to_string() }
    }

    pub fn float(&self, key: &str, default: f64) -> Result<f64, ClassifierError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(HyperValue::Float(v)) => Ok(*v),
            Some(HyperValue::Int(v)) => Ok(*v as f64),
            Some(_) => Err(self.invalid(key, "expected a number")),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, ClassifierError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(HyperValue::Int(v)) if *v >= 0 => Ok(*v as usize),
            Some(HyperValue::Float(v)) if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as usize),
            Some(_) => Err(self.invalid(key, "expected a non-negative integer")),
        }
    }

    pub fn text(&self, key: &str, default: &str) -> Result<String, ClassifierError> {
        match self.map.get(key) {
            None => Ok(default.to_string()),
            Some(HyperValue::Text(v)) => Ok(v.to_ascii_lowercase()),
            Some(_) => Err(self.invalid(key, "expected a string")),
        }
    }

    pub fn int_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>, ClassifierError> {
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(HyperValue::IntList(v)) if v.iter().all(|&x| x > 0) => Ok(v.iter().map(|&x| x as usize).collect()),
            Some(HyperValue::Int(v)) if *v > 0 => Ok(vec![*v as usize]),
            Some(_) => Err(self.invalid(key, "expected a list of positive integers")),
        }
    }

    pub fn check(&self, key: &str, ok: bool, why: &str) -> Result<(), ClassifierError> {
        if ok {
            Ok(())
        } else {
            Err(self.invalid(key, why))
        }
    }
}
