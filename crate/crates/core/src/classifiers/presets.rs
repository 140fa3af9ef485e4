use serde::{Deserialize, Serialize};

use super::{ClassifierError, Hyperparameters, ModelKind};

const MLP: &str = include_str!("../../presets/mlp.json");
const GBT: &str = include_str!("../../presets/gbt.json");
const KNN: &str = include_str!("../../presets/knn.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetEntry {
    pub n_vars: usize,
    pub hyperparameters: Hyperparameters,
}

/// Published hyperparameters of one model family, keyed by subset size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetTable {
    pub kind: ModelKind,
    pub presets: Vec<PresetEntry>,
}

pub fn preset_table(kind: ModelKind) -> PresetTable {
    let text = match kind {
        ModelKind::Mlp => MLP,
        ModelKind::Gbt => GBT,
        ModelKind::Knn => KNN,
    };
    serde_json::from_str(text).expect("bundled preset file is valid")
}

/// Preset for `n_vars` variables, falling back to the closest listed size
/// (the smaller one on ties). Returns the size actually used.
pub fn preset(kind: ModelKind, n_vars: usize) -> Result<(Hyperparameters, usize), ClassifierError> {
    let table = preset_table(kind);
    table
        .presets
        .into_iter()
        .min_by_key(|e| (e.n_vars.abs_diff(n_vars), e.n_vars))
        .map(|e| (e.hyperparameters, e.n_vars))
        .ok_or(ClassifierError::MissingPreset { kind })
}
