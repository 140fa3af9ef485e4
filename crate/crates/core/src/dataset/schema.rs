use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DatasetError;

const TEP52_JSON: &str = include_str!("../../data/tep52.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Manipulated,
    ContinuousMeasurement,
    SampledMeasurement,
}

/// One monitored process variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableInfo {
    pub id: String,
    pub description: String,
    pub units: String,
    pub kind: VariableKind,
}

impl VariableInfo {
    /// A measurement with no descriptive metadata, used for synthetic data.
    pub fn bare(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            description: String::new(),
            units: String::new(),
            kind: VariableKind::ContinuousMeasurement,
        }
    }
}

/// Ordered list of variables with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSchema {
    pub name: String,
    pub variables: Vec<VariableInfo>,
}

impl VariableSchema {
    pub fn new(name: impl Into<String>, variables: Vec<VariableInfo>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for v in &variables {
            if !seen.insert(v.id.as_str()) {
                return Err(DatasetError::DuplicateVariable(v.id.clone()));
            }
        }
        Ok(Self { name: name.into(), variables })
    }

    /// The 52-variable Tennessee Eastman schema: XMV.1–11, XMEAS.1–22
    /// (continuous) and XMEAS.23–41 (sampled analysers).
    pub fn tep52() -> Self {
        Self::from_json(TEP52_JSON).expect("bundled tep52 schema is valid")
    }

    /// Schema of bare variables, e.g. for synthetic fixtures.
    pub fn generic<S: AsRef<str>>(name: &str, ids: &[S]) -> Result<Self, DatasetError> {
        Self::new(name, ids.iter().map(|s| VariableInfo::bare(s.as_ref())).collect())
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let raw: VariableSchema = serde_json::from_str(text).map_err(|e| DatasetError::Schema(e.to_string()))?;
        Self::new(raw.name, raw.variables)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Resolves a schema by name (`tep52`) or by path to a JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self, DatasetError> {
        match name_or_path {
            "tep52" | "tep52.schema.json" => Ok(Self::tep52()),
            other => Self::load(Path::new(other)),
        }
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.id.as_str()).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tep52_counts() {
        let s = VariableSchema::tep52();
        assert_eq!(s.len(), 52);
        let count = |k| s.variables.iter().filter(|v| v.kind == k).count();
        assert_eq!(count(VariableKind::Manipulated), 11);
        assert_eq!(count(VariableKind::ContinuousMeasurement), 22);
        assert_eq!(count(VariableKind::SampledMeasurement), 19);
    }

    #[test]
    fn tep52_known_entries() {
        let s = VariableSchema::tep52();
        let v = &s.variables[s.position("XMV.11").unwrap()];
        assert_eq!(v.description, "Condenser cooling water flow");
        let v = &s.variables[s.position("XMEAS.17").unwrap()];
        assert_eq!(v.description, "Stripper underflow (stream 11)");
        assert_eq!(v.units, "m3/h");
        assert_eq!(s.variables.last().unwrap().id, "XMEAS.41");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = VariableSchema::generic("x", &["a", "b", "a"]).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateVariable(id) if id == "a"));
    }
}
