//! Binary model files: the 4-byte magic `DFM1`, a little-endian `u16`
//! format version, then the model as CBOR.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Hyperparameters, ModelKind, ModelParams, TrainedModel};
use crate::dataset::ClassId;

pub const MODEL_MAGIC: &[u8; 4] = b"DFM1";
pub const MODEL_FORMAT_VERSION: u16 = 1;

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), ClassifierError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    ciborium::into_writer(model, &mut w).map_err(|e| ClassifierError::Format(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ClassifierError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 6];
    r.read_exact(&mut head).map_err(|_| ClassifierError::Format("truncated header".into()))?;
    if &head[..4] != MODEL_MAGIC {
        return Err(ClassifierError::Format("not a model file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != MODEL_FORMAT_VERSION {
        return Err(ClassifierError::Format(format!("unsupported format version {version}")));
    }
    ciborium::from_reader(r).map_err(|e| ClassifierError::Format(e.to_string()))
}

/// Human-readable description of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
    pub classes: Vec<ClassId>,
    pub variables: Vec<String>,
    pub shapes: BTreeMap<String, Vec<usize>>,
}

pub fn model_summary(model: &TrainedModel) -> ModelSummary {
    let mut shapes = BTreeMap::new();
    match &model.params {
        ModelParams::Knn(m) => {
            shapes.insert("train_x".into(), m.train_x.shape().to_vec());
        }
        ModelParams::Mlp(m) => {
            for (i, l) in m.layers.iter().enumerate() {
                shapes.insert(format!("layer{i}.weights"), l.weights.shape().to_vec());
                shapes.insert(format!("layer{i}.bias"), vec![l.bias.len()]);
            }
        }
        ModelParams::Gbt(m) => {
            let total: usize = m.rounds.iter().flatten().map(|t| t.nodes.len()).sum();
            shapes.insert("trees".into(), vec![m.rounds.len(), m.n_classes]);
            shapes.insert("nodes".into(), vec![total]);
        }
    }
    ModelSummary {
        kind: model.spec.kind,
        seed: model.spec.seed,
        hyperparameters: model.spec.hyperparameters.clone(),
        classes: model.classes.clone(),
        variables: model.variables.clone(),
        shapes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{fit, ModelSpec};
    use crate::dataset::Dataset;
    use ndarray::Array2;

    fn toy() -> Dataset {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| (i * (j + 1)) as f64 * 0.1);
        let y = (0..30).map(|i| ClassId((i % 3) as u8)).collect();
        Dataset::from_parts(&["a", "b"], x, y).unwrap()
    }

    #[test]
    fn round_trip_all_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy();
        for kind in ModelKind::ALL {
            let spec = ModelSpec::with_defaults(kind, 2).set(
                match kind {
                    ModelKind::Knn => "k",
                    ModelKind::Mlp => "max_epochs",
                    ModelKind::Gbt => "n_estimators",
                },
                3i64,
            );
            let m = fit(&spec, &ds).unwrap();
            let p = dir.path().join(format!("{kind}.dfm"));
            save_model(&m, &p).unwrap();
            let bytes = std::fs::read(&p).unwrap();
            assert_eq!(&bytes[..4], b"DFM1");
            let back = load_model(&p).unwrap();
            assert_eq!(back, m);
            let s = model_summary(&back);
            assert_eq!(s.kind, kind);
            serde_json::to_string(&s).unwrap();
        }
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"NOPE\x01\x00").unwrap();
        assert!(matches!(load_model(&p), Err(ClassifierError::Format(_))));
    }
}
