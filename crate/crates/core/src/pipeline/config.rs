use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::attribution::CoalitionBudget;
use crate::causal::{Algorithm, ConstraintConfig, LingamConfig, NotearsConfig, SuiteConfig};
use crate::classifiers::{HyperValue, Hyperparameters, ModelKind, Objective};
use crate::resampling::ResampleSettings;
use crate::synth::TepLikeConfig;

use super::PipelineError;

fn default_seed() -> u64 {
    42
}

/// Everything a pipeline run needs. Parsed from TOML; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub resample: ResampleSettings,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub shap: ShapConfig,
    #[serde(default = "default_subsets")]
    pub subsets: Vec<usize>,
    #[serde(default)]
    pub causal: CausalSettings,
}

pub(crate) const DEFAULT_OUTPUT: &str = "dagfault-out";

/// Largest SHAP background set; masking cost grows linearly with it.
pub const MAX_BACKGROUND: usize = 200;

fn default_output() -> PathBuf {
    PathBuf::from(DEFAULT_OUTPUT)
}

fn default_subsets() -> Vec<usize> {
    vec![7, 10, 12, 15]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV file (optionally gzip). Mutually exclusive with `synthetic`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// `tep52`, a schema JSON path, or `header` to take variables from the
    /// CSV header.
    #[serde(default = "default_schema")]
    pub schema: String,
    #[serde(default = "default_label")]
    pub label_column: String,
    /// Collapse all faults into one class.
    #[serde(default)]
    pub binary: bool,
    /// Generate a TEP-like dataset instead of reading a file.
    #[serde(default)]
    pub synthetic: Option<TepLikeConfig>,
}

fn default_schema() -> String {
    "tep52".into()
}

fn default_label() -> String {
    "fault".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub folds: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { test_fraction: 0.2, folds: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HyperSource {
    /// Published presets for the nearest subset size.
    #[default]
    Preset,
    /// Library defaults.
    Defaults,
    /// Random search on the training partition.
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub source: HyperSource,
    /// Applied on top of whatever `source` yields.
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub search: Option<SearchConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub grid: BTreeMap<String, Vec<HyperValue>>,
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default)]
    pub objective: Objective,
}

fn default_n_iter() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapConfig {
    /// Model whose attributions drive the ranking; the first configured
    /// model when absent.
    pub model: Option<ModelKind>,
    /// Background rows, drawn stratified from the training partition.
    pub background: usize,
    /// Test rows explained.
    pub explain: usize,
    pub budget: CoalitionBudget,
}

impl Default for ShapConfig {
    fn default() -> Self {
        // kernel SHAP cost is explain x samples x background model calls
        Self {
            model: None,
            background: 50,
            explain: 100,
            budget: CoalitionBudget { samples: 512, ..Default::default() },
        }
    }
}

/// Variable subset fed to the causal stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetChoice {
    Top(usize),
    All,
}

impl fmt::Display for SubsetChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetChoice::Top(m) => write!(f, "{m}"),
            SubsetChoice::All => f.write_str("all"),
        }
    }
}

impl Serialize for SubsetChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SubsetChoice::Top(m) => s.serialize_u64(*m as u64),
            SubsetChoice::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for SubsetChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(m) => Ok(SubsetChoice::Top(m as usize)),
            Raw::Text(t) if t == "all" => Ok(SubsetChoice::All),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a subset size or \"all\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalSettings {
    pub subset: SubsetChoice,
    pub algorithms: Vec<Algorithm>,
    pub alpha: f64,
    pub max_cond: usize,
    pub lambda1: f64,
    pub lingam: LingamConfig,
    pub notears: NotearsConfig,
    /// Indicator column is 1 for this fault only; any fault when absent.
    pub fault: Option<u8>,
    /// Also run RFCI on every variable plus the indicator.
    pub full_rfci: bool,
    /// Consensus threshold, capped at the number of successful graphs.
    pub min_count: usize,
    /// Stratified row cap for the causal stage; 0 keeps every row.
    pub max_rows: usize,
}

impl Default for CausalSettings {
    fn default() -> Self {
        Self {
            subset: SubsetChoice::Top(10),
            algorithms: Algorithm::ALL.to_vec(),
            alpha: 0.05,
            max_cond: 3,
            lambda1: 0.05,
            lingam: LingamConfig::default(),
            notears: NotearsConfig::default(),
            fault: None,
            full_rfci: false,
            min_count: 3,
            max_rows: 0,
        }
    }
}

impl CausalSettings {
    pub fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            algorithms: self.algorithms.clone(),
            constraint: ConstraintConfig { alpha: self.alpha, max_cond: self.max_cond },
            lingam: self.lingam,
            notears: self.notears,
            lambda1: self.lambda1,
            standardize: true,
        }
    }
}

impl PipelineConfig {
    /// Parses TOML. Errors carry the line and column of the offending key.
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the config embedded in a run manifest when
    /// the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: super::Manifest = serde_json::from_str(&text)
                .map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", path.display())))?;
            m.config.validate()?;
            return Ok(m.config);
        }
        Self::from_toml(&text).map_err(|e| match e {
            PipelineError::ConfigInvalid(msg) => PipelineError::ConfigInvalid(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::ConfigInvalid(m));
        match (&self.data.path, &self.data.synthetic) {
            (None, None) => return bad("data: set either `path` or `synthetic`".into()),
            (Some(_), Some(_)) => return bad("data: `path` and `synthetic` are mutually exclusive".into()),
            _ => {}
        }
        if self.models.is_empty() {
            return bad("models: at least one model is required".into());
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.source == HyperSource::Search && m.search.is_none() {
                return bad(format!("models[{i}]: source = \"search\" needs a [models.search] table"));
            }
        }
        if let Some(k) = self.shap.model {
            if !self.models.iter().any(|m| m.kind == k) {
                return bad(format!("shap.model = {k:?} is not among the configured models"));
            }
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return bad(format!("split.test_fraction = {} not in (0, 1)", self.split.test_fraction));
        }
        if self.split.folds < 2 {
            return bad(format!("split.folds = {} (need at least 2)", self.split.folds));
        }
        if self.subsets.contains(&0) {
            return bad("subsets: sizes must be positive".into());
        }
        if let SubsetChoice::Top(m) = self.causal.subset {
            if !self.subsets.contains(&m) {
                return bad(format!("causal.subset = {m} is not listed in subsets {:?}", self.subsets));
            }
        }
        if self.causal.algorithms.is_empty() && !self.causal.full_rfci {
            return bad("causal.algorithms is empty".into());
        }
        if self.causal.min_count == 0 {
            return bad("causal.min_count must be at least 1".into());
        }
        if !(self.causal.alpha > 0.0 && self.causal.alpha < 1.0) {
            return bad(format!("causal.alpha = {} not in (0, 1)", self.causal.alpha));
        }
        if self.shap.background == 0 || self.shap.explain == 0 {
            return bad("shap.background and shap.explain must be positive".into());
        }
        if self.shap.background > MAX_BACKGROUND {
            return bad(format!("shap.background = {} exceeds {MAX_BACKGROUND}", self.shap.background));
        }
        Ok(())
    }

    /// Checks against the loaded data width.
    pub fn validate_width(&self, n_features: usize) -> Result<(), PipelineError> {
        if let Some(&m) = self.subsets.iter().find(|&&m| m > n_features) {
            return Err(PipelineError::ConfigInvalid(format!(
                "subset size {m} exceeds the {n_features} available variables"
            )));
        }
        Ok(())
    }

    /// The model whose SHAP values produce the ranking.
    pub fn shap_model(&self) -> ModelKind {
        self.shap.model.unwrap_or(self.models[0].kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        subsets = [3]
        [data.synthetic]
        n_normal = 60
        [[models]]
        kind = "knn"
        [causal]
        subset = 3
        algorithms = ["pc"]
    "#;

    #[test]
    fn minimal_parses_and_round_trips() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.causal.subset, SubsetChoice::Top(3));
        let again = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml(), cfg.to_toml());
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        let err = PipelineConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("line"), "{err}");
    }

    #[test]
    fn subset_must_be_listed() {
        let text = MINIMAL.replace("subset = 3", "subset = 5");
        assert!(matches!(PipelineConfig::from_toml(&text), Err(PipelineError::ConfigInvalid(_))));
        let all = MINIMAL.replace("subset = 3", "subset = \"all\"");
        assert_eq!(PipelineConfig::from_toml(&all).unwrap().causal.subset, SubsetChoice::All);
    }

    #[test]
    fn background_is_capped() {
        let text = format!("{MINIMAL}\n[shap]\nbackground = 201\n");
        assert!(matches!(PipelineConfig::from_toml(&text), Err(PipelineError::ConfigInvalid(_))));
        let text = format!("{MINIMAL}\n[shap]\nbackground = 200\n");
        assert!(PipelineConfig::from_toml(&text).is_ok());
    }
}
