//! The end-to-end workflow: baseline classifiers, SHAP ranking, subset
//! sweep, causal discovery on the chosen subset, and consensus.
//!
//! Every JSON artifact is a pure function of the config, so two runs with
//! the same config and seed write byte-identical JSON. Wall-clock timings
//! go to `timings.txt` only.

mod config;
mod export;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{background_sample, explain_model, rank_features, select_top, Ranking, ShapMatrix};
use crate::causal::{rfci, run_suite, standardize, ConstraintConfig, MixedGraph};
use crate::classifiers::{self, preset, random_search, ModelKind, ModelSpec, SearchSpace};
use crate::consensus::{consensus_graph, degree_centrality, skeleton_agreement, Centrality, EdgeFrequencyTable};
use crate::dataset::{load_csv, stratified_sample, stratified_split, ClassId, Dataset, VariableSchema};
use crate::evaluation::{cross_validate, evaluate, Averaging, MetricSet, MetricSummary};
use crate::resampling::rebalance;
use crate::rng::derive_seed;
use crate::synth::tep_like;

pub use config::{
    CausalSettings, DataConfig, HyperSource, ModelConfig, PipelineConfig, SearchConfig, ShapConfig, SplitConfig,
    SubsetChoice, MAX_BACKGROUND,
};
pub use export::{export_dot, export_report, render_report, write_json};

/// Name of the indicator vertex appended to the causal variables.
pub const FAULT_VERTEX: &str = "Fault";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Baseline,
    Shap,
    Sweep,
    Causal,
    Consensus,
    Export,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        f.write_str(s.as_str().unwrap())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("stage {stage} failed: {cause}")]
    StageFailed { stage: Stage, cause: String },
}

impl PipelineError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::ConfigInvalid(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::StageFailed { .. } => 4,
        }
    }
}

fn fail<E: std::fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::StageFailed { stage, cause: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub class_counts: BTreeMap<ClassId, usize>,
    pub dropped_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub best_score: f64,
    pub trials: usize,
    pub failed: usize,
}

/// One model evaluated on one variable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model: ModelKind,
    pub n_vars: usize,
    pub variables: Vec<String>,
    pub spec: ModelSpec,
    /// Preset size used when hyperparameters came from a preset table.
    pub preset_n_vars: Option<usize>,
    pub search: Option<SearchSummary>,
    /// Cross-validation on the training partition.
    pub cv: MetricSummary,
    /// Fit on the rebalanced training partition, scored on the test split.
    pub holdout: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRun {
    pub size: usize,
    pub features: Vec<String>,
    pub models: Vec<ModelRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub algorithm: String,
    pub error: Option<String>,
    pub ci_calls: Option<usize>,
    pub notes: Vec<String>,
    pub graph: Option<MixedGraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalReport {
    pub subset: SubsetChoice,
    pub variables: Vec<String>,
    pub n_rows: usize,
    pub graphs: Vec<GraphRecord>,
    pub full_rfci: Option<GraphRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub min_count: usize,
    pub table: EdgeFrequencyTable,
    pub centrality: Vec<Centrality>,
    pub graph: MixedGraph,
}

/// Everything a run produces, as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub dataset: DatasetSummary,
    pub baseline: Vec<ModelRun>,
    pub shap_model: ModelKind,
    pub shap_exact: bool,
    pub ranking: Ranking,
    pub subsets: Vec<SubsetRun>,
    pub causal: CausalReport,
    pub consensus: Option<ConsensusReport>,
}

impl ReportBundle {
    /// Every metric summary: baselines first, then subsets in order.
    pub fn summaries(&self) -> Vec<(String, &MetricSummary)> {
        let mut out: Vec<(String, &MetricSummary)> =
            self.baseline.iter().map(|r| (format!("{} all({})", r.model, r.n_vars), &r.cv)).collect();
        for s in &self.subsets {
            out.extend(s.models.iter().map(|r| (format!("{} top{}", r.model, s.size), &r.cv)));
        }
        out
    }
}

/// Enough to reproduce a run: the full config (seed included) and the
/// derived stage seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<String>,
}

/// Wall-clock time per stage.
#[derive(Debug, Clone, Default)]
pub struct Timings(pub Vec<(String, Duration)>);

impl Timings {
    fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push((label.to_string(), start.elapsed()));
        log::info!("{label}: {:.2?}", start.elapsed());
        out
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(l, d)| format!("{l}\t{:.3}s\n", d.as_secs_f64())).collect()
    }
}

/// Seeds for each stage, all derived from the config seed.
struct Seeds {
    root: u64,
}

impl Seeds {
    fn split(&self) -> u64 {
        derive_seed(self.root, &[1])
    }
    fn folds(&self) -> u64 {
        derive_seed(self.root, &[2])
    }
    fn model(&self, idx: usize) -> u64 {
        derive_seed(self.root, &[3, idx as u64])
    }
    fn search(&self, idx: usize, n_vars: usize) -> u64 {
        derive_seed(self.root, &[4, idx as u64, n_vars as u64])
    }
    fn shap(&self, part: u64) -> u64 {
        derive_seed(self.root, &[5, part])
    }
    fn causal(&self, part: u64) -> u64 {
        derive_seed(self.root, &[6, part])
    }
    fn holdout(&self, idx: usize, n_vars: usize) -> u64 {
        derive_seed(self.root, &[7, idx as u64, n_vars as u64])
    }

    fn table(&self) -> BTreeMap<String, u64> {
        [
            ("root", self.root),
            ("split", self.split()),
            ("folds", self.folds()),
            ("shap_background", self.shap(0)),
            ("shap_explain", self.shap(1)),
            ("shap_coalitions", self.shap(2)),
            ("causal_rows", self.causal(0)),
            ("causal_algorithms", self.causal(1)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Loaded data split into train and test partitions.
pub struct Prepared {
    pub full: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub summary: DatasetSummary,
}

fn header_schema(path: &Path, label: &str) -> Result<VariableSchema, PipelineError> {
    let data_err = |e: &dyn std::fmt::Display| PipelineError::Data(format!("{}: {e}", path.display()));
    let file = std::fs::File::open(path).map_err(|e| data_err(&e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| data_err(&e))?;
    let ids: Vec<&str> = headers.iter().filter(|h| *h != label).collect();
    VariableSchema::generic("header", &ids).map_err(|e| data_err(&e))
}

/// Loads (or generates) the data and makes the stratified train/test split.
pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared, PipelineError> {
    let seeds = Seeds { root: cfg.seed };
    let (mut ds, source, dropped) = match (&cfg.data.path, &cfg.data.synthetic) {
        (Some(path), _) => {
            let schema = if cfg.data.schema == "header" {
                header_schema(path, &cfg.data.label_column)?
            } else {
                VariableSchema::resolve(&cfg.data.schema).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?
            };
            let loaded = load_csv(path, &schema, &cfg.data.label_column)
                .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
            if loaded.dropped_rows > 0 {
                log::warn!("dropped {} rows with unparseable or non-finite cells", loaded.dropped_rows);
            }
            (loaded.dataset, path.display().to_string(), loaded.dropped_rows)
        }
        (None, Some(syn)) => {
            let ds = tep_like(syn, cfg.seed).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
            (ds, "synthetic:tep_like".to_string(), 0)
        }
        (None, None) => return Err(PipelineError::ConfigInvalid("no data source".into())),
    };
    if cfg.data.binary {
        ds = ds.binary_labels();
    }
    cfg.validate_width(ds.n_features())?;
    if ds.classes().len() < 2 {
        return Err(PipelineError::Data("need at least two classes".into()));
    }
    let (train, test) = stratified_split(&ds, cfg.split.test_fraction, seeds.split())
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    let summary = DatasetSummary {
        source,
        n_samples: ds.n_samples(),
        n_features: ds.n_features(),
        class_counts: ds.class_counts(),
        dropped_rows: dropped,
        n_train: train.n_samples(),
        n_test: test.n_samples(),
    };
    Ok(Prepared { full: ds, train, test, summary })
}

fn resolve_spec(
    cfg: &PipelineConfig,
    idx: usize,
    train: &Dataset,
    stage: Stage,
) -> Result<(ModelSpec, Option<usize>, Option<SearchSummary>), PipelineError> {
    let seeds = Seeds { root: cfg.seed };
    let mc = &cfg.models[idx];
    let n_vars = train.n_features();
    let (mut hp, used, search) = match mc.source {
        HyperSource::Defaults => (Default::default(), None, None),
        HyperSource::Preset => {
            let (hp, used) = preset(mc.kind, n_vars).map_err(fail(stage))?;
            (hp, Some(used), None)
        }
        HyperSource::Search => {
            let sc = mc.search.as_ref().expect("validated");
            let space =
                SearchSpace { kind: mc.kind, grid: sc.grid.clone(), n_iter: sc.n_iter, objective: sc.objective };
            let out = random_search(&space, train, cfg.split.folds, seeds.search(idx, n_vars), &cfg.resample)
                .map_err(fail(stage))?;
            let failed = out.trials.iter().filter(|t| t.error.is_some()).count();
            let summary = SearchSummary { best_score: out.best_score, trials: out.trials.len(), failed };
            (out.best.hyperparameters, None, Some(summary))
        }
    };
    hp.extend(mc.hyperparameters.clone());
    let spec = ModelSpec::new(mc.kind, hp, seeds.model(idx));
    spec.validate().map_err(|e| PipelineError::ConfigInvalid(format!("models[{idx}]: {e}")))?;
    Ok((spec, used, search))
}

fn fit_rebalanced(
    cfg: &PipelineConfig,
    spec: &ModelSpec,
    train: &Dataset,
    seed: u64,
) -> Result<classifiers::TrainedModel, String> {
    let plan = cfg.resample.plan_for(train, seed);
    let balanced = rebalance(train, &plan).map_err(|e| e.to_string())?;
    classifiers::fit(spec, &balanced.dataset).map_err(|e| e.to_string())
}

fn model_run(
    cfg: &PipelineConfig,
    idx: usize,
    train: &Dataset,
    test: &Dataset,
    stage: Stage,
) -> Result<ModelRun, PipelineError> {
    let seeds = Seeds { root: cfg.seed };
    let (spec, preset_n_vars, search) = resolve_spec(cfg, idx, train, stage)?;
    let n_vars = train.n_features();
    log::info!("{stage}: {} on {n_vars} variables", spec.kind);
    let cv = cross_validate(&spec, train, cfg.split.folds, &cfg.resample, seeds.folds(), Averaging::Auto)
        .map_err(fail(stage))?;
    let model = fit_rebalanced(cfg, &spec, train, seeds.holdout(idx, n_vars)).map_err(fail(stage))?;
    let holdout = evaluate(&model, test, Averaging::Auto).map_err(fail(stage))?.metrics;
    Ok(ModelRun {
        model: spec.kind,
        n_vars,
        variables: train.variable_ids(),
        spec,
        preset_n_vars,
        search,
        cv: cv.summary,
        holdout,
    })
}

/// Fits the explaining model on all variables and ranks them by mean |SHAP|.
pub fn shap_ranking(cfg: &PipelineConfig, prep: &Prepared) -> Result<(ShapMatrix, Ranking), PipelineError> {
    let seeds = Seeds { root: cfg.seed };
    let kind = cfg.shap_model();
    let idx = cfg.models.iter().position(|m| m.kind == kind).expect("validated");
    let (spec, _, _) = resolve_spec(cfg, idx, &prep.train, Stage::Shap)?;
    let model = fit_rebalanced(cfg, &spec, &prep.train, seeds.shap(3)).map_err(fail(Stage::Shap))?;
    let background = background_sample(&prep.train, cfg.shap.background, seeds.shap(0));
    let rows = stratified_sample(&prep.test, cfg.shap.explain, seeds.shap(1));
    let sample = prep.test.select_rows(&rows);
    let sm = explain_model(&model, &sample, &background, &cfg.shap.budget, seeds.shap(2)).map_err(fail(Stage::Shap))?;
    let ranking = rank_features(&sm);
    Ok((sm, ranking))
}

/// Selected variables plus the fault indicator, rows capped per config.
pub fn causal_matrix(
    cfg: &PipelineConfig,
    ds: &Dataset,
    variables: &[String],
) -> Result<(Array2<f64>, Vec<String>), PipelineError> {
    let seeds = Seeds { root: cfg.seed };
    let ds = if cfg.causal.max_rows > 0 && cfg.causal.max_rows < ds.n_samples() {
        ds.select_rows(&stratified_sample(ds, cfg.causal.max_rows, seeds.causal(0)))
    } else {
        ds.clone()
    };
    let sub = ds.select_variables(variables).map_err(fail(Stage::Causal))?;
    let indicator = ndarray::Array1::from(ds.fault_indicator(cfg.causal.fault.map(ClassId)));
    let data =
        concatenate(Axis(1), &[sub.values(), indicator.view().insert_axis(Axis(1))]).map_err(fail(Stage::Causal))?;
    let mut names = variables.to_vec();
    names.push(FAULT_VERTEX.to_string());
    Ok((data, names))
}

/// Runs the causal suite (and optionally full-variable RFCI) on the chosen
/// variables of `ds`. Individual algorithm failures are recorded.
pub fn causal_stage(cfg: &PipelineConfig, ds: &Dataset, ranking: &Ranking) -> Result<CausalReport, PipelineError> {
    let seeds = Seeds { root: cfg.seed };
    let variables = match cfg.causal.subset {
        SubsetChoice::Top(m) => select_top(ranking, m).map_err(fail(Stage::Causal))?,
        SubsetChoice::All => ds.variable_ids(),
    };
    let (data, names) = causal_matrix(cfg, ds, &variables)?;
    let runs = run_suite(data.view(), &names, &cfg.causal.suite(), seeds.causal(1));
    let graphs = runs
        .into_iter()
        .map(|r| {
            let (graph, error) = match r.result {
                Ok(g) => (Some(g), None),
                Err(e) => (None, Some(e)),
            };
            GraphRecord { algorithm: r.algorithm.to_string(), error, ci_calls: r.ci_calls, notes: r.notes, graph }
        })
        .collect();
    let full_rfci = if cfg.causal.full_rfci {
        let (data, names) = causal_matrix(cfg, ds, &ds.variable_ids())?;
        let constraint = ConstraintConfig { alpha: cfg.causal.alpha, max_cond: cfg.causal.max_cond };
        let rec = match rfci(standardize(data.view()).view(), &names, &constraint) {
            Ok(out) => GraphRecord {
                algorithm: "rfci_full".into(),
                error: None,
                ci_calls: Some(out.ci_calls),
                notes: Vec::new(),
                graph: Some(out.graph),
            },
            Err(e) => {
                log::warn!("full-variable rfci failed: {e}");
                GraphRecord {
                    algorithm: "rfci_full".into(),
                    error: Some(e.to_string()),
                    ci_calls: None,
                    notes: Vec::new(),
                    graph: None,
                }
            }
        };
        Some(rec)
    } else {
        None
    };
    Ok(CausalReport { subset: cfg.causal.subset, variables, n_rows: data.nrows(), graphs, full_rfci })
}

/// Edge agreement across the successful graphs of `causal`.
pub fn consensus_stage(cfg: &PipelineConfig, causal: &CausalReport) -> Result<Option<ConsensusReport>, PipelineError> {
    let graphs: Vec<(String, MixedGraph)> =
        causal.graphs.iter().filter_map(|r| r.graph.clone().map(|g| (r.algorithm.clone(), g))).collect();
    if graphs.is_empty() {
        log::warn!("no causal graph succeeded; consensus skipped");
        return Ok(None);
    }
    let table = skeleton_agreement(&graphs).map_err(fail(Stage::Consensus))?;
    let min_count = cfg.causal.min_count.min(graphs.len());
    let graph = consensus_graph(&table, min_count);
    let centrality = degree_centrality(&table);
    Ok(Some(ConsensusReport { min_count, table, centrality, graph }))
}

/// Result of [`run_pipeline`].
pub struct RunOutput {
    pub bundle: ReportBundle,
    pub manifest: Manifest,
    pub timings: Timings,
    pub shap: ShapMatrix,
}

/// Runs all stages and writes every artifact under `cfg.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let prep = timings.time("load", || prepare(cfg))?;

    let baseline = timings.time("baseline", || {
        (0..cfg.models.len())
            .map(|i| model_run(cfg, i, &prep.train, &prep.test, Stage::Baseline))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let (shap, ranking) = timings.time("shap", || shap_ranking(cfg, &prep))?;

    let subsets = timings.time("sweep", || {
        cfg.subsets
            .iter()
            .map(|&m| {
                let features = select_top(&ranking, m).map_err(fail(Stage::Sweep))?;
                let train = prep.train.select_variables(&features).map_err(fail(Stage::Sweep))?;
                let test = prep.test.select_variables(&features).map_err(fail(Stage::Sweep))?;
                let models = (0..cfg.models.len())
                    .map(|i| model_run(cfg, i, &train, &test, Stage::Sweep))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SubsetRun { size: m, features, models })
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    })?;

    let causal = timings.time("causal", || causal_stage(cfg, &prep.full, &ranking))?;
    let consensus = timings.time("consensus", || consensus_stage(cfg, &causal))?;

    let bundle = ReportBundle {
        dataset: prep.summary,
        baseline,
        shap_model: cfg.shap_model(),
        shap_exact: shap.exact,
        ranking,
        subsets,
        causal,
        consensus,
    };
    let manifest = timings.time("export", || export_report(&bundle, Some(&shap), cfg, &cfg.output_dir))?;
    std::fs::write(cfg.output_dir.join("timings.txt"), timings.render()).map_err(fail(Stage::Export))?;
    Ok(RunOutput { bundle, manifest, timings, shap })
}

/// The manifest for a run of `cfg` listing `artifacts`.
///
/// The output directory is not recorded, so runs that differ only in where
/// they write produce identical manifests.
pub fn manifest(cfg: &PipelineConfig, artifacts: Vec<String>) -> Manifest {
    let mut config = cfg.clone();
    config.output_dir = PathBuf::from(config::DEFAULT_OUTPUT);
    Manifest {
        tool: "dagfault".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config,
        seeds: Seeds { root: cfg.seed }.table(),
        artifacts,
    }
}

/// Output directory resolved against an optional override.
pub fn output_dir(cfg: &PipelineConfig, over: Option<&Path>) -> PathBuf {
    over.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone())
}
