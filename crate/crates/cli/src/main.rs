use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dagfault_core::attribution::{write_ranking_json, write_shap_csv, Ranking};
use dagfault_core::dataset::write_csv;
use dagfault_core::pipeline::{
    causal_stage, consensus_stage, export_dot, manifest, output_dir, prepare, render_report, run_pipeline,
    shap_ranking, write_json, PipelineConfig, PipelineError, Stage, SubsetChoice,
};
use dagfault_core::synth::{tep_like, TepLikeConfig};

#[derive(Parser)]
#[command(name = "dagfault", version, about = "Fault detection, SHAP ranking and causal discovery")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Variables handed to causal discovery.
    #[arg(long)]
    subset_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write all artifacts.
    Run(Common),
    /// Baseline SHAP ranking only.
    Rank(Common),
    /// Causal discovery and consensus from a saved ranking.
    Causal {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ranking: PathBuf,
    },
    /// Re-render DOT, SVG and text artifacts from a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Write a synthetic TEP-like CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        n_normal: usize,
        #[arg(long, default_value_t = 50)]
        n_per_fault: usize,
    },
}

fn load(c: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = c.subset_size {
        cfg.causal.subset = SubsetChoice::Top(m);
        if !cfg.subsets.contains(&m) {
            cfg.subsets.push(m);
            cfg.subsets.sort_unstable();
        }
    }
    cfg.output_dir = output_dir(&cfg, c.out.as_deref());
    cfg.validate()?;
    Ok(cfg)
}

fn export_err(path: &Path) -> impl Fn(&dyn std::fmt::Display) -> PipelineError + '_ {
    move |e| PipelineError::StageFailed { stage: Stage::Export, cause: format!("{}: {e}", path.display()) }
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| export_err(dir)(&e))
}

fn rank(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let prep = prepare(cfg)?;
    let (sm, ranking) = shap_ranking(cfg, &prep)?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let p = dir.join("ranking.json");
    write_ranking_json(&ranking, &p).map_err(|e| export_err(&p)(&e))?;
    let p = dir.join("shap_values.csv");
    write_shap_csv(&sm, &p).map_err(|e| export_err(&p)(&e))?;
    for (i, e) in ranking.entries.iter().take(15).enumerate() {
        println!("{:>3}  {:<8} {:.6}", i + 1, e.feature, e.importance);
    }
    Ok(())
}

fn causal(cfg: &PipelineConfig, ranking: &Path) -> Result<(), PipelineError> {
    let text =
        std::fs::read_to_string(ranking).map_err(|e| PipelineError::Data(format!("{}: {e}", ranking.display())))?;
    let ranking: Ranking =
        serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("{}: {e}", ranking.display())))?;
    let prep = prepare(cfg)?;
    let report = causal_stage(cfg, &prep.full, &ranking)?;
    let consensus = consensus_stage(cfg, &report)?;
    let dir = &cfg.output_dir;
    let mut artifacts = Vec::new();
    for rec in report.graphs.iter().chain(&report.full_rfci) {
        match &rec.graph {
            Some(g) => {
                export_dot(g, &rec.algorithm, &dir.join(format!("graphs/{}.dot", rec.algorithm)))?;
                write_json(g, &dir.join(format!("graphs/{}.json", rec.algorithm)))?;
                artifacts.push(format!("graphs/{}.dot", rec.algorithm));
                artifacts.push(format!("graphs/{}.json", rec.algorithm));
                println!("{:<8} {} edges", rec.algorithm, g.n_edges());
            }
            None => println!("{:<8} failed: {}", rec.algorithm, rec.error.as_deref().unwrap_or("unknown")),
        }
    }
    write_json(&report, &dir.join("causal.json"))?;
    artifacts.push("causal.json".into());
    if let Some(c) = &consensus {
        export_dot(&c.graph, "consensus", &dir.join("consensus.dot"))?;
        write_json(c, &dir.join("consensus.json"))?;
        artifacts.extend(["consensus.dot".into(), "consensus.json".into()]);
    }
    artifacts.sort();
    write_json(&manifest(cfg, artifacts), &dir.join("manifest.json"))
}

fn synth(out: &Path, seed: u64, n_normal: usize, n_per_fault: usize) -> Result<(), PipelineError> {
    let cfg = TepLikeConfig { n_normal, n_per_fault, ..Default::default() };
    let ds = tep_like(&cfg, seed).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_csv(&ds, out, "fault").map_err(|e| export_err(out)(&e))?;
    println!("wrote {} rows to {}", ds.n_samples(), out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run(c) => {
            let cfg = load(&c)?;
            let out = run_pipeline(&cfg)?;
            print!("{}", out.timings.render());
            println!("artifacts in {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Rank(c) => rank(&load(&c)?),
        Command::Causal { common, ranking } => causal(&load(&common)?, &ranking),
        Command::Report { dir } => render_report(&dir).map(|m| println!("rendered {} artifacts", m.artifacts.len())),
        Command::Synth { out, seed, n_normal, n_per_fault } => synth(&out, seed, n_normal, n_per_fault),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DAGFAULT_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
