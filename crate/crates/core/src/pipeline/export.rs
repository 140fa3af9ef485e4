use std::path::Path;

use serde::Serialize;

use super::{manifest, Manifest, PipelineConfig, PipelineError, ReportBundle, Stage};
use crate::attribution::{ranking_svg, write_shap_csv, ShapMatrix, SVG_TOP};
use crate::causal::MixedGraph;
use crate::evaluation::summary_table;

fn io_err(path: &Path) -> impl Fn(&dyn std::fmt::Display) -> PipelineError + '_ {
    move |e| PipelineError::StageFailed { stage: Stage::Export, cause: format!("{}: {e}", path.display()) }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path)(&e))?;
    text.push('\n');
    write_text(&text, path)
}

fn write_text(text: &str, path: &Path) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent)(&e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path)(&e))
}

pub fn export_dot(g: &MixedGraph, name: &str, path: &Path) -> Result<(), PipelineError> {
    write_text(&g.to_dot(name), path)
}

/// Writes every artifact of `bundle` under `dir` and returns the manifest
/// (also written). `shap` adds the per-row SHAP table when available.
pub fn export_report(
    bundle: &ReportBundle,
    shap: Option<&ShapMatrix>,
    cfg: &PipelineConfig,
    dir: &Path,
) -> Result<Manifest, PipelineError> {
    let mut artifacts: Vec<String> = Vec::new();
    let mut put_json = |rel: &str, value: &dyn erased::Json| -> Result<(), PipelineError> {
        value.write(&dir.join(rel))?;
        artifacts.push(rel.to_string());
        Ok(())
    };

    for r in &bundle.baseline {
        put_json(&format!("metrics/baseline_{}.json", r.model), r)?;
    }
    for s in &bundle.subsets {
        for r in &s.models {
            put_json(&format!("metrics/subset_{}_{}.json", s.size, r.model), r)?;
        }
    }
    put_json("ranking.json", &bundle.ranking)?;
    for rec in bundle.causal.graphs.iter().chain(&bundle.causal.full_rfci) {
        if let Some(g) = &rec.graph {
            put_json(&format!("graphs/{}.json", rec.algorithm), g)?;
        }
    }
    if let Some(c) = &bundle.consensus {
        put_json("consensus.json", c)?;
    }
    put_json("report.json", bundle)?;

    let mut texts: Vec<(String, String)> = vec![
        ("metrics/summary.txt".into(), summary_table(&bundle.summaries())),
        ("ranking.svg".into(), ranking_svg(&bundle.ranking, SVG_TOP)),
    ];
    for rec in bundle.causal.graphs.iter().chain(&bundle.causal.full_rfci) {
        match (&rec.graph, &rec.error) {
            (Some(g), _) => texts.push((format!("graphs/{}.dot", rec.algorithm), g.to_dot(&rec.algorithm))),
            (None, Some(e)) => texts.push((format!("graphs/{}.error.txt", rec.algorithm), format!("{e}\n"))),
            _ => {}
        }
    }
    if let Some(c) = &bundle.consensus {
        texts.push(("consensus.dot".into(), c.graph.to_dot("consensus")));
        texts.push(("consensus_matrix.txt".into(), c.table.to_text_matrix()));
    }
    for (rel, text) in &texts {
        write_text(text, &dir.join(rel))?;
        artifacts.push(rel.clone());
    }
    if let Some(sm) = shap {
        let p = dir.join("shap_values.csv");
        write_shap_csv(sm, &p).map_err(|e| io_err(&p)(&e))?;
        artifacts.push("shap_values.csv".into());
    }
    artifacts.sort();
    let m = manifest(cfg, artifacts);
    write_json(&m, &dir.join("manifest.json"))?;
    Ok(m)
}

/// Re-renders every derived artifact from `report.json` and
/// `manifest.json` in `dir`.
pub fn render_report(dir: &Path) -> Result<Manifest, PipelineError> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))
    };
    let bundle: ReportBundle =
        serde_json::from_str(&read("report.json")?).map_err(|e| PipelineError::Data(format!("report.json: {e}")))?;
    let m: Manifest = serde_json::from_str(&read("manifest.json")?)
        .map_err(|e| PipelineError::Data(format!("manifest.json: {e}")))?;
    let had_shap = m.artifacts.iter().any(|a| a == "shap_values.csv");
    let mut out = export_report(&bundle, None, &m.config, dir)?;
    if had_shap {
        // the table itself is kept as written by the original run
        out.artifacts.push("shap_values.csv".into());
        out.artifacts.sort();
        write_json(&out, &dir.join("manifest.json"))?;
    }
    Ok(out)
}

mod erased {
    use super::*;

    /// Object-safe wrapper so heterogeneous values share one writer.
    pub trait Json {
        fn write(&self, path: &Path) -> Result<(), PipelineError>;
    }

    impl<T: Serialize> Json for T {
        fn write(&self, path: &Path) -> Result<(), PipelineError> {
            write_json(self, path)
        }
    }
}
