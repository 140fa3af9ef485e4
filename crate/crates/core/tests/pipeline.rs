use std::path::Path;

use dagfault_core::pipeline::{render_report, run_pipeline, PipelineConfig, PipelineError};

fn config(out: &Path) -> PipelineConfig {
    let text = format!(
        r#"
        seed = 7
        output_dir = "{}"
        subsets = [3, 5]
        [data.synthetic]
        n_normal = 120
        n_per_fault = 30
        faults = [1, 4]
        edge_prob = 0.1
        [split]
        folds = 3
        [[models]]
        kind = "knn"
        [shap]
        background = 20
        explain = 15
        [causal]
        subset = 5
        algorithms = ["pc", "rfci", "lingam"]
        min_count = 2
        "#,
        out.display()
    );
    PipelineConfig::from_toml(&text).unwrap()
}

fn json_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "json") {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synthetic_run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_pipeline(&config(tmp.path())).unwrap();
    for a in &out.manifest.artifacts {
        assert!(tmp.path().join(a).is_file(), "missing {a}");
    }
    for a in ["report.json", "ranking.json", "ranking.svg", "shap_values.csv", "graphs/pc.dot", "consensus.json"] {
        assert!(out.manifest.artifacts.iter().any(|x| x == a), "{a} not listed");
    }
    assert!(tmp.path().join("manifest.json").is_file());
    assert!(tmp.path().join("timings.txt").is_file());
    assert_eq!(out.bundle.subsets.len(), 2);
    assert_eq!(out.bundle.causal.variables.len(), 5);
    assert_eq!(out.bundle.ranking.entries.len(), 52);
    let g = out.bundle.causal.graphs[0].graph.as_ref().unwrap();
    assert_eq!(g.vertices().last().unwrap(), "Fault");
}

#[test]
fn same_seed_gives_identical_json() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&config(a.path())).unwrap();
    run_pipeline(&config(b.path())).unwrap();
    let (ja, jb) = (json_files(a.path()), json_files(b.path()));
    assert!(!ja.is_empty());
    assert_eq!(ja, jb);
}

#[test]
fn render_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    run_pipeline(&config(tmp.path())).unwrap();
    let before = json_files(tmp.path());
    let svg = std::fs::read(tmp.path().join("ranking.svg")).unwrap();
    std::fs::remove_file(tmp.path().join("ranking.svg")).unwrap();
    render_report(tmp.path()).unwrap();
    let after = json_files(tmp.path());
    assert_eq!(after.len(), before.len());
    for ((name, a), (_, b)) in after.iter().zip(&before) {
        assert!(a == b, "{name} changed:\n{}\n---\n{}", String::from_utf8_lossy(b), String::from_utf8_lossy(a));
    }
    assert_eq!(std::fs::read(tmp.path().join("ranking.svg")).unwrap(), svg);
}

#[test]
fn oversized_subset_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.subsets.push(60);
    assert!(matches!(run_pipeline(&cfg), Err(PipelineError::ConfigInvalid(_))));
}

#[test]
fn missing_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.data.synthetic = None;
    cfg.data.path = Some(tmp.path().join("nope.csv"));
    match run_pipeline(&cfg) {
        Err(err) => assert_eq!(err.exit_code(), 3, "{err}"),
        Ok(_) => panic!("run succeeded without data"),
    }
}
