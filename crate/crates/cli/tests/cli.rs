use std::path::Path;
use std::process::{Command, Output};

fn dagfault(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dagfault")).args(args).output().unwrap()
}

fn write_config(dir: &Path, data: &str) -> String {
    let text = format!(
        r#"
        seed = 3
        subsets = [4]
        {data}
        [split]
        folds = 3
        [[models]]
        kind = "knn"
        [shap]
        background = 15
        explain = 10
        [causal]
        subset = 4
        algorithms = ["pc", "rfci"]
        min_count = 1
        "#
    );
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SYNTH: &str = "[data.synthetic]\nn_normal = 80\nn_per_fault = 20\nfaults = [1, 6]";

#[test]
fn bad_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.toml");
    std::fs::write(&p, "seed = 1\nnot_a_key = 2\n").unwrap();
    let out = dagfault(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));
}

#[test]
fn missing_data_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.csv");
    let cfg = write_config(tmp.path(), &format!("[data]\npath = {:?}", missing.display().to_string()));
    let out = dagfault(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_then_run_on_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("data.csv");
    let out = dagfault(&["synth", "--out", csv.to_str().unwrap(), "--n-normal", "80", "--n-per-fault", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = write_config(tmp.path(), &format!("[data]\npath = {:?}", csv.display().to_string()));
    let dir = tmp.path().join("run");
    let out = dagfault(&["--threads", "2", "run", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("report.json").is_file());
    assert!(dir.join("consensus.dot").is_file());

    std::fs::remove_file(dir.join("ranking.svg")).unwrap();
    let out = dagfault(&["report", "--dir", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("ranking.svg").is_file());
}

#[test]
fn rank_then_causal_with_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SYNTH);
    let dir = tmp.path().join("rank");
    let out = dagfault(&["rank", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ranking = dir.join("ranking.json");
    assert!(ranking.is_file());

    let cdir = tmp.path().join("causal");
    let out = dagfault(&[
        "causal",
        "--config",
        &cfg,
        "--ranking",
        ranking.to_str().unwrap(),
        "--out",
        cdir.to_str().unwrap(),
        "--subset-size",
        "6",
        "--seed",
        "9",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cdir.join("causal.json")).unwrap()).unwrap();
    assert_eq!(report["variables"].as_array().unwrap().len(), 6);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cdir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 9);
    assert!(cdir.join("graphs/pc.dot").is_file());
}

#[test]
fn manifest_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SYNTH);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(dagfault(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    let m = a.join("manifest.json");
    let out = dagfault(&["run", "--config", m.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "manifest.json", "ranking.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
