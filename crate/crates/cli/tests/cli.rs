use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_logderiv"))
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string(body).unwrap()).unwrap();
    path
}

fn solve_config() -> Value {
    serde_json::json!({
        "schema": 1,
        "experiment": "solve",
        "parameters": {
            "problem": {
                "lagrangian": { "name": "free" },
                "f0": { "kind": "gaussian", "sigma": 0.5 },
                "t_final": 0.5
            },
            "method": "exact-gaussian",
            "mode": "euclidean",
            "n_steps": 8,
            "points": [[0.0], [0.5]]
        }
    })
}

#[test]
fn missing_required_field_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = solve_config();
    cfg["parameters"]["problem"]
        .as_object_mut()
        .unwrap()
        .remove("t_final");
    let path = write_config(dir.path(), &cfg);
    let out_dir = dir.path().join("out");
    let out = run(&path, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_final"));
    assert!(!out_dir.exists());
}

#[test]
fn invalid_values_and_unknown_fields_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut unknown = solve_config();
    unknown["parameters"]["n_stpes"] = 8.into();
    let mut negative = solve_config();
    negative["parameters"]["problem"]["t_final"] = (-1.0).into();
    let mut wrong_schema = solve_config();
    wrong_schema["schema"] = 99.into();
    for cfg in [unknown, negative, wrong_schema] {
        let path = write_config(dir.path(), &cfg);
        let out_dir = dir.path().join("out");
        assert_eq!(run(&path, &out_dir, &[]).status.code(), Some(2), "{cfg}");
        assert!(!out_dir.exists());
    }
}

#[test]
fn solve_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &solve_config());
    let out = run(&path, dir.path(), &["--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("solve.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("q0,q1,value_re,value_im,error_estimate"));
    assert_eq!(csv.lines().count(), 3);
    let record: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("solve.json")).unwrap()).unwrap();
    assert_eq!(record["seed"], 5);
    assert_eq!(record["passed"], true);
    assert_eq!(record["rows"].as_array().unwrap().len(), 2);
    assert!(record["versions"]["logderiv"].is_string());
}

#[test]
fn set_overrides_nested_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &solve_config());
    let out = run(&path, dir.path(), &["--set", "parameters.points.1.0=2.0"]);
    assert_eq!(out.status.code(), Some(0));
    let record: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("solve.json")).unwrap()).unwrap();
    assert_eq!(record["rows"][1]["q0"], 2.0);
    let bad = run(&path, dir.path(), &["--set", "parameters.n_steps"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &repo("configs/oscillatory-check.json"),
        dir.path(),
        &["--set", "parameters.tolerance=0"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    assert!(dir.path().join("oscillatory-check.csv").exists());
}

#[test]
fn list_builtins_is_stable_and_complete() {
    let a = bin().arg("list-builtins").output().unwrap();
    let b = bin().arg("list-builtins").output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    for name in ["free", "harmonic", "quartic", "scaling", "rotation", "wiener", "anomaly-scan"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn shipped_csv_schema_matches_binary() {
    let out = bin().args(["list-builtins", "--json"]).output().unwrap();
    let all: Value = serde_json::from_slice(&out.stdout).unwrap();
    let shipped: Value =
        serde_json::from_str(&std::fs::read_to_string(repo("docs/csv-columns.json")).unwrap()).unwrap();
    assert_eq!(all["csv_columns"], shipped);
    assert_eq!(
        all["experiments"].as_array().unwrap().len(),
        shipped.as_object().unwrap().len()
    );
}

#[test]
fn every_shipped_config_checks_its_schema() {
    for entry in std::fs::read_dir(repo("configs")).unwrap() {
        let path = entry.unwrap().path();
        let dir = tempfile::tempdir().unwrap();
        let out = run(&path, dir.path(), &["--set", "schema=0"]);
        assert_eq!(out.status.code(), Some(2), "{}", path.display());
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("schema"), "{}: {err}", path.display());
    }
}
