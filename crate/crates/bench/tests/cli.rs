use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sparsectl_bench::report::{read_table, COLUMNS};

fn sparsectl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsectl")).args(args).current_dir(dir).output().unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(out.stderr.trim_ascii()).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn zero_kappa_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"experiment": "lorenz-identify", "noise_ratios": [0.1], "kappas": [0, 3, 2]}"#).unwrap();
    let out = sparsectl(&["identify", "--config", "c.json", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let v = error_json(&out);
    assert_eq!(v["error"], "invalid_config");
    assert_eq!(v["issues"][0]["key"], "kappas");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn every_bad_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiment": "lorenz-identify", "noise_ratios": [-1.0], "trials": 0, "stlsq_threshold": -0.5}"#;
    fs::write(dir.path().join("c.json"), cfg).unwrap();
    let out = sparsectl(&["identify", "--config", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let keys: Vec<String> = error_json(&out)["issues"].as_array().unwrap().iter().map(|i| i["key"].as_str().unwrap().to_string()).collect();
    for k in ["noise_ratios", "trials", "stlsq_threshold"] {
        assert!(keys.iter().any(|x| x.starts_with(k)), "{k} missing from {keys:?}");
    }
}

#[test]
fn wrong_subcommand_for_experiment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"experiment": "lobes", "noise_ratios": [0.0]}"#).unwrap();
    let out = sparsectl(&["mpc", "--config", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["issues"][0]["key"], "experiment");
}

#[test]
fn identify_writes_report_models_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiment": "lorenz-identify", "noise_ratios": [0.0, 0.1], "methods": ["pimlc", "stlsq"]}"#;
    fs::write(dir.path().join("c.json"), cfg).unwrap();
    let out = sparsectl(&["identify", "--config", "c.json", "--out", "o", "--threads", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_table(&dir.path().join("o/report.csv")).unwrap();
    assert_eq!(header, COLUMNS);
    assert_eq!(rows.len(), 4);
    for row in &rows {
        assert_eq!(row[13], "ok");
        assert!(dir.path().join("o").join(&row[14]).exists());
    }
    // Exact selection recovers every equation from clean data.
    assert_eq!(rows[0][2..7], ["pimlc", "", "0", "0", "3"]);
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/config.json")).unwrap()).unwrap();
    assert_eq!(saved["experiment"], "lorenz-identify");
}

#[test]
fn lobes_with_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparsectl(&["lobes", "--out", "o", "--plot"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_table(&dir.path().join("o/report.csv")).unwrap();
    let b: f64 = rows[0][11].parse().unwrap();
    assert!((b - 3.74).abs() < 0.02, "{b}");
    let svgs: Vec<_> = fs::read_dir(dir.path().join("o/plots")).unwrap().collect();
    assert!(!svgs.is_empty());
}

#[test]
fn plot_names_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("x.csv"), "a,b\n1,2\n").unwrap();
    let out = sparsectl(&["plot", "--input", "x.csv", "--kind", "lobes"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let msg = error_json(&out)["message"].as_str().unwrap().to_string();
    assert!(msg.contains("omega"), "{msg}");
}

#[test]
fn simulate_turning_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparsectl(&["simulate", "--system", "turning", "--omega-rps", "600", "--b-mm", "2", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_table(&dir.path().join("o/trajectory.csv")).unwrap();
    assert_eq!(header, ["t", "y", "ydot", "yddot", "force", "delay"]);
    assert!(rows.len() > 1000);
}
