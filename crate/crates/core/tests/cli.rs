use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn eegconn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eegconn")).args(args).output().unwrap()
}

fn error_of(out: &Output) -> Value {
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {line}"))
}

/// A tiny 4-channel cohort config rooted at `dir`.
fn write_config(dir: &Path) -> String {
    let montage = ["Fp1", "Fz", "F7", "F8"];
    let cfg = serde_json::json!({
        "seed": 5,
        "paths": {"manifest": dir.join("cohort/manifest.csv"), "out_dir": dir.join("out")},
        "montage": montage,
        "eval_epochs": 20,
        "selection": {"n_trials": 3, "k": 2, "ks": [1, 2], "gbt": {"trees": 10}},
        "models": [{"kind": "logistic"}],
        "eval": {"n_trials": 3},
        "synth": {
            "n_female": 5,
            "n_male": 5,
            "duration_s": 75.0,
            "montage": montage,
            "plants": [{"pair": ["Fp1", "Fz"], "band": "gamma", "coupling_female": 1.0, "coupling_male": 0.0}],
        },
    });
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.display().to_string()
}

#[test]
fn version_line() {
    let out = eegconn(&["--version"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "eegconn 0.1.0 (artifact format 1)");
}

#[test]
fn usage_errors_exit_2_with_json() {
    let out = eegconn(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["error"], "BadArgs");
}

#[test]
fn missing_config_is_reported() {
    let out = eegconn(&["extract"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["error"], "BadArgs");
}

#[test]
fn config_without_seed_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, "{}").unwrap();
    let out = eegconn(&["extract", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_of(&out);
    assert_eq!(err["error"], "ConfigInvalid");
    assert!(err["message"].as_str().unwrap().contains("seed"));
}

#[test]
fn zero_jobs_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = eegconn(&["synth", "--config", &cfg, "--jobs", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["error"], "BadArgs");
}

#[test]
fn cv_before_select_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert!(eegconn(&["synth", "--config", &cfg]).status.success());
    assert!(eegconn(&["extract", "--config", &cfg]).status.success());
    let out = eegconn(&["cv", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_of(&out)["message"].as_str().unwrap().contains("selected.txt"));
    // the full feature set needs no selection
    let out = eegconn(&["cv", "--config", &cfg, "--all-features"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn extraction_is_repeatable_and_artifacts_carry_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert!(eegconn(&["synth", "--config", &cfg]).status.success());
    let features = dir.path().join("out/features/connectivity_sections.csv");
    assert!(eegconn(&["extract", "--config", &cfg]).status.success());
    let first = std::fs::read(&features).unwrap();
    assert!(eegconn(&["extract", "--config", &cfg, "--jobs", "2"]).status.success());
    assert_eq!(first, std::fs::read(&features).unwrap());

    let out = eegconn(&["select", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let selected = std::fs::read_to_string(dir.path().join("out/selection/selected.txt")).unwrap();
    let mut lines = selected.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap().trim_start_matches("# ")).unwrap();
    assert_eq!(header["params"]["seed"], 5);
    assert_eq!(lines.count(), 2);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert!(eegconn(&["synth", "--config", &cfg]).status.success());
    let a = std::fs::read(dir.path().join("cohort/recordings/sub-001.csv")).unwrap();
    assert!(eegconn(&["synth", "--config", &cfg, "--seed", "6"]).status.success());
    let b = std::fs::read(dir.path().join("cohort/recordings/sub-001.csv")).unwrap();
    assert_ne!(a, b);
}
