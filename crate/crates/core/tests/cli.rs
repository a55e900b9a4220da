use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adhesion_wave::cli::parse_config;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adhesion-wave"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn csv_header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn write_doc(dir: &Path, name: &str, doc: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, doc).unwrap();
    path
}

const SMALL_RUN: &str = r#"{
    "output": { "prefix": "small" },
    "experiment": {
        "kind": "KIND",
        "config": {
            "potential": { "u_star": 1.0, "sigma": 2.0 },
            "grid": { "length": 1.0, "cells": 64 },
            "dt": 0.00390625,
            "t_final": 1.0,
            "initial": {
                "u0": { "kind": "cosine", "amplitude": 0.01, "mode": 1 },
                "v0": { "kind": "constant", "c": 0.0 }
            },
            "snapshot_times": [0.0, 0.5]
        }
    }
}"#;

#[test]
fn shipped_configs_parse() {
    let mut n = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(&path).unwrap();
            parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn potential_table_writes_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--quiet",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "potential",
        "table",
        "--u-star",
        "1",
        "--sigma",
        "2",
        "--from",
        "-2",
        "--to",
        "2",
        "--step",
        "0.5",
        "--out",
        "phi.csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("phi.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "u,phi,dphi");
    assert_eq!(lines.len(), 1 + 9);
    assert_eq!(lines[5], "0.0,0.0,0.0");
}

#[test]
fn potential_table_rejects_degenerate_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "potential", "table", "--u-star", "1", "--sigma", "1", "--from", "0", "--to", "1", "--step",
        "0.1", "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
}

#[test]
fn ode_run_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ode.csv");
    let out = run(&[
        "ode", "run", "--z0", "2", "--w0", "-3", "--sigma", "10", "--t-max", "5", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,z,w,regime");
    assert_eq!(lines[1], "0.0,2.0,-3.0,outer_plus");
    assert_eq!(lines.len(), 1 + 501);
    assert!(text.contains("middle_plus") && text.contains(",inner"));
}

#[test]
fn ode_verify_reports_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&[
        "--quiet", "ode", "verify", "--battery", "default", "--sigmas", "10,100,1000,10000", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["sigmas"].as_array().unwrap().len(), 4);
    assert_eq!(report["data"].as_array().unwrap().len(), 12);
    assert!(report["max_ratio"].as_f64().unwrap() <= 5.0);
}

#[test]
fn pde_run_writes_ledger_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_doc(dir.path(), "run.json", &SMALL_RUN.replace("KIND", "pde-run"));
    let out = run(&[
        "--quiet",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "run",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        csv_header(&dir.path().join("small_ledger.csv")),
        "t,E,J,G,G_lambda,D,S,mean_u,h1_dev"
    );
    assert_eq!(csv_header(&dir.path().join("small_snapshot_000.csv")), "x,u,v");
    assert!(dir.path().join("small_snapshot_001.csv").exists());
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("small_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["kind"], "pde-run");
    assert!(summary["passed"].is_null());
    for key in ["classification", "u_inf", "ell", "kappa", "M", "r_squared", "residual_e_max", "residual_j_max", "regime_entry_time"] {
        assert!(summary["details"].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn verify_energy_exit_code_follows_checks() {
    let dir = tempfile::tempdir().unwrap();
    let doc = SMALL_RUN.replace("\"KIND\"", "\"pde-verify-energy\", \"levels\": 2");
    let cfg = write_doc(dir.path(), "ok.json", &doc);
    let out = run(&["--quiet", "--out-dir", dir.path().to_str().unwrap(), "run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("small_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["details"]["levels"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("small_ledger_level1.csv").exists());

    let strict = SMALL_RUN.replace(
        "\"KIND\"",
        "\"pde-verify-energy\", \"levels\": 2, \"residual_tol\": 1e-30",
    );
    let cfg = write_doc(dir.path(), "strict.json", &strict);
    let out = run(&["--quiet", "--out-dir", dir.path().to_str().unwrap(), "run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("small_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], false);
}

#[test]
fn invalid_config_is_rejected_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let doc = SMALL_RUN
        .replace("KIND", "pde-run")
        .replace("\"dt\": 0.00390625", "\"dt\": 0.1");
    let cfg = write_doc(dir.path(), "bad.json", &doc);
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CFL limit 0.0078125"));

    let doc = SMALL_RUN.replace("KIND", "pde-run").replace("\"dt\"", "\"dtt\"");
    let cfg = write_doc(dir.path(), "typo.json", &doc);
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dtt"));
}

#[test]
fn missing_config_reports_path() {
    let out = run(&["run", "--config", "/nonexistent/exp.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/exp.json"));
}
