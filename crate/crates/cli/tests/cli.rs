//! End-to-end tests of the ppql binary: the simulate -> fit round trip,
//! determinism, exit codes and the atomic-output contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ppql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppql"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const SIM_CONFIG: &str = r#"{
    "kappa": 100.0,
    "omega": 0.02,
    "target_count": 200.0,
    "beta1": 1.0,
    "window": [0.0, 1.0, 0.0, 1.0],
    "field": {"grid": [25, 25]}
}"#;

#[test]
fn simulate_fit_roundtrip_ql() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = dir.path().join("sim.json");
    write(&sim_cfg, SIM_CONFIG);
    let out = ppql(&[
        "simulate",
        "--config",
        sim_cfg.to_str().unwrap(),
        "--seed",
        "11",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("pattern.csv").exists());
    assert!(dir.path().join("field.txt").exists());

    let fit_cfg = dir.path().join("fit.json.config");
    write(
        &fit_cfg,
        r#"{"pattern": "pattern.csv", "rasters": ["field.txt"]}"#,
    );
    let out = ppql(&[
        "fit",
        "--config",
        fit_cfg.to_str().unwrap(),
        "--estimator",
        "ql",
        "--pcf",
        "thomas",
        "--grid",
        "25x25",
        "--taper-eps",
        "0.01",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert_eq!(json["estimator"], "ql");
    assert!(json["d_taper"].as_f64().unwrap() > 0.0);
    assert_eq!(json["beta_hat"].as_array().unwrap().len(), 2);
    assert!(json["converged"].as_bool().unwrap());
    // The recovered slope should be in the right region for this target.
    let b1 = json["beta_hat"][1].as_f64().unwrap();
    assert!((0.0..2.5).contains(&b1), "slope {b1}");
    assert!(json["timing"]["fit_seconds"].as_f64().is_some());
    assert!(json["timing"]["covariance_seconds"].as_f64().is_some());
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let cfg = dir.path().join("sim.json");
        write(&cfg, SIM_CONFIG);
        let out = ppql(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "5",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let a = fs::read_to_string(dir_a.path().join("pattern.csv")).unwrap();
    let b = fs::read_to_string(dir_b.path().join("pattern.csv")).unwrap();
    assert_eq!(a, b);

    // A different seed changes the output.
    let cfg = dir_a.path().join("sim2.json");
    write(&cfg, SIM_CONFIG);
    let out = ppql(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "6",
        "--out",
        dir_a.path().join("other").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let c = fs::read_to_string(dir_a.path().join("other/pattern.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn fit_cl_homogeneous_closed_form() {
    // Intercept-only CL on a homogeneous Poisson CSV: beta0 = log(N/|W|).
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x,y\n");
    // A fixed 40-point pattern.
    for i in 0..40 {
        let x = (i as f64 * 0.61803) % 1.0;
        let y = (i as f64 * 0.38196 + 0.11) % 1.0;
        csv.push_str(&format!("{x},{y}\n"));
    }
    write(&dir.path().join("pat.csv"), &csv);
    let cfg = dir.path().join("fit.config");
    write(
        &cfg,
        r#"{"pattern": "pat.csv", "window": [0.0, 1.0, 0.0, 1.0], "grid": [20, 20]}"#,
    );
    let out = ppql(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--estimator",
        "cl",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    let b0 = json["beta_hat"][0].as_f64().unwrap();
    assert!((b0 - (40.0f64).ln()).abs() < 1e-8, "beta0 {b0}");
}

#[test]
fn missing_raster_exits_1_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("pat.csv"), "x,y\n0.5,0.5\n");
    let cfg = dir.path().join("fit.config");
    write(
        &cfg,
        r#"{"pattern": "pat.csv", "rasters": ["missing.txt"]}"#,
    );
    let outdir = dir.path().join("out");
    let out = ppql(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!outdir.join("fit.json").exists());
    assert!(!outdir.join("fit.txt").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    write(
        &cfg,
        r#"{"kappa": 100.0, "omega": 0.02, "beta": [5.0, 0.0], "window": [0,1,0,1], "typo_key": 3}"#,
    );
    let out = ppql(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo_key"));
}

#[test]
fn zero_omega_rejected_before_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    write(
        &cfg,
        r#"{"kappa": 100.0, "omega": 0.0, "beta": [5.0, 0.0], "window": [0,1,0,1]}"#,
    );
    let outdir = dir.path().join("out");
    let out = ppql(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!outdir.exists());
}

#[test]
fn study_smoke_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.json");
    write(
        &cfg,
        r#"{"cells": [[100.0, 0.02]], "beta1": [1.0], "n_reps": 2,
            "field_grid": [20, 20], "quad_grid": [20, 20], "target_count": 120.0}"#,
    );
    let run = |sub: &str| -> String {
        let outdir = dir.path().join(sub);
        let out = ppql(&[
            "study",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "3",
            "--out",
            outdir.to_str().unwrap(),
        ]);
        assert!(
            out.status.code() == Some(0) || out.status.code() == Some(2),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        fs::read_to_string(outdir.join("study.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    assert!(a.starts_with("kappa,omega,beta1,window,n_reps,n_failed"));
}

#[test]
fn help_lists_config_keys_and_defaults() {
    for (sub, keys) in [
        ("simulate", vec!["kappa", "omega", "target_count", "pattern_out", "raster_out"]),
        ("fit", vec!["pattern", "rasters", "taper_eps", "backward_select", "alpha", "step_tol"]),
        ("study", vec!["cells", "n_reps", "target_count", "csv_out", "field_grid"]),
    ] {
        let out = ppql(&[sub, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        for key in keys {
            assert!(text.contains(key), "{sub} --help missing `{key}`");
        }
        assert!(text.contains("default"));
    }
}
