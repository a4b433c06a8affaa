use std::path::Path;
use std::process::{Command, Output};

use rangeloc::core::model::{NoiseModel, Scenario};
use rangeloc::io::{write_scenario, EstimateJson, FisherJson};

fn rangeloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rangeloc")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scenario(dir: &Path, sigma2: f64, repeats: usize) -> std::path::PathBuf {
    let p = dir.join("scenario.json");
    let s = Scenario::benchmark(NoiseModel::homogeneous(sigma2), repeats).unwrap();
    write_scenario(&p, &s).unwrap();
    p
}

#[test]
fn simulate_then_estimate_noiseless() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), 0.0, 2);
    let csv = dir.path().join("meas.csv");
    let out = rangeloc(&["simulate", "--scenario", path(&s), "--seed", "7", "--out", path(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(text.starts_with("sensor_index,repetition,distance\n0,0,"));

    for method in ["bias-eli", "noise-est", "two-step:noise-est-lin", "ls-gn"] {
        let out = rangeloc(&["estimate", "--scenario", path(&s), "--measurements", path(&csv), "--method", method]);
        assert!(out.status.success(), "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let est: EstimateJson = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(est.method, method);
        for x in est.x_hat {
            assert!((x - 6.0).abs() < 1e-9, "{method}: {x}");
        }
    }
}

#[test]
fn two_step_flag_and_sigma2_override() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), 1.0, 3);
    let csv = dir.path().join("meas.csv");
    assert!(rangeloc(&["simulate", "--scenario", path(&s), "--seed", "1", "--out", path(&csv)]).status.success());
    let out = rangeloc(&[
        "estimate",
        "--scenario",
        path(&s),
        "--measurements",
        path(&csv),
        "--method",
        "bias-eli-lin",
        "--two-step",
        "--sigma2",
        "0.5",
    ]);
    assert!(out.status.success());
    let est: EstimateJson = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(est.method, "two-step:bias-eli-lin");
    assert_eq!(est.diagnostics.iterations, 1);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), 1.0, 4);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for (seed, out) in [("3", &a), ("3", &b), ("4", &c)] {
        assert!(rangeloc(&["simulate", "--scenario", path(&s), "--seed", seed, "--out", path(out)]).status.success());
    }
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn crlb_matches_the_golden_value() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), 1.0, 1);
    let out = rangeloc(&["crlb", "--scenario", path(&s)]);
    assert!(out.status.success());
    let r: FisherJson = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r.crlb - 2.0227605527945305).abs() < 1e-12);
    let out = rangeloc(&["crlb", "--scenario", path(&s), "--sigma2", "10"]);
    let r: FisherJson = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r.crlb - 20.227605527945305).abs() < 1e-10);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), 1.0, 1);
    let missing = dir.path().join("missing.json");
    assert_eq!(rangeloc(&["crlb", "--scenario", path(&missing)]).status.code(), Some(2));
    assert_eq!(rangeloc(&["crlb", "--scenario", path(&s), "--sigma2", "-1"]).status.code(), Some(2));
    assert_eq!(rangeloc(&["trial", "--builtin", "trial99", "--out", path(dir.path())]).status.code(), Some(2));
    assert_eq!(rangeloc(&["frobnicate"]).status.code(), Some(2));

    let csv = dir.path().join("m.csv");
    assert!(rangeloc(&["simulate", "--scenario", path(&s), "--seed", "1", "--out", path(&csv)]).status.success());
    let out = rangeloc(&["estimate", "--scenario", path(&s), "--measurements", path(&csv), "--method", "magic"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"sensors": [[0,0]], "target": [1,1], "noise": {"kind": "homogeneous", "sigma2": 1}, "repeats": 1}"#,
    )
    .unwrap();
    assert_eq!(rangeloc(&["crlb", "--scenario", path(&bad)]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // Collinear sensors leave the lifted design rank deficient.
    let s = dir.path().join("line.json");
    std::fs::write(
        &s,
        r#"{"sensors": [[0,0],[1,0],[2,0],[3,0]], "target": [1.5,2], "noise": {"kind": "homogeneous", "sigma2": 0.1}, "repeats": 1}"#,
    )
    .unwrap();
    let csv = dir.path().join("m.csv");
    assert!(rangeloc(&["simulate", "--scenario", path(&s), "--seed", "1", "--out", path(&csv)]).status.success());
    let out =
        rangeloc(&["estimate", "--scenario", path(&s), "--measurements", path(&csv), "--method", "noise-est-lin"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn trial_and_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("t");
    let out = rangeloc(&["trial", "--builtin", "trial1-tiny", "--out", path(&out_dir), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv, include_str!("fixtures/trial1_tiny.csv"));

    let svg = dir.path().join("bias.svg");
    let out = rangeloc(&["plot", "--report", path(&out_dir), "--kind", "bias_vs_runs", "--out", path(&svg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));

    let out = rangeloc(&["plot", "--report", path(&out_dir), "--kind", "mse_vs_T", "--out", path(&svg)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trial_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("trial.json");
    std::fs::write(
        &cfg,
        r#"{"name": "file", "scenario": "benchmark", "estimators": ["noise-est-lin", "two-step:bias-eli"],
            "repeats": [1, 10], "sigma2": [1.0], "runs": 8, "seed": 3}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = rangeloc(&["trial", "--config", path(&cfg), "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(out_dir.join("results.csv")).unwrap().lines().count(), 5);

    std::fs::write(&cfg, r#"{"name": "file", "scenario": "benchmark", "estimators": [], "repeats": [1], "sigma2": [1], "runs": 8, "seed": 3}"#).unwrap();
    assert_eq!(rangeloc(&["trial", "--config", path(&cfg), "--out", path(&out_dir)]).status.code(), Some(2));
}
