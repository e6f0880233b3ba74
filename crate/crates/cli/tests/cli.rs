use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn eosgd() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_eosgd"));
    c.env_remove("EOSGD_CONSTANTS");
    c
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "status {:?}\nstderr: {}", out.status, String::from_utf8_lossy(&out.stderr));
    out
}

fn bundled_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/constants.json")
}

/// The bundled constants with the decay constants shrunk to `1e-12`.
fn strict_constants(dir: &Path) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(bundled_path()).unwrap()).unwrap();
    for k in ["c3_risk_small_reg", "c3_risk_general_reg", "c3_param"] {
        v[k] = Value::from(1e-12);
    }
    let p = dir.join("strict.json");
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

/// Hard dataset, its reference at λ = 1e-3 and a run at the
/// small-regularization stepsize 1.25.
fn pipeline(dir: &Path) -> (PathBuf, PathBuf) {
    let ds = dir.join("hard.json");
    let rf = dir.join("ref.json");
    let tr = dir.join("traj.csv");
    ok(eosgd().args(["dataset", "gen", "--kind", "hard", "--gamma", "0.05", "--out"]).arg(&ds).output().unwrap());
    ok(eosgd().args(["reference", "--lambda", "1e-3", "--dataset"]).arg(&ds).arg("--out").arg(&rf).output().unwrap());
    ok(eosgd()
        .args(["run", "--eta", "1.25", "--lambda", "1e-3", "--steps", "3000", "--dataset"])
        .arg(&ds)
        .arg("--out")
        .arg(&tr)
        .output()
        .unwrap());
    (tr, rf)
}

#[test]
fn run_then_analyze_reports_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, rf) = pipeline(dir.path());
    assert!(dir.path().join("traj.csv.meta.json").exists());
    let bounds = dir.path().join("bounds.csv");
    let out = ok(eosgd().arg("analyze").arg("--traj").arg(&tr).arg("--ref").arg(&rf).arg("--out").arg(&bounds).output().unwrap());
    assert!(String::from_utf8_lossy(&out.stderr).contains(" 0 violations"));
    let text = std::fs::read_to_string(&bounds).unwrap();
    assert!(text.starts_with("# schema: eosgd.bounds/1"));
    assert!(text.contains("stable_risk_decay_small_reg"));
    assert!(!text.lines().skip(3).any(|l| l.ends_with(",true")));
}

#[test]
fn analyze_exits_nonzero_on_violation() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, rf) = pipeline(dir.path());
    let strict = strict_constants(dir.path());
    let out = eosgd()
        .args(["analyze", "--checks", "stable_risk_decay_small_reg", "--traj"])
        .arg(&tr)
        .arg("--ref")
        .arg(&rf)
        .arg("--constants")
        .arg(&strict)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().any(|l| l.ends_with(",true")));
    assert!(csv.lines().skip(3).all(|l| l.contains("stable_risk_decay_small_reg")));
}

#[test]
fn verify_exit_status_follows_violations() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["verify", "--runs", "4", "--run-steps", "3000", "--format", "json"];
    let out = ok(eosgd().args(args).output().unwrap());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["result"]["total_violations"], Value::from(0));
    assert_eq!(doc["meta"]["schema"], "eosgd.verify/1");

    let strict = strict_constants(dir.path());
    let out = eosgd().args(args).env("EOSGD_CONSTANTS", &strict).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"dataset": {"kind": "hard", "gamma": 0.05}, "lambda_grid": [1e-3, 1e-4], "eps": 1e-4}"#)
        .unwrap();
    let out = ok(eosgd().arg("sweep").arg("--config").arg(&cfg).args(["--eps", "1e-6", "--format", "json"]).output().unwrap());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["result"]["eps"].as_f64(), Some(1e-6));
    let lambdas: Vec<f64> = doc["result"]["rows"].as_array().unwrap().iter().map(|r| r["lambda"].as_f64().unwrap()).collect();
    assert_eq!(lambdas, vec![1e-3, 1e-4]);
    assert_eq!(doc["result"]["eta_rule"]["rule"], "small_reg");
}

#[test]
fn bad_input_exits_with_two() {
    let out = eosgd().args(["sweep", "--eta-rule", "bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let out = eosgd().args(["run", "--out", "/dev/null", "--optimizer", "adaptive", "--eta", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = eosgd().args(["sweep", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dataset_generation_is_deterministic() {
    let gen = |seed: &str| {
        ok(eosgd().args(["dataset", "gen", "--kind", "random", "--n", "8", "--d", "3", "--gamma", "0.3", "--seed", seed]).output().unwrap())
            .stdout
    };
    assert_eq!(gen("7"), gen("7"));
    assert_ne!(gen("7"), gen("8"));
    let doc: Value = serde_json::from_slice(&gen("7")).unwrap();
    assert_eq!(doc["count"], Value::from(8));
    assert_eq!(doc["seed"], Value::from(7));
}

#[test]
fn optimizers_write_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    for (opt, extra) in [("nesterov", vec!["--lambda", "1e-2"]), ("adaptive", vec!["--lambda", "0", "--eta", "2"])] {
        let tr = dir.path().join(format!("{opt}.csv"));
        ok(eosgd().args(["run", "--optimizer", opt, "--steps", "200", "--tol", "0"]).args(&extra).arg("--out").arg(&tr).output().unwrap());
        let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{opt}.csv.meta.json"))).unwrap()).unwrap();
        assert_eq!(meta["config"]["optimizer"], opt);
        assert_eq!(meta["steps_run"], Value::from(200));
    }
}

#[test]
fn calibrate_reproduces_bundled_constants() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    ok(eosgd().arg("calibrate").arg("--out").arg(&p).output().unwrap());
    assert_eq!(std::fs::read_to_string(p).unwrap(), std::fs::read_to_string(bundled_path()).unwrap());
}
