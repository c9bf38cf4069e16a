use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tworegime"));
    c.env_remove("TWOREGIME_THREADS");
    c
}

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, config).unwrap();
    bin().current_dir(dir).args(args).arg("--config").arg(&cfg).output().unwrap()
}

fn simulate_into(dir: &Path, extra: &str) {
    let cfg = format!(r#"{{"dgp": {{"t": 80, "n": 40, "k": 1, "dx": 2, "beta0": [1, 1], "delta0": [1, 1], "phi0": [1, 0.5], "seed": 9{extra}}}, "dir": "sim"}}"#);
    let out = run(dir, &["simulate", "--out", "sim.json"], &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn estimate_roundtrips_regimes() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "");
    let out = run(dir.path(), &["estimate", "--out", "est.json"], r#"{"data": {"y": "sim/y.csv", "x": "sim/x.csv", "factors": "sim/factors.csv"}}"#);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("est.json"));
    assert_eq!(doc["status"], "Ok");
    assert_eq!(doc["config"]["space"]["tau1"], 0.05);
    assert_eq!(doc["config"]["space"]["tau2"], 0.95);
    let d = tworegime::cli::regimes_from_result(&doc).unwrap();
    assert_eq!(d.len(), 80);
    let gamma = doc["result"]["params"]["gamma"].as_array().unwrap();
    assert_eq!(gamma[0], 1.0);
}

#[test]
fn near_noiseless_data_fit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), r#", "sigma_eps": 1e-9"#);
    let out = run(dir.path(), &["estimate", "--out", "est.json"], r#"{"data": {"y": "sim/y.csv", "x": "sim/x.csv", "factors": "sim/factors.csv"}}"#);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("est.json"));
    assert!(doc["result"]["objective"].as_f64().unwrap() < 1e-12);
    let sim = read_json(&dir.path().join("sim.json"));
    let truth: Vec<u64> = sim["d_true"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let d: Vec<u64> = tworegime::cli::regimes_from_result(&doc).unwrap().into_iter().map(u64::from).collect();
    assert_eq!(d, truth);
}

#[test]
fn unknown_key_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["drift"], r#"{"drift": {"omegaa": 1.0}}"#);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("omegaa"), "{err}");
}

#[test]
fn missing_data_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["estimate"], r#"{"data": {"y": "nope.csv", "factors": "nope.csv"}}"#);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.y"));
}

#[test]
fn empty_share_window_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "");
    let cfg = r#"{"data": {"y": "sim/y.csv", "factors": "sim/factors.csv"}, "space": {"tau1": 0.601, "tau2": 0.605}}"#;
    let out = run(dir.path(), &["estimate", "--out", "est.json"], cfg);
    assert_eq!(out.status.code(), Some(1));
    let doc = read_json(&dir.path().join("est.json"));
    assert_eq!(doc["status"], "Infeasible");
}

#[test]
fn montecarlo_smoke_is_seed_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"mc": {"reps": 5, "dgp": {"t": 60, "n": 30}}, "scenario": "observed_no_selection", "records_csv": "rec.csv"}"#;
    let a = run(dir.path(), &["montecarlo", "--seed", "4", "--threads", "1", "--out", "a.json"], cfg);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(dir.path(), &["montecarlo", "--seed", "4", "--threads", "2", "--out", "b.json"], cfg);
    assert_eq!(b.status.code(), Some(0));
    let (a, b) = (read_json(&dir.path().join("a.json")), read_json(&dir.path().join("b.json")));
    assert_eq!(a["seed"], 4);
    assert_eq!(a["config"]["mc"]["dgp"]["seed"], 4);
    assert_eq!(a["report"]["reps"], 5);
    assert_eq!(a["report"]["params"], b["report"]["params"]);
    let rows = std::fs::read_to_string(dir.path().join("rec.csv")).unwrap();
    assert_eq!(rows.lines().count(), 6);
}

#[test]
fn bootstrap_dumps_draws() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "");
    let cfg = r#"{"data": {"y": "sim/y.csv", "x": "sim/x.csv", "factors": "sim/factors.csv"}, "bootstrap": {"b": 19, "seed": 1}, "draws_csv": "draws.csv"}"#;
    let out = run(dir.path(), &["bootstrap", "--out", "boot.json"], cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("boot.json"));
    let p = doc["result"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(std::fs::read_to_string(dir.path().join("draws.csv")).unwrap().lines().count(), 19);
}

#[test]
fn linearity_and_selection_run() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "");
    let data = r#""data": {"y": "sim/y.csv", "x": "sim/x.csv", "factors": "sim/factors.csv"}"#;
    let out = run(dir.path(), &["test-linearity", "--out", "lin.json"], &format!(r#"{{{data}, "linearity": {{"b": 19}}}}"#));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read_json(&dir.path().join("lin.json"))["result"]["stat"].as_f64().unwrap() > 0.0);
    let out = run(dir.path(), &["select-factors", "--out", "sel.json"], &format!("{{{data}}}"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn panel_input_uses_pca() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "");
    let cfg = r#"{"data": {"y": "sim/y.csv", "x": "sim/x.csv", "panel": "sim/panel.csv", "k": 1}}"#;
    let out = run(dir.path(), &["estimate", "--out", "est.json"], cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = r#"{"data": {"y": "sim/y.csv", "panel": "sim/panel.csv"}}"#;
    assert_eq!(run(dir.path(), &["estimate"], cfg).status.code(), Some(2));
}

#[test]
fn drift_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["drift", "--out", "d.json"], r#"{"drift": {"omega": "inf", "mc_draws": 10}, "curve_csv": "curve.csv"}"#);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("d.json"));
    assert_eq!(doc["config"]["drift"]["omega"], "inf");
    let text = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "g,a,se");
    assert_eq!(text.lines().count(), 22);
}

#[test]
fn config_is_required_for_data_commands() {
    let out = bin().arg("estimate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
