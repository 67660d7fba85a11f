use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn spinesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinesim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, body: &str, extra: &[&str]) -> (tempfile::TempDir, Output) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), body);
    let out = dir.path().join("out");
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = spinesim(&args);
    (dir, o)
}

fn report(dir: &Path, prefix: &str, ext: &str) -> (PathBuf, String) {
    let found = fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            let name = p.file_name().unwrap().to_str().unwrap();
            name.starts_with(prefix) && name.ends_with(ext)
        })
        .expect("report written");
    let body = fs::read_to_string(&found).unwrap();
    (found, body)
}

#[test]
fn spectral_sym_reports_fixture() {
    let (dir, o) = run("spectral", r#"{"model":"MODEL-SYM","seed":5}"#, &[]);
    assert_eq!(o.status.code(), Some(0));
    let (path, body) = report(dir.path(), "spectral-", ".json");
    let v: Value = serde_json::from_str(&body).unwrap();
    let m = &v["models"][0];
    assert!((m["lambda1"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((m["criterion"]["value"].as_f64().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
    assert_eq!(m["criterion"]["finite"], Value::Bool(true));
    assert_eq!(v["seed"], 5);
    let hash = v["config_hash"].as_str().unwrap();
    assert!(path.ends_with(format!("spectral-{hash}.json")));
}

#[test]
fn spectral_heavy_diverges() {
    let (dir, o) = run("spectral", r#"{"model":"MODEL-HEAVY"}"#, &[]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&report(dir.path(), "spectral-", ".json").1).unwrap();
    assert_eq!(v["models"][0]["criterion"]["finite"], Value::Bool(false));
}

#[test]
fn subcritical_model_exits_2() {
    let body = r#"{"model":{"label":"SYM-KILLED","motion":{"type":"chain","states":["0","1"],
        "generator":[[-1,1],[1,-1]],"killing":[2,2]},
        "branching":{"beta":1,"offspring":{"type":"finite","probs":[[2,1.0]]}}}}"#;
    let (_dir, o) = run("spectral", body, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("λ₁>0"));
}

#[test]
fn missing_config_exits_2() {
    let o = spinesim(&["spectral", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sabotaged_eigentriple_fails_verify() {
    let body = r#"{"model":"MODEL-SYM","suite":"martingale","replicas":100,
        "eigentriple_override":{"phi_tilde_scale":2.0}}"#;
    let (dir, o) = run("verify", body, &[]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_str(&report(dir.path(), "verify-", ".json").1).unwrap();
    assert_eq!(v["passed"], Value::Bool(false));
    assert_eq!(v["suites"].as_array().unwrap().len(), 1);
}

#[test]
fn verify_all_on_sym_passes() {
    let (dir, o) = run("verify", r#"{"model":"MODEL-SYM","seed":11}"#, &["--replicas", "3000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&report(dir.path(), "verify-", ".json").1).unwrap();
    let suites: Vec<&str> = v["suites"].as_array().unwrap().iter().map(|s| s["suite"].as_str().unwrap()).collect();
    assert_eq!(
        suites,
        ["eigentriple", "many2one", "martingale", "eta", "spine", "decomp", "com", "laplace"]
    );
}

#[test]
fn reports_do_not_depend_on_workers() {
    let body = r#"{"model":"MODEL-ASYM","seed":3,"suite":"com","replicas":500}"#;
    let (d1, o1) = run("verify", body, &["--workers", "1"]);
    let (d4, o4) = run("verify", body, &["--workers", "4"]);
    assert_eq!(o1.status.code(), o4.status.code());
    let (p1, b1) = report(d1.path(), "verify-", ".json");
    let (p4, b4) = report(d4.path(), "verify-", ".json");
    assert_eq!(p1.file_name(), p4.file_name());
    assert_eq!(b1, b4);
    assert!(!b1.contains("workers"));
}

#[test]
fn dichotomy_single_model_reports_only() {
    let body = r#"{"model":"MODEL-SYM","t_grid":[1,2],"replicas":300}"#;
    let (dir, o) = run("dichotomy", body, &[]);
    assert_eq!(o.status.code(), Some(0));
    let (_, csv) = report(dir.path(), "dichotomy-", ".csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("model,T,mean,median,frac_below_eps,overflow,criterion_finite"));
    assert_eq!(lines.next(), Some("MODEL-SYM,0,1,1,0,0,true"));
    assert_eq!(csv.lines().count(), 4);
    let v: Value = serde_json::from_str(&report(dir.path(), "dichotomy-", ".json").1).unwrap();
    assert!(v.get("contrast").is_none());
}

#[test]
fn dichotomy_rejects_non_increasing_grid() {
    let (_dir, o) = run("dichotomy", r#"{"model":"MODEL-SYM","t_grid":[1,4,2]}"#, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_tree_dump() {
    let (dir, o) = run("simulate", r#"{"model":"MODEL-ASYM","seed":2,"horizon":1.5}"#, &["--replicas", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, tsv) = report(dir.path(), "simulate-", ".tsv");
    assert!(tsv.starts_with("# replica 0\n"));
    assert!(tsv.contains("# replica 1\n"));
    let root = tsv.lines().nth(1).unwrap();
    let fields: Vec<&str> = root.split('\t').collect();
    assert_eq!(fields.len(), 5);
    assert_eq!(fields[0], "∅");
    assert_eq!(fields[1].parse::<f64>().unwrap(), 0.0);
    let v: Value = serde_json::from_str(&report(dir.path(), "simulate-", ".json").1).unwrap();
    assert_eq!(v["trees"].as_array().unwrap().len(), 2);
}
