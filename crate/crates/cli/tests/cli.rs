use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_SCHEME: &str = r#""scheme": {"degree_cap": 64, "points_per_axis": 128}"#;

fn htl(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_htl"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("config.json");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn norm_report_holds_the_total() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"function": "gaussian(1)", {SMALL_SCHEME}}}"#);
    let o = htl(&["norm"], Some(&cfg), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["task"], "norm");
    let total = r["result"]["breakdown"]["total"].as_f64().unwrap();
    assert!(total.is_finite() && total > 0.0);
    assert_eq!(r["config"]["function"], "gaussian(1)");
    assert!(dir.path().join("out/norm.csv").exists());
}

#[test]
fn malformed_exponent_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"space": {"alpha": {"kind": "wavy"}, "p": {"kind": "constant", "value": 2}, "q": {"kind": "constant", "value": 2}, "m": 6}}"#;
    let o = htl(&["norm"], Some(cfg), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("space.alpha"), "{}", stderr(&o));
}

#[test]
fn missing_expansion_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"function": {"expansion_file": "/nonexistent/f.json"}}"#;
    let o = htl(&["norm"], Some(cfg), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("function.expansion_file"), "{}", stderr(&o));
}

#[test]
fn unknown_scheme_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = htl(&["norm"], Some(r#"{"scheme": {"degree_kap": 64}}"#), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scheme.degree_kap"), "{}", stderr(&o));
}

#[test]
fn conflicting_task_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = htl(&["norm"], Some(r#"{"task": "decompose"}"#), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`task`"), "{}", stderr(&o));
}

#[test]
fn bad_thread_cap_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_htl"))
        .arg("norm")
        .arg("--out")
        .arg(dir.path())
        .env("HTL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("HTL_THREADS"), "{}", stderr(&o));
}

#[test]
fn decompose_writes_cube_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"function": "h0", {SMALL_SCHEME}, "decompose": {{"v_max": 4, "m": 6, "M": 4, "N": 2}}}}"#);
    let o = htl(&["decompose"], Some(&cfg), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/cubes.csv")).unwrap();
    assert!(csv.starts_with("v,k,s,size_constant,zero_level"));
    assert!(csv.lines().count() > 1);
}

#[test]
fn expansion_file_round_trips_through_norm() {
    let dir = tempfile::tempdir().unwrap();
    let e = htl_core::HermiteExpansion::from_1d(64, &[(0, 1.0), (4, 0.5)]).unwrap();
    let file = dir.path().join("f.json");
    std::fs::write(&file, e.to_json().unwrap()).unwrap();
    let cfg = format!(r#"{{"function": {{"expansion_file": {:?}}}, {SMALL_SCHEME}}}"#, file.display().to_string());
    let o = htl(&["norm"], Some(&cfg), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"function": "h2+h5", {SMALL_SCHEME}}}"#);
    let a = htl(&["decompose"], Some(&cfg), dir.path());
    let first = std::fs::read(dir.path().join("out/report.json")).unwrap();
    let b = htl(&["decompose"], Some(&cfg), dir.path());
    let second = std::fs::read(dir.path().join("out/report.json")).unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first, second);
}

#[test]
fn kernel_check_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = htl(&["kernel-check"], None, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["passed"], true);
    assert_eq!(r["result"].as_array().unwrap().len(), 2);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("[PASS]  1") && out.contains("[PASS]  4"), "{out}");
}
