use std::f64::consts::FRAC_PI_4;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn qot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qot")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn identical_states_cost_nothing() {
    let rho = fixture("counterexample_rho.json");
    let v = json(&qot(&["transport", path(&rho), path(&rho)]));
    assert!(v["cost"]["value"].as_f64().unwrap().abs() <= 1e-6);
}

#[test]
fn plus_against_zero_revised() {
    let out = qot(&["transport", path(&fixture("plus_density.json")), path(&fixture("zero_density.json")), "--revised"]);
    let v = json(&out);
    assert!((v["cost"]["value"].as_f64().unwrap() - 0.25).abs() <= 1e-6);
}

#[test]
fn malformed_input_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dim": 2, "entries": [[1.0, 0.0]]}"#).unwrap();
    let out = qot(&["transport", path(&bad), path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("entries"));
}

#[test]
fn missing_file_is_an_input_error() {
    let out = qot(&["coherence", "/nonexistent/state.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn coherence_of_mixture_stays_at_a_quarter() {
    let v = json(&qot(&["coherence", path(&fixture("counterexample_rho.json"))]));
    assert!(v["coherence"]["value"].as_f64().unwrap() <= 0.25 + 1e-6);
}

#[test]
fn coherence_of_diagonal_state_is_zero() {
    let v = json(&qot(&["coherence", path(&fixture("zero_density.json"))]));
    assert!(v["coherence"]["value"].as_f64().unwrap().abs() <= 1e-6);
}

#[test]
fn maximally_coherent_qutrit() {
    let v = json(&qot(&["coherence", path(&fixture("max_coherent_d3.json"))]));
    assert!((v["coherence"]["value"].as_f64().unwrap() - 1.0 / 3.0).abs() <= 1e-6);
    assert!(v["analytic"]["sdp_difference"].as_f64().unwrap().abs() <= 1e-6);
}

#[test]
fn speed_limit_for_plus() {
    let v = json(&qot(&["speedlimit", path(&fixture("plus.json"))]));
    assert!((v["tau"].as_f64().unwrap() - FRAC_PI_4).abs() <= 1e-12);
}

#[test]
fn counterexample_suite_passes() {
    let out = qot(&["verify", "c3-counterexample"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn text_output_is_stable() {
    let state = fixture("max_coherent_d3.json");
    let args = ["--output", "text", "coherence", path(&state)];
    let a = qot(&args);
    let b = qot(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
