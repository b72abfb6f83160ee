use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_modular-ppt"))
}

fn run(args: &[&str]) -> (i32, Value) {
    let out = bin().args(args).output().expect("binary runs");
    let stdout = String::from_utf8(out.stdout).expect("utf-8 output");
    let body: Value = serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("not JSON ({e}): {stdout}"));
    (out.status.code().expect("exit code"), body)
}

fn write_file(dir: &Path, name: &str, value: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn zeros(n: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; n]; n]
}

fn matrix(re: Vec<Vec<f64>>, kind: &str) -> Value {
    let n = re.len();
    json!({ "schema_version": "1", "rows": n, "cols": n, "re": re, "im": zeros(n), "kind": kind })
}

fn singlet() -> Value {
    matrix(
        vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.5, -0.5, 0.0],
            vec![0.0, -0.5, 0.5, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
        ],
        "density",
    )
}

fn swap() -> Value {
    matrix(
        vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ],
        "hermitian",
    )
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn singlet_is_not_ppt() {
    let dir = TempDir::new().unwrap();
    let path = write_file(dir.path(), "singlet.json", &singlet());
    let (code, body) = run(&["ppt-check", "--in", &path, "--dims", "2x2"]);
    assert_eq!(code, 0, "{body}");
    assert_eq!(body["verdicts"]["ppt"], json!(false));
    assert!((body["residuals"]["min_eig_gamma"].as_f64().unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(body["details"]["ppt"], json!(false));
    assert!(body["residuals"]["witness_value"].as_f64().unwrap() < 0.0);
}

#[test]
fn gns_verify_passes() {
    let (code, body) = run(&["gns-verify", "--dims", "3", "--seed", "7", "--samples", "100"]);
    assert_eq!(code, 0, "{body}");
    assert_eq!(body["verdicts"]["identities"], json!(true));
    for (name, v) in body["residuals"].as_object().unwrap() {
        assert!(v.as_f64().unwrap() <= 1e-10, "{name} = {v}");
    }
    assert_eq!(body["config"]["seed"], json!(7));
}

#[test]
fn minimize_swap_is_zero() {
    let dir = TempDir::new().unwrap();
    let path = write_file(dir.path(), "swap.json", &swap());
    let (code, body) = run(&["minimize", "--in", &path, "--dims", "2x2", "--seed", "3"]);
    assert_eq!(code, 0, "{body}");
    assert!(body["residuals"]["value"].as_f64().unwrap().abs() <= 1e-4, "{body}");
}

#[test]
fn report_is_written_atomically_and_matches_stdout() {
    let dir = TempDir::new().unwrap();
    let input = write_file(dir.path(), "singlet.json", &singlet());
    let out = dir.path().join("report.json");
    let (code, body) = run(&["ppt-check", "--in", &input, "--dims", "2x2", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(written, body);
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn witness_round_trips_through_ppt_check() {
    let dir = TempDir::new().unwrap();
    let path = write_file(dir.path(), "singlet.json", &singlet());
    let (_, body) = run(&["ppt-check", "--in", &path, "--dims", "2x2"]);
    let witness = &body["details"]["witness"];
    let reloaded = write_file(dir.path(), "witness.json", witness);
    let (code, min) = run(&["minimize", "--in", &reloaded, "--iters", "20"]);
    assert_eq!(code, 0, "{min}");
    // The witness is non-negative on PPT states.
    assert!(min["residuals"]["value"].as_f64().unwrap() >= -1e-8, "{min}");
}

#[test]
fn bad_trace_is_rejected() {
    let dir = TempDir::new().unwrap();
    let d: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 0.225 } else { 0.0 }).collect()).collect();
    let path = write_file(dir.path(), "bad.json", &matrix(d, "density"));
    let (code, body) = run(&["ppt-check", "--in", &path, "--dims", "2x2"]);
    assert_eq!(code, 2);
    let msg = body["error"]["message"].as_str().unwrap();
    assert!(msg.contains("trace"), "{msg}");
    assert!(msg.contains("residual"), "{msg}");
    assert_eq!(body["exit_code"], json!(2));
}

#[test]
fn malformed_file_names_the_field() {
    let dir = TempDir::new().unwrap();
    let mut m = singlet();
    m["re"][1][2] = json!("x");
    let path = write_file(dir.path(), "mal.json", &m);
    let (code, body) = run(&["ppt-check", "--in", &path, "--dims", "2x2"]);
    assert_eq!(code, 2);
    assert_eq!(body["error"]["kind"], json!("parse"));
    assert_eq!(body["error"]["field"], json!("re[1][2]"));
}

#[test]
fn missing_file_and_bad_arguments_are_diagnosed() {
    let (code, body) = run(&["ppt-check", "--in", "/nonexistent/x.json", "--dims", "2x2"]);
    assert_eq!(code, 2);
    assert_eq!(body["error"]["kind"], json!("io"));
    assert!(body["error"]["message"].as_str().unwrap().contains("/nonexistent/x.json"));

    let (code, body) = run(&["no-such-command"]);
    assert_eq!(code, 2);
    assert_eq!(body["error"]["field"], json!("arguments"));

    let (code, body) = run(&["gns-verify", "--dims", "2x"]);
    assert_eq!(code, 2);
    assert_eq!(body["error"]["field"], json!("dims"));

    let (code, body) = run(&["gns-verify", "--dims", "2", "--tol", "nope=1"]);
    assert_eq!(code, 2);
    assert_eq!(body["error"]["field"], json!("tol"));
}

#[test]
fn dimension_cap_follows_environment() {
    let (code, body) = run(&["gns-verify", "--dims", "5000"]);
    assert_eq!(code, 2);
    assert_eq!(body["error"]["kind"], json!("dimension_limit"));

    let out = bin().args(["gns-verify", "--dims", "4", "--samples", "5"]).env("MODULAR_PPT_MAX_DIM", "3").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shape_mismatch_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let path = write_file(dir.path(), "singlet.json", &singlet());
    let (code, body) = run(&["ppt-check", "--in", &path, "--dims", "3x2"]);
    assert_eq!(code, 2);
    assert_eq!(body["error"]["field"], json!("dims"));
}

#[test]
fn falsified_checks_exit_with_one() {
    let (code, body) = run(&["anticomm", "--dims", "2x2", "--samples", "20", "--seed", "1"]);
    assert_eq!(code, 1, "{body}");
    assert!(body["failures"].as_array().unwrap().iter().any(|f| f == "no_falsification_random_state"));
    assert_eq!(body["verdicts"]["no_falsification_nondegenerate"], json!(true));
}

#[test]
fn reports_are_deterministic() {
    for args in [
        vec!["gns-verify", "--dims", "3", "--seed", "5", "--samples", "20"],
        vec!["cone-check", "--dims", "2x2", "--seed", "5", "--samples", "10"],
        vec!["experiment", "--dims", "2x2", "--seed", "5", "--samples", "10"],
        vec!["construct", "--dims", "2x2", "--seed", "5", "--samples", "2", "--iters", "10"],
    ] {
        let (c1, a) = run(&args);
        let (c2, b) = run(&args);
        assert_eq!(c1, c2);
        assert_eq!(
            serde_json::to_string(&without_timing(a)).unwrap(),
            serde_json::to_string(&without_timing(b)).unwrap(),
            "{args:?}"
        );
    }
}

#[test]
fn remaining_commands_succeed() {
    for args in [
        vec!["choi", "--dims", "2", "--samples", "5"],
        vec!["hierarchy", "--dims", "2x2", "--seed", "1"],
        vec!["cone-check", "--dims", "2", "--samples", "20"],
    ] {
        let (code, body) = run(&args);
        assert_eq!(code, 0, "{args:?}: {body}");
        assert!(body["failures"].as_array().unwrap().is_empty());
        assert!(body["timing"]["elapsed_ms"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn help_exits_cleanly() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ppt-check"));
}
