use std::io::Write;
use std::process::{Command, Output};

use serde_json::Value;

fn mechlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mechlab")).args(args).output().unwrap()
}

fn mechlab_with_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mechlab"))
        .args(args)
        .env("MECHLAB_THREADS", threads)
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn witness_file() -> tempfile::NamedTempFile {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, r#"{{"k":2,"groups":[[0.0,0.1],[0.51,0.51],[1.0,1.0]]}}"#).unwrap();
    file
}

#[test]
fn ratio_on_sum_lower_family() {
    let out = mechlab(&["ratio", "--family", "sum-lower-k:k=3", "--mech", "sum-k", "--variant", "sum"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["ratio"].as_f64().unwrap() - 7.0 / 3.0).abs() < 1e-12);
    assert!((v["bound"].as_f64().unwrap() - 11.0 / 3.0).abs() < 1e-12);
}

#[test]
fn audit_finds_the_witness() {
    let file = witness_file();
    let path = file.path().to_str().unwrap();
    let out = mechlab(&["audit", "--instance", path, "--mech", "a-max-star", "--variant", "max"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert!((v["max_gain"].as_f64().unwrap() - 0.49).abs() < 1e-12);
    let best = &v["agents"][0]["best"];
    assert_eq!(best["reported"].as_f64(), Some(0.1));
    assert_eq!(best["agent"]["group"].as_u64(), Some(0));
    assert_eq!(best["agent"]["index"].as_u64(), Some(0));
}

#[test]
fn audit_of_dispatcher_is_clean() {
    let file = witness_file();
    let path = file.path().to_str().unwrap();
    let out = mechlab(&["audit", "--instance", path, "--mech", "max-k2", "--variant", "max"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn fuzz_under_one_plus_sqrt2() {
    let args = ["fuzz", "--mech", "sum-k2", "--variant", "sum", "--trials", "1000", "--seed", "1", "--bound", "2.4142136"];
    let out = mechlab(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["verdict"], "PASS");
    assert!(v["worst_ratio"].as_f64().unwrap() <= 2.4142136);
    assert!(v["worst_instance"]["groups"].is_array());
}

#[test]
fn fuzz_fails_below_observed_ratio() {
    let out = mechlab(&["fuzz", "--mech", "sum-k2", "--variant", "sum", "--trials", "200", "--seed", "3", "--bound", "1.0"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["verdict"], "FAIL");
}

#[test]
fn reports_are_byte_stable() {
    let args = ["fuzz", "--mech", "max-k2", "--variant", "max", "--trials", "500", "--seed", "9", "--format", "csv"];
    let a = mechlab_with_threads(&args, "1");
    let b = mechlab_with_threads(&args, "4");
    let c = mechlab(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn family_output_feeds_back_as_instance() {
    let out = mechlab(&["family", "--family", "nine-halves:eps=0.01"]);
    assert_eq!(out.status.code(), Some(0));
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(&out.stdout).unwrap();
    let path = file.path().to_str().unwrap();
    let ratio = json(&mechlab(&["ratio", "--instance", path, "--mech", "max-k2", "--variant", "max"]));
    assert!((ratio["ratio"].as_f64().unwrap() - 4.5).abs() < 1e-9);
}

#[test]
fn run_and_optimal_csv() {
    let out = mechlab(&["run", "--family", "max-lower-k:k=2", "--mech", "max-k2", "--variant", "max", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("kind,index,value\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("facility")).count(), 2);

    let out = mechlab(&["optimal", "--family", "max-lower-k:k=2", "--variant", "max"]);
    assert!((json(&out)["cost"].as_f64().unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn bound_reports_value_and_limit() {
    let out = mechlab(&["bound", "--theta", "0.3333333333333333", "--l", "0.6666666666666666", "--r", "1", "--m", "3", "--n", "36", "--variant", "sum"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["bound"].as_f64().unwrap() - 2.25).abs() < 1e-12);
    assert!((v["limit"].as_f64().unwrap() - 2.25).abs() < 1e-12);
}

#[test]
fn exit_codes_for_bad_input() {
    assert_eq!(mechlab(&["ratio", "--mech", "sum-k", "--variant", "sum"]).status.code(), Some(64));
    assert_eq!(mechlab(&["run", "--family", "sum-lower-k:k=3", "--mech", "nope", "--variant", "sum"]).status.code(), Some(64));
    assert_eq!(mechlab(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(mechlab_with_threads(&["family", "--family", "sum-lower-k:k=3"], "zero").status.code(), Some(64));
    assert_eq!(mechlab(&["--help"]).status.code(), Some(0));

    let mut bad = tempfile::NamedTempFile::new().unwrap();
    writeln!(bad, r#"{{"k":2,"groups":[[0.0],[]]}}"#).unwrap();
    let path = bad.path().to_str().unwrap();
    assert_eq!(mechlab(&["optimal", "--instance", path, "--variant", "sum"]).status.code(), Some(65));

    let mut garbled = tempfile::NamedTempFile::new().unwrap();
    writeln!(garbled, "{{not json").unwrap();
    let path = garbled.path().to_str().unwrap();
    assert_eq!(mechlab(&["optimal", "--instance", path, "--variant", "sum"]).status.code(), Some(65));

    // k = 3 family with a two-facility mechanism
    let out = mechlab(&["run", "--family", "sum-lower-k:k=3", "--mech", "sum-k2", "--variant", "sum"]);
    assert_eq!(out.status.code(), Some(65));
    assert_eq!(mechlab(&["bound", "--theta", "0.5", "--l", "0.5", "--r", "0.5", "--m", "4", "--n", "8", "--variant", "max"]).status.code(), Some(65));
    assert_eq!(mechlab(&["optimal", "--instance", "/nonexistent/x.json", "--variant", "sum"]).status.code(), Some(66));
}
