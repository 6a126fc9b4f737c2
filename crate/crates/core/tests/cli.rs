use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permanental"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn permanent_of_all_ones() {
    let dir = TempDir::new().unwrap();
    let k = write(dir.path(), "k.json", r#"{"n": 3, "rows": [[1,1,1],[1,1,1],[1,1,1]]}"#);
    let out = cli(&["permanent", "--kernel", &k, "--beta", "1"]);
    assert!(out.status.success());
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 6.0).abs() < 1e-12);
}

#[test]
fn id_check_reports_the_triple_as_not_infinitely_divisible() {
    let out = cli(&["verify", "id", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn verify_writes_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let out = cli(&[
        "verify",
        "conjecture",
        "--seed",
        "1",
        "--out",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("experiment,"));
}

#[test]
fn malformed_input_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let k = write(dir.path(), "bad.json", "{not json");
    assert_eq!(
        cli(&["permanent", "--kernel", &k, "--beta", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn scan_exit_codes_follow_the_verdict() {
    let dir = TempDir::new().unwrap();
    let good = write(dir.path(), "good.json", r#"{"n": 2, "rows": [[1, -0.9], [-0.9, 1]]}"#);
    let bad = write(dir.path(), "bad.json", r#"{"n": 1, "rows": [[-1]]}"#);
    assert_eq!(
        cli(&["scan", "--kernel", &good, "--beta", "-1", "--max-order", "2"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        cli(&["scan", "--kernel", &bad, "--beta", "1", "--max-order", "2"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn simulate_emits_csv_rows() {
    let dir = TempDir::new().unwrap();
    let chain = write(
        dir.path(),
        "chain.json",
        r#"{"states": ["a", "b"], "Q": [[-2, 1], [0.5, -1.5]], "kind": "transient"}"#,
    );
    let out = cli(&[
        "simulate", "--chain", &chain, "--from", "a", "--stop", "absorb", "--paths", "5", "--seed", "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
}
