use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_conetract"));
    c.env_remove("CONETRACT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn csv_rows(out: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

const DEPOLARIZING: &str = r#"[
  [[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]],
  [[[0, 0], [0.5, 0]], [[0.5, 0], [0, 0]]],
  [[[0, 0], [0, -0.5]], [[0, 0.5], [0, 0]]],
  [[[0.5, 0], [0, 0]], [[0, 0], [-0.5, 0]]]
]"#;

const IDENTITY_CHANNEL: &str = "[[[[1, 0], [0, 0]], [[0, 0], [1, 0]]]]";

#[test]
fn h_of_the_three_node_example_is_minus_one() {
    let d = TempDir::new().unwrap();
    let m = write(d.path(), "a.json", r#"{"matrix": [[-3, 1, 2], [1, 0, -1], [1, 1, -2]]}"#);
    let out = run(&["coef", "h", "--matrix", m.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(num(&v["value"]), -1.0);
    assert_eq!(v["bound_kind"], "exact");
    assert_eq!(v["method"], "closed-form");
}

#[test]
fn tau_of_identity_is_one() {
    let d = TempDir::new().unwrap();
    let m = write(d.path(), "id.json", r#"{"matrix": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}"#);
    let v = json(&run(&["coef", "tau", "--matrix", m.to_str().unwrap()]));
    assert_eq!(num(&v["value"]), 1.0);
}

#[test]
fn depolarizing_channel_has_zero_coefficient() {
    let d = TempDir::new().unwrap();
    let c = write(d.path(), "dep.json", DEPOLARIZING);
    let out = run(&["coef", "qdobrushin", "--channel", c.to_str().unwrap(), "--starts", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(num(&v["value"]).abs() < 1e-9);
    assert_eq!(v["bound_kind"], "lower");
    assert_eq!(v["diagnostics"]["starts"], 8);
}

#[test]
fn markov_averaging_reaches_consensus_in_one_step() {
    let d = TempDir::new().unwrap();
    let m = write(d.path(), "half.json", r#"{"matrix": [[0.5, 0.5], [0.5, 0.5]]}"#);
    let out = run(&["sim", "markov", "--matrix", m.to_str().unwrap(), "--x0", "1,0", "--steps", "3", "--certify"]);
    assert!(out.status.success());
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["t", "metric", "bound", "state_0", "state_1"]);
    assert_eq!(rows.len(), 4);
    assert_eq!(f(&rows[0][1]), 1.0);
    assert_eq!(f(&rows[1][1]), 0.0);
    assert_eq!(f(&rows[1][3]), 0.5);
    // tau = 0, so the bound column is zero after the first step
    assert_eq!(f(&rows[1][2]), 0.0);
}

#[test]
fn one_kuramoto_step_matches_rk4() {
    let d = TempDir::new().unwrap();
    let flow = write(d.path(), "k.json", r#"{"model": "kuramoto", "C": [[0, 1], [1, 0]]}"#);
    let out = run(&["sim", "flow", "--flow", flow.to_str().unwrap(), "--x0", "0.3,-0.3", "--t-end", "0.01", "--dt", "0.01"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = csv_rows(&out);
    assert_eq!(rows.len(), 2);
    // difference d = x0 - x1 obeys d' = -2 sin d; one RK4 step by hand
    let g = |d: f64| -2.0 * d.sin();
    let (h, d0) = (0.01, 0.6);
    let k1 = g(d0);
    let k2 = g(d0 + h / 2.0 * k1);
    let k3 = g(d0 + h / 2.0 * k2);
    let k4 = g(d0 + h * k3);
    let d1 = d0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    assert!((f(&rows[1][1]) - d1).abs() < 1e-15);
    assert!((f(&rows[1][3]) + f(&rows[1][4])).abs() < 1e-15);
}

#[test]
fn unitary_channel_keeps_the_spectrum() {
    let d = TempDir::new().unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let hadamard = format!("[[[[{s}, 0], [{s}, 0]], [[{s}, 0], [-{s}, 0]]]]");
    let c = write(d.path(), "h.json", &hadamard);
    let rho = write(d.path(), "rho.json", r#"{"matrix": [[0.7, 0], [0, 0.3]]}"#);
    let out = run(&["sim", "channel", "--channel", c.to_str().unwrap(), "--x0-file", rho.to_str().unwrap(), "--steps", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header.len(), 5);
    for r in &rows {
        assert!((f(&r[3]) - 0.3).abs() < 1e-12 && (f(&r[4]) - 0.7).abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn linear_flow_bound_passes_at_h_and_fails_above() {
    let d = TempDir::new().unwrap();
    let flow = write(d.path(), "lin.json", r#"{"model": "linear", "A": [[-3, 1, 2], [1, 0, -1], [1, 1, -2]]}"#);
    let flow = flow.to_str().unwrap();
    let ok = run(&["verify", "bound", "--flow", flow, "--x0", "1,0,0.5", "--y0", "0,0.2,-1", "--alpha", "-1", "--t-end", "2"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let v = json(&ok);
    assert_eq!(v["pass"], true);
    assert!(num(&v["worst_ratio"]) <= 1.0 + 1e-6);
    assert!(v["first_violation"].is_null());

    let bad = run(&["verify", "bound", "--flow", flow, "--x0", "1,0,0.5", "--y0", "0,0.2,-1", "--alpha", "-1.5", "--t-end", "2"]);
    assert_eq!(bad.status.code(), Some(3));
    let v = json(&bad);
    assert_eq!(v["pass"], false);
    assert!(num(&v["worst_ratio"]) > 1.0);
    assert!(num(&v["first_violation"]) > 0.0);
    assert!(v["worst_location"]["time"].is_number());
}

#[test]
fn identity_channel_duality() {
    let d = TempDir::new().unwrap();
    let c = write(d.path(), "id.json", IDENTITY_CHANNEL);
    let out = run(&["verify", "duality", "--channel", c.to_str().unwrap(), "--samples", "500", "--starts", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert!((num(&v["worst_ratio"]) - 1.0).abs() < 1e-9);
}

#[test]
fn parse_errors_exit_with_one() {
    let d = TempDir::new().unwrap();
    let missing = d.path().join("missing.json");
    assert_eq!(run(&["coef", "tau", "--matrix", missing.to_str().unwrap()]).status.code(), Some(1));
    let bad = write(d.path(), "bad.json", r#"{"matrix": [[1, 0], [0, "x"]]}"#);
    let out = run(&["coef", "tau", "--matrix", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("$.matrix[1][1]"));
    let channel = write(d.path(), "c.json", "[[[[1, 0], [0, 0]], [[0, 0], [1]]]]");
    let out = run(&["coef", "qdobrushin", "--channel", channel.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["coef", "tau"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_with_two() {
    let d = TempDir::new().unwrap();
    let m = write(d.path(), "m.json", r#"{"matrix": [[1, 1], [0, 1]]}"#);
    assert_eq!(run(&["coef", "tau", "--matrix", m.to_str().unwrap()]).status.code(), Some(2));
    let c = write(d.path(), "c.json", "[[[[2, 0], [0, 0]], [[0, 0], [1, 0]]]]");
    assert_eq!(run(&["coef", "qdobrushin", "--channel", c.to_str().unwrap()]).status.code(), Some(2));
    let flow = write(d.path(), "k.json", r#"{"model": "kuramoto", "C": [[1, 1], [1, 0]]}"#);
    assert_eq!(run(&["sim", "flow", "--flow", flow.to_str().unwrap(), "--x0", "0,1"]).status.code(), Some(2));
}

#[test]
fn reports_round_trip() {
    let d = TempDir::new().unwrap();
    let c = write(d.path(), "dep.json", DEPOLARIZING);
    let report = d.path().join("r.json");
    let out = run(&["coef", "hopf", "--channel", c.to_str().unwrap(), "--starts", "4", "-o", report.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(&report).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    for key in ["value", "witness", "method", "bound_kind", "elapsed_ms", "seed", "diagnostics"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let again: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(v, again);
}

fn without_elapsed(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("elapsed_ms");
    v
}

#[test]
fn reports_are_deterministic_under_a_seed() {
    let d = TempDir::new().unwrap();
    let m = write(d.path(), "a.json", r#"{"matrix": [[2, 1, 1], [0.5, 1, 0.5], [1, 2, 3]]}"#);
    let args = ["coef", "maplip", "--matrix", m.to_str().unwrap(), "--samples", "300", "--seed", "7"];
    let a = without_elapsed(json(&run(&args)));
    let b = without_elapsed(json(&run(&args)));
    assert_eq!(a, b);
    assert_eq!(a["seed"], 7);

    // the environment overrides --seed
    let env = bin().args(args).env("CONETRACT_SEED", "8").output().unwrap();
    let e = without_elapsed(json(&env));
    assert_eq!(e["seed"], 8);
    let explicit = without_elapsed(json(&run(&["coef", "maplip", "--matrix", m.to_str().unwrap(), "--samples", "300", "--seed", "8"])));
    assert_eq!(e, explicit);

    let c = write(d.path(), "dep.json", DEPOLARIZING);
    let flow = ["sim", "channel", "--channel", c.to_str().unwrap(), "--steps", "4"];
    assert_eq!(run(&flow).stdout, run(&flow).stdout);
}
