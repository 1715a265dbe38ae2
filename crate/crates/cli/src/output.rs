//! JSON reports and CSV trajectories. Every float is written with 17
//! significant digits.

use std::io::Write;
use std::str::FromStr;

use conetract::coefficients::{CoefficientReport, OptimizerDiagnostics, Witness};
use conetract::linalg::CMatrix;
use serde_json::{json, Map, Number, Value};

use crate::CliError;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A float as a JSON number with fixed precision; non-finite values become
/// the strings `"inf"`, `"-inf"` and `"nan"`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(Number::from_str(&fmt_f64(x)).expect("formatted float is valid JSON"))
    } else if x.is_nan() {
        Value::String("nan".into())
    } else if x > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

fn complex_entries<'a>(it: impl Iterator<Item = &'a num_complex::Complex64>) -> Value {
    Value::Array(it.map(|z| json!([num(z.re), num(z.im)])).collect())
}

fn cmatrix(m: &CMatrix) -> Value {
    Value::Array((0..m.nrows()).map(|i| complex_entries(m.row(i).iter())).collect())
}

pub fn witness(w: &Witness) -> Value {
    match w {
        Witness::None => Value::Null,
        Witness::Pair(i, j) => json!({ "pair": [i, j] }),
        Witness::Vectors(u, v) => json!({ "vectors": [complex_entries(u.iter()), complex_entries(v.iter())] }),
        Witness::Point(x) => json!({ "point": x.iter().map(|v| num(*v)).collect::<Vec<_>>() }),
        Witness::Matrix(h) => json!({ "matrix": cmatrix(h.as_matrix()) }),
    }
}

fn diagnostics(d: &OptimizerDiagnostics) -> Value {
    json!({
        "starts": d.starts,
        "best_start": d.best_start,
        "sweeps": d.sweeps,
        "converged_starts": d.converged_starts,
        "evaluations": d.evaluations,
        "runner_up": num(d.runner_up),
    })
}

/// `{value, witness, method, bound_kind, elapsed_ms, seed}` plus optimizer
/// diagnostics when present.
pub fn coefficient_report(r: &CoefficientReport, elapsed_ms: u128, seed: u64) -> Value {
    let mut m = Map::new();
    m.insert("value".into(), num(r.value));
    m.insert("witness".into(), witness(&r.witness));
    m.insert("method".into(), Value::String(r.method.name().into()));
    m.insert("bound_kind".into(), Value::String(r.bound_kind.name().into()));
    m.insert("elapsed_ms".into(), json!(elapsed_ms as u64));
    m.insert("seed".into(), json!(seed));
    if let Some(d) = &r.diagnostics {
        m.insert("diagnostics".into(), diagnostics(d));
    }
    Value::Object(m)
}

pub fn write_json(out: &mut dyn Write, v: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::Io(e.to_string()))
}

/// One CSV row: `t, metric, bound, state columns...`; a missing bound is an
/// empty field.
pub struct CsvRow<'a> {
    pub t: f64,
    pub metric: f64,
    pub bound: Option<f64>,
    pub state: &'a [f64],
}

pub fn write_csv<'a>(out: &mut dyn Write, width: usize, rows: impl Iterator<Item = CsvRow<'a>>) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    let mut header = vec!["t".to_string(), "metric".into(), "bound".into()];
    header.extend((0..width).map(|i| format!("state_{i}")));
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![fmt_f64(r.t), fmt_f64(r.metric), r.bound.map(fmt_f64).unwrap_or_default()];
        rec.extend(r.state.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}
