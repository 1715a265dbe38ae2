//! Input files: matrices, Kraus channels, flow descriptions and states.

use std::fs;
use std::path::Path;

use conetract::flows::{riccati_setup, VectorFieldSpec};
use conetract::linalg::CMatrix;
use conetract::quantum::{kraus_from_value, KrausChannel};
use conetract::HermitianMatrix;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde_json::Value;

use crate::CliError;

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: $: {e}", path.display())))
}

fn at(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Parse(format!("{path}: {msg}"))
}

fn number(v: &Value, path: &str) -> Result<f64, CliError> {
    v.as_f64().ok_or_else(|| at(path, "expected a number"))
}

/// A square real matrix given as a list of rows.
pub fn real_matrix(v: &Value, path: &str) -> Result<DMatrix<f64>, CliError> {
    let rows = v.as_array().ok_or_else(|| at(path, "expected a list of rows"))?;
    let n = rows.len();
    if n == 0 {
        return Err(at(path, "matrix is empty"));
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let rp = format!("{path}[{i}]");
        let entries = row.as_array().ok_or_else(|| at(&rp, "expected a row"))?;
        if entries.len() != n {
            return Err(at(&rp, format!("expected {n} entries, found {}", entries.len())));
        }
        for (j, e) in entries.iter().enumerate() {
            m[(i, j)] = number(e, &format!("{rp}[{j}]"))?;
        }
    }
    Ok(m)
}

/// A square complex matrix whose entries are numbers or `[re, im]` pairs.
pub fn complex_matrix(v: &Value, path: &str) -> Result<CMatrix, CliError> {
    let rows = v.as_array().ok_or_else(|| at(path, "expected a list of rows"))?;
    let n = rows.len();
    if n == 0 {
        return Err(at(path, "matrix is empty"));
    }
    let mut m = CMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let rp = format!("{path}[{i}]");
        let entries = row.as_array().ok_or_else(|| at(&rp, "expected a row"))?;
        if entries.len() != n {
            return Err(at(&rp, format!("expected {n} entries, found {}", entries.len())));
        }
        for (j, e) in entries.iter().enumerate() {
            let ep = format!("{rp}[{j}]");
            m[(i, j)] = match e {
                Value::Array(pair) if pair.len() == 2 => {
                    Complex64::new(number(&pair[0], &format!("{ep}[0]"))?, number(&pair[1], &format!("{ep}[1]"))?)
                }
                Value::Number(_) => Complex64::new(number(e, &ep)?, 0.0),
                _ => return Err(at(&ep, "expected a number or a [re, im] pair")),
            };
        }
    }
    Ok(m)
}

fn field<'a>(obj: &'a Value, key: &str) -> Result<&'a Value, CliError> {
    obj.get(key).ok_or_else(|| at("$", format!("missing field '{key}'")))
}

/// `{"matrix": [[...], ...]}`
pub fn matrix_file(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let v = read_json(path)?;
    real_matrix(field(&v, "matrix")?, "$.matrix").map_err(|e| e.in_file(path))
}

/// `{"matrix": ...}` with real or `[re, im]` entries, read as a Hermitian matrix.
pub fn hermitian_file(path: &Path) -> Result<HermitianMatrix, CliError> {
    let v = read_json(path)?;
    let m = complex_matrix(field(&v, "matrix")?, "$.matrix").map_err(|e| e.in_file(path))?;
    Ok(HermitianMatrix::new(m)?)
}

/// A JSON list of Kraus operators.
pub fn channel_file(path: &Path) -> Result<KrausChannel, CliError> {
    let v = read_json(path)?;
    let ops = kraus_from_value(&v).map_err(|e| CliError::from(e).in_file(path))?;
    Ok(KrausChannel::new(ops)?)
}

/// A flow description tagged by `model`:
/// `kuramoto`/`arctan` with `C`, `plaplacian` with `C` and `p`, `linear`
/// with `A`, `riccati` with `A`, `B`, `C` (or `B`, `C`, `lambda0`), and
/// `custom` with `name` and `n`.
pub fn flow_file(path: &Path) -> Result<VectorFieldSpec, CliError> {
    let v = read_json(path)?;
    flow_value(&v).map_err(|e| e.in_file(path))
}

pub fn flow_value(v: &Value) -> Result<VectorFieldSpec, CliError> {
    let model = field(v, "model")?.as_str().ok_or_else(|| at("$.model", "expected a string"))?;
    let mat = |key: &str| real_matrix(field(v, key)?, &format!("$.{key}"));
    Ok(match model {
        "kuramoto" => VectorFieldSpec::kuramoto(mat("C")?)?,
        "arctan" => VectorFieldSpec::arctan(mat("C")?)?,
        "plaplacian" => VectorFieldSpec::plaplacian(mat("C")?, number(field(v, "p")?, "$.p")?)?,
        "linear" => VectorFieldSpec::linear(mat("A")?)?,
        "riccati" => match v.get("lambda0") {
            Some(l) => riccati_setup(mat("B")?, mat("C")?, number(l, "$.lambda0")?)?,
            None => VectorFieldSpec::riccati(mat("A")?, mat("B")?, mat("C")?)?,
        },
        "custom" => {
            let name = field(v, "name")?.as_str().ok_or_else(|| at("$.name", "expected a string"))?;
            let n = field(v, "n")?.as_u64().ok_or_else(|| at("$.n", "expected a positive integer"))?;
            VectorFieldSpec::named_custom(name, n as usize)?
        }
        other => return Err(at("$.model", format!("unknown model '{other}'"))),
    })
}

/// Comma-separated coordinates, e.g. `0.3,-0.3`.
pub fn vector_arg(s: &str) -> Result<DVector<f64>, CliError> {
    let vals = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| CliError::Parse(format!("bad coordinate '{t}': {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DVector::from_vec(vals))
}
