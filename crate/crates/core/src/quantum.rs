//! Unital Kraus channels `Phi(X) = sum V_i^* X V_i`, their trace-preserving
//! adjoints `Psi(X) = sum V_i X V_i^*`, and consensus on density matrices.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use crate::coefficients::{
    noncommutative_dobrushin, BoundKind, CoefficientReport, HermitianLinearMap, Method,
    OptimizerOptions, Witness,
};
use crate::cone::HermitianMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::sampling::parallel_argmax;
use crate::trajectory::{MetricKind, StopReason, Trajectory};

/// Tolerance on `|sum V_i^* V_i - I|` (Frobenius).
pub const UNITAL_TOL: f64 = 1e-9;
/// Tolerance on the trace of a density matrix.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of a density matrix.
pub const PSD_TOL: f64 = 1e-12;

const REFUSE_MARGIN: f64 = 1e-9;
const FIXED_POINT_MAX_ITER: usize = 10_000_000;
const CERTIFICATE_MAX_K: usize = 1000;

#[derive(Debug, Clone)]
pub struct KrausChannel {
    ops: Vec<CMatrix>,
}

impl KrausChannel {
    /// Validates shapes, finiteness and unitality `sum V_i^* V_i = I`.
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        let n = ops.first().map(|v| v.nrows()).unwrap_or(0);
        if n == 0 {
            return Err(Error::Precondition("at least one Kraus operator is required".into()));
        }
        for v in &ops {
            if v.nrows() != n || v.ncols() != n {
                return Err(Error::Dimension { expected: n, found: v.nrows().max(v.ncols()) });
            }
            if let Some(i) = v.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite(i));
            }
        }
        let ch = KrausChannel { ops };
        let defect = ch.unitality_defect();
        if defect > UNITAL_TOL {
            return Err(Error::NotUnital(defect));
        }
        Ok(ch)
    }

    /// Single unitary Kraus operator: `Phi(X) = U^* X U`.
    pub fn unitary(u: CMatrix) -> Result<Self> {
        Self::new(vec![u])
    }

    /// The completely depolarizing channel `Phi(X) = tr(X) I / n`, with Kraus
    /// operators `|i><j| / sqrt(n)`.
    pub fn constant(n: usize) -> Self {
        let s = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
        let mut ops = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut v = CMatrix::zeros(n, n);
                v[(i, j)] = s;
                ops.push(v);
            }
        }
        KrausChannel { ops }
    }

    /// Random unital channel: Gaussian operators `G_i` normalized as
    /// `V_i = G_i S^{-1/2}` with `S = sum G_i^* G_i`.
    pub fn random_unital<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Self {
        let g: Vec<CMatrix> = (0..m)
            .map(|_| {
                CMatrix::from_fn(n, n, |_, _| {
                    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                })
            })
            .collect();
        let s = g.iter().fold(CMatrix::zeros(n, n), |acc, v| acc + v.adjoint() * v);
        let inv_sqrt = linalg::hermitian_eigen(&s).map(|l| 1.0 / l.sqrt());
        KrausChannel { ops: g.into_iter().map(|v| v * &inv_sqrt).collect() }
    }

    pub fn dim(&self) -> usize {
        self.ops[0].nrows()
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    /// `|sum V_i^* V_i - I|_F`.
    pub fn unitality_defect(&self) -> f64 {
        let n = self.dim();
        let s = self.ops.iter().fold(CMatrix::zeros(n, n), |acc, v| acc + v.adjoint() * v);
        (s - CMatrix::identity(n, n)).norm()
    }

    /// `|sum V_i V_i^* - I|_F`; zero exactly when `Phi` is also trace preserving.
    pub fn trace_preservation_defect(&self) -> f64 {
        let n = self.dim();
        let s = self.ops.iter().fold(CMatrix::zeros(n, n), |acc, v| acc + v * v.adjoint());
        (s - CMatrix::identity(n, n)).norm()
    }

    /// `Phi` as a linear map on Hermitian matrices.
    pub fn phi_map(&self) -> HermitianLinearMap {
        HermitianLinearMap::from_kraus(&self.ops).expect("shapes validated at construction")
    }

    fn check_dim(&self, x: &HermitianMatrix) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), found: x.dim() });
        }
        Ok(())
    }

    /// `Phi(X) = sum V_i^* X V_i`.
    pub fn apply_phi(&self, x: &HermitianMatrix) -> Result<HermitianMatrix> {
        self.check_dim(x)?;
        let m = x.as_matrix();
        let out = self.ops.iter().fold(CMatrix::zeros(self.dim(), self.dim()), |acc, v| acc + v.adjoint() * m * v);
        Ok(HermitianMatrix::hermitian_part(&out))
    }

    /// `Psi(X) = sum V_i X V_i^*`.
    pub fn apply_psi(&self, x: &HermitianMatrix) -> Result<HermitianMatrix> {
        self.check_dim(x)?;
        let m = x.as_matrix();
        let out = self.ops.iter().fold(CMatrix::zeros(self.dim(), self.dim()), |acc, v| acc + v * m * v.adjoint());
        Ok(HermitianMatrix::hermitian_part(&out))
    }

    fn psi_density(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(self.apply_psi(&rho.0).expect("dimension checked by caller"))
    }
}

/// Parses a channel from JSON: a list of matrices, each a list of rows, each
/// entry a `[re, im]` pair. Errors cite the JSON path of the offending value.
pub fn parse_kraus_json(text: &str) -> Result<KrausChannel> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::parse("$", e.to_string()))?;
    KrausChannel::new(kraus_from_value(&value)?)
}

/// Kraus operators from a parsed JSON document (no unitality check).
pub fn kraus_from_value(value: &Value) -> Result<Vec<CMatrix>> {
    let list = value.as_array().ok_or_else(|| Error::parse("$", "expected a list of matrices"))?;
    if list.is_empty() {
        return Err(Error::parse("$", "expected at least one Kraus operator"));
    }
    let mut ops = Vec::with_capacity(list.len());
    let mut n = None;
    for (k, mat) in list.iter().enumerate() {
        let path = format!("$[{k}]");
        let rows = mat.as_array().ok_or_else(|| Error::parse(&path, "expected a list of rows"))?;
        let size = *n.get_or_insert(rows.len());
        if rows.len() != size || size == 0 {
            return Err(Error::parse(&path, format!("expected {size} rows, found {}", rows.len())));
        }
        let mut m = CMatrix::zeros(size, size);
        for (i, row) in rows.iter().enumerate() {
            let path = format!("$[{k}][{i}]");
            let entries = row.as_array().ok_or_else(|| Error::parse(&path, "expected a row of entries"))?;
            if entries.len() != size {
                return Err(Error::parse(&path, format!("expected {size} entries, found {}", entries.len())));
            }
            for (j, e) in entries.iter().enumerate() {
                let path = format!("$[{k}][{i}][{j}]");
                let pair = e
                    .as_array()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| Error::parse(&path, "expected a [re, im] pair"))?;
                let re = pair[0].as_f64().ok_or_else(|| Error::parse(format!("{path}[0]"), "expected a number"))?;
                let im = pair[1].as_f64().ok_or_else(|| Error::parse(format!("{path}[1]"), "expected a number"))?;
                m[(i, j)] = Complex64::new(re, im);
            }
        }
        ops.push(m);
    }
    Ok(ops)
}

/// Positive semidefinite Hermitian matrix of unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(HermitianMatrix);

impl DensityMatrix {
    /// Validates `tr = 1 +- 1e-10` and eigenvalues `>= -1e-12`.
    pub fn new(x: HermitianMatrix) -> Result<Self> {
        let tr = x.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::domain(format!("density matrix must have unit trace, got {tr}")));
        }
        let min = x.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(Error::domain(format!("density matrix has negative eigenvalue {min:e}")));
        }
        Ok(DensityMatrix(x))
    }

    pub fn maximally_mixed(n: usize) -> Self {
        DensityMatrix(HermitianMatrix::identity(n).scale(1.0 / n as f64))
    }

    /// `u u^* / |u|^2`.
    pub fn pure(u: &CVector) -> Self {
        let norm = u.norm();
        DensityMatrix(HermitianMatrix::projector(&(u / Complex64::new(norm, 0.0))))
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.0
    }

    pub fn into_hermitian(self) -> HermitianMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// `rho_k = Psi^k(rho_0)`; the metric column is `|rho_{k+1} - rho_k|_1`.
pub fn iterate_channel(ch: &KrausChannel, rho0: &DensityMatrix, steps: usize) -> Result<Trajectory<HermitianMatrix>> {
    ch.check_dim(&rho0.0)?;
    let mut rho = rho0.clone();
    let mut next = ch.psi_density(&rho);
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        metric: Vec::with_capacity(steps + 1),
        metric_kind: MetricKind::TraceDistanceStep,
        stop: StopReason::Completed,
        error_estimate: None,
    };
    for k in 0..=steps {
        traj.times.push(k as f64);
        traj.metric.push(linalg::trace_norm(next.0.sub(&rho.0).as_matrix()));
        traj.states.push(rho.0.clone());
        rho = next;
        next = ch.psi_density(&rho);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecord {
    /// Index of the test state (`e_j e_j^*`).
    pub state: usize,
    pub k: usize,
    /// `|Psi^k(rho_0) - pi|_1`
    pub lhs: f64,
    /// `2 coef^k`
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCertificate {
    /// Noncommutative Dobrushin coefficient used in the envelope.
    pub coefficient: f64,
    /// `|Psi(pi) - pi|_1` at the returned fixed point.
    pub residual: f64,
    pub iterations: usize,
    pub records: Vec<ChannelRecord>,
}

/// Fixed point of `Psi` by power iteration from `I/n` until the trace-norm
/// change is below `tol`, with decay records `|Psi^k(rho_0) - pi|_1 <= 2 coef^k`
/// for the basis states `rho_0 = e_j e_j^*`. Refuses when the coefficient is
/// `>= 1 - 1e-9`.
pub fn channel_fixed_point(
    ch: &KrausChannel,
    tol: f64,
    opts: &OptimizerOptions,
) -> Result<(DensityMatrix, ChannelCertificate)> {
    if !(tol > 0.0) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let coef = noncommutative_dobrushin(ch, opts)?.value;
    if coef >= 1.0 - REFUSE_MARGIN {
        return Err(Error::Precondition(format!(
            "noncommutative ergodicity coefficient is {coef}; no contraction certificate is available"
        )));
    }
    let n = ch.dim();
    let mut rho = DensityMatrix::maximally_mixed(n);
    let mut iterations = 0;
    loop {
        let next = ch.psi_density(&rho);
        let change = linalg::trace_norm(next.0.sub(&rho.0).as_matrix());
        rho = next;
        iterations += 1;
        if change < tol {
            break;
        }
        if iterations >= FIXED_POINT_MAX_ITER {
            return Err(Error::Precondition("fixed-point iteration did not converge".into()));
        }
    }
    let residual = linalg::trace_norm(ch.psi_density(&rho).0.sub(&rho.0).as_matrix());
    // distance of the iterate to the true fixed point is at most this
    let pi_err = tol * coef / (1.0 - coef);
    let floor = (100.0 * pi_err).max(1e-12);
    let mut records = Vec::new();
    for j in 0..n {
        let mut e = CVector::zeros(n);
        e[j] = Complex64::new(1.0, 0.0);
        let mut state = DensityMatrix::pure(&e);
        for k in 0..=CERTIFICATE_MAX_K {
            let rhs = 2.0 * coef.powi(k as i32);
            if rhs < floor {
                break;
            }
            let lhs = linalg::trace_norm(state.0.sub(&rho.0).as_matrix());
            records.push(ChannelRecord { state: j, k, lhs, rhs });
            state = ch.psi_density(&state);
        }
    }
    Ok((rho, ChannelCertificate { coefficient: coef, residual, iterations, records }))
}

/// Sampled supremum of `|Psi(rho_1) - Psi(rho_2)|_1 / |rho_1 - rho_2|_1` over
/// pairs of Haar-random pure states; every odd-indexed pair is made
/// orthogonal. The value is a lower bound of the noncommutative coefficient.
pub fn sample_dual_ratio(ch: &KrausChannel, samples: usize, seed: u64) -> Result<CoefficientReport> {
    if samples < 1 {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let n = ch.dim();
    if n < 2 {
        return Ok(CoefficientReport::exact(0.0, Witness::None));
    }
    let best = parallel_argmax(samples, seed, |rng, idx| {
        let u = linalg::random_unit_vector(n, rng);
        let mut v = linalg::random_unit_vector(n, rng);
        if idx % 2 == 1 {
            v -= &u * u.dotc(&v);
            let norm = v.norm();
            if norm < 1e-8 {
                return Ok::<_, Error>(None);
            }
            v /= Complex64::new(norm, 0.0);
        }
        let (p, q) = (DensityMatrix::pure(&u), DensityMatrix::pure(&v));
        let den = linalg::trace_norm(p.0.sub(&q.0).as_matrix());
        if den < 1e-8 {
            return Ok(None);
        }
        let num = linalg::trace_norm(ch.psi_density(&p).0.sub(&ch.psi_density(&q).0).as_matrix());
        Ok(Some((num / den, (u, v))))
    })?;
    let Some((value, _, (u, v))) = best else {
        return Ok(CoefficientReport::exact(0.0, Witness::None));
    };
    Ok(CoefficientReport {
        value,
        witness: Witness::Vectors(u, v),
        method: Method::Sampled,
        bound_kind: BoundKind::Lower,
        diagnostics: None,
    })
}

/// Sampled supremum of `osc(Phi(X)) / osc(X)` over Hermitian `X`, with
/// spectral oscillation `osc`. Even-indexed samples are random projectors of
/// rank `1..n-1` (the extreme points of the oscillation unit ball modulo `I`),
/// odd ones Gaussian Hermitian matrices. A lower bound of the coefficient.
pub fn sample_hopf_ratio(ch: &KrausChannel, samples: usize, seed: u64) -> Result<CoefficientReport> {
    if samples < 1 {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let n = ch.dim();
    if n < 2 {
        return Ok(CoefficientReport::exact(0.0, Witness::None));
    }
    let best = parallel_argmax(samples, seed, |rng, idx| {
        let x = if idx % 2 == 0 {
            let u = linalg::random_unitary(n, rng);
            let rank = rng.random_range(1..n);
            let cols = u.columns(0, rank);
            HermitianMatrix::hermitian_part(&(&cols * cols.adjoint()))
        } else {
            let g = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            HermitianMatrix::hermitian_part(&g)
        };
        let den = crate::cone::hopf_oscillation(&x);
        if den < 1e-8 {
            return Ok::<_, Error>(None);
        }
        let num = crate::cone::hopf_oscillation(&ch.apply_phi(&x)?);
        Ok(Some((num / den, x)))
    })?;
    let Some((value, _, x)) = best else {
        return Ok(CoefficientReport::exact(0.0, Witness::None));
    };
    Ok(CoefficientReport {
        value,
        witness: Witness::Matrix(x),
        method: Method::Sampled,
        bound_kind: BoundKind::Lower,
        diagnostics: None,
    })
}
