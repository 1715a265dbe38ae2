//! Discrete-time consensus `x_{k+1} = T_{k+1} x_k` with row-stochastic `T_k`.

use nalgebra::{DMatrix, DVector};

use crate::cone::{oscillation, RealVector};
use crate::coefficients::dobrushin_tau;
use crate::error::{Error, Result};
use crate::trajectory::{MetricKind, StopReason, Trajectory};

/// Row sums must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Entries in `(-CLIP_TOL, 0)` are treated as zero.
pub const CLIP_TOL: f64 = 1e-12;

const PI_CHANGE_TOL: f64 = 1e-13;
const PI_MAX_ITER: usize = 10_000_000;
const CERTIFICATE_SLACK: f64 = 1e-9;
/// Bounds below this fraction of `|x0|_inf` are below double-precision noise
/// and are not recorded.
pub const CERTIFICATE_FLOOR: f64 = 1e-9;

/// Checks that `a` is square, finite, has entries `>= -1e-12` and rows
/// summing to `1 +- 1e-10`. Reports the first offending row.
pub fn validate_stochastic(a: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Dimension { expected: n.max(1), found: a.ncols() });
    }
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() {
                return Err(Error::NotStochastic { row: i, detail: format!("entry {j} is not finite") });
            }
            if v < -CLIP_TOL {
                return Err(Error::NotStochastic { row: i, detail: format!("entry {j} is negative ({v:e})") });
            }
        }
        let s = a.row(i).sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotStochastic { row: i, detail: format!("row sums to {s}") });
        }
    }
    Ok(())
}

/// Validated copy of `a` with tiny negative entries clipped and rows rescaled
/// to sum to one.
pub(crate) fn normalized_stochastic(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    validate_stochastic(a)?;
    let mut out = a.map(|v| v.max(0.0));
    renormalize_rows(&mut out);
    Ok(out)
}

fn renormalize_rows(a: &mut DMatrix<f64>) {
    for i in 0..a.nrows() {
        let s = a.row(i).sum();
        for j in 0..a.ncols() {
            a[(i, j)] /= s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceMode {
    /// A single matrix used at every step.
    Constant,
    /// The matrices repeat cyclically.
    Periodic,
    /// The matrices are used once each, in order.
    ExplicitFinite,
}

/// The sequence `T_1, T_2, ...` of a time-dependent consensus system.
#[derive(Debug, Clone)]
pub struct StochasticSequence {
    matrices: Vec<DMatrix<f64>>,
    mode: SequenceMode,
}

impl StochasticSequence {
    pub fn new(matrices: Vec<DMatrix<f64>>, mode: SequenceMode) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::Precondition("a stochastic sequence needs at least one matrix".into()));
        }
        if mode == SequenceMode::Constant && matrices.len() != 1 {
            return Err(Error::Precondition("constant mode takes exactly one matrix".into()));
        }
        let n = matrices[0].nrows();
        let matrices = matrices
            .iter()
            .map(|m| {
                if m.nrows() != n {
                    return Err(Error::Dimension { expected: n, found: m.nrows() });
                }
                normalized_stochastic(m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StochasticSequence { matrices, mode })
    }

    pub fn constant(a: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![a], SequenceMode::Constant)
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn mode(&self) -> SequenceMode {
        self.mode
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// `T_{k+1}`, the matrix applied at step `k` (zero-based), if defined.
    pub fn step_matrix(&self, k: usize) -> Option<&DMatrix<f64>> {
        match self.mode {
            SequenceMode::Constant => Some(&self.matrices[0]),
            SequenceMode::Periodic => Some(&self.matrices[k % self.matrices.len()]),
            SequenceMode::ExplicitFinite => self.matrices.get(k),
        }
    }
}

/// Runs `steps` consensus steps from `x0`, recording the oscillation of each state.
pub fn iterate(seq: &StochasticSequence, x0: &RealVector, steps: usize) -> Result<Trajectory<DVector<f64>>> {
    if x0.len() != seq.dim() {
        return Err(Error::Dimension { expected: seq.dim(), found: x0.len() });
    }
    if seq.mode == SequenceMode::ExplicitFinite && steps > seq.matrices.len() {
        return Err(Error::Precondition(format!(
            "{steps} steps requested but the sequence has {} matrices",
            seq.matrices.len()
        )));
    }
    let mut x = x0.as_dvector().clone();
    let mut traj = Trajectory {
        times: vec![0.0],
        metric: vec![oscillation(x.as_slice())],
        states: vec![x.clone()],
        metric_kind: MetricKind::Oscillation,
        stop: StopReason::Completed,
        error_estimate: None,
    };
    for k in 0..steps {
        let t = seq.step_matrix(k).expect("checked above");
        x = t * x;
        traj.times.push((k + 1) as f64);
        traj.metric.push(oscillation(x.as_slice()));
        traj.states.push(x.clone());
    }
    Ok(traj)
}

/// Invariant probability `pi` of `a` (`pi A = pi`), by power iteration on
/// `A^T` from the uniform vector until the sup-norm change drops below 1e-13.
pub fn stationary_distribution(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(stationary_with_change(&normalized_stochastic(a)?)?.0)
}

fn stationary_with_change(a: &DMatrix<f64>) -> Result<(DVector<f64>, f64, usize)> {
    let n = a.nrows();
    let at = a.transpose();
    let mut mu = DVector::from_element(n, 1.0 / n as f64);
    for it in 1..=PI_MAX_ITER {
        let next = &at * &mu;
        let change = (&next - &mu).amax();
        let l1_change = (&next - &mu).lp_norm(1);
        mu = next;
        if change < PI_CHANGE_TOL {
            let s = mu.sum();
            mu /= s;
            return Ok((mu, l1_change, it));
        }
    }
    Err(Error::Precondition("power iteration for the invariant measure did not converge".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRecord {
    pub k: usize,
    /// `|A^k x0 - <pi, x0> 1|_inf`
    pub lhs: f64,
    /// `tau^k osc(x0)`
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusCertificate {
    pub tau: f64,
    pub pi: DVector<f64>,
    pub records: Vec<BoundRecord>,
    /// First `k` not recorded: `tau^k osc(x0)` fell below the floating-point
    /// floor `1e-9 |x0|_inf` and rounding noise exceeded it.
    pub truncated_at: Option<usize>,
    pub power_iterations: usize,
}

/// Geometric convergence to consensus: extracts `pi` and records
/// `|A^k x0 - <pi, x0> 1|_inf <= tau^k osc(x0)` for `k = 0..=steps`.
///
/// Refuses when `tau(A) >= 1`.
pub fn consensus_certificate(a: &DMatrix<f64>, x0: &RealVector, steps: usize) -> Result<ConsensusCertificate> {
    let a = normalized_stochastic(a)?;
    let n = a.nrows();
    if x0.len() != n {
        return Err(Error::Dimension { expected: n, found: x0.len() });
    }
    let tau = dobrushin_tau(&a)?.value;
    if tau >= 1.0 {
        return Err(Error::Precondition(format!(
            "ergodicity coefficient is {tau}; no contraction certificate is available"
        )));
    }
    let (pi, _, power_iterations) = stationary_with_change(&a)?;
    let x0v = x0.as_dvector();
    let osc0 = oscillation(x0v.as_slice());
    let floor = CERTIFICATE_FLOOR * x0v.amax();
    let mean = pi.dot(x0v);
    // A^k x0 - <pi,x0> 1 = A^k (x0 - <pi,x0> 1) because A 1 = 1
    let mut y = x0v.map(|v| v - mean);
    let mut records = Vec::new();
    let mut truncated_at = None;
    for k in 0..=steps {
        let rhs = tau.powi(k as i32) * osc0;
        let lhs = y.amax();
        let holds = lhs <= rhs * (1.0 + CERTIFICATE_SLACK);
        if rhs < floor && !holds {
            // below the floor the comparison is dominated by rounding
            truncated_at = Some(k);
            break;
        }
        if !holds {
            return Err(Error::Consistency(format!(
                "bound violated at k = {k}: {lhs:e} > {rhs:e}"
            )));
        }
        records.push(BoundRecord { k, lhs, rhs });
        y = &a * y;
    }
    Ok(ConsensusCertificate { tau, pi, records, truncated_at, power_iterations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub p: usize,
    /// `tau(T_{i+p} ... T_{i+1})` for each window start `i`.
    pub taus: Vec<f64>,
    /// Largest window coefficient when every window contracts.
    pub alpha: Option<f64>,
}

impl WindowReport {
    /// `alpha^floor(k / p)`, a bound on `osc(x_k) / osc(x_0)`.
    pub fn decay_bound(&self, k: usize) -> Option<f64> {
        self.alpha.map(|a| a.powi((k / self.p) as i32))
    }
}

/// Ergodicity coefficients of the length-`p` window products of a sequence.
pub fn window_coefficient(seq: &StochasticSequence, p: usize) -> Result<WindowReport> {
    if p == 0 {
        return Err(Error::Precondition("window length must be at least 1".into()));
    }
    let len = seq.matrices.len();
    let starts = match seq.mode {
        SequenceMode::Constant => 1,
        SequenceMode::Periodic => len,
        SequenceMode::ExplicitFinite => {
            if p > len {
                return Err(Error::Precondition(format!(
                    "window length {p} exceeds the sequence length {len}"
                )));
            }
            len - p + 1
        }
    };
    let mut taus = Vec::with_capacity(starts);
    for i in 0..starts {
        let mut prod = seq.step_matrix(i).unwrap().clone();
        for j in 1..p {
            prod = seq.step_matrix(i + j).unwrap() * prod;
            let drift = (0..prod.nrows()).map(|r| (prod.row(r).sum() - 1.0).abs()).fold(0.0, f64::max);
            if drift > CLIP_TOL {
                renormalize_rows(&mut prod);
            }
        }
        taus.push(dobrushin_tau(&prod)?.value);
    }
    let max = taus.iter().copied().fold(0.0, f64::max);
    let alpha = (max < 1.0).then_some(max);
    Ok(WindowReport { p, taus, alpha })
}

/// Smallest column `j` with `A_ij > 0` for every row, if any. Such a column
/// forces `tau(A) <= 1 - min_i A_ij`, which is checked.
pub fn doeblin_detect(a: &DMatrix<f64>) -> Result<Option<usize>> {
    let a = normalized_stochastic(a)?;
    let n = a.nrows();
    let Some(j) = (0..n).find(|&j| (0..n).all(|i| a[(i, j)] > 0.0)) else {
        return Ok(None);
    };
    let min = (0..n).map(|i| a[(i, j)]).fold(f64::INFINITY, f64::min);
    let tau = dobrushin_tau(&a)?.value;
    if tau > 1.0 - min + 1e-12 {
        return Err(Error::Consistency(format!(
            "column {j} is positive but tau = {tau} exceeds 1 - {min}"
        )));
    }
    Ok(Some(j))
}
