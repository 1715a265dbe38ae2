//! Contraction-rate certificates of flows and empirical checks of the
//! resulting exponential envelopes.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use super::{FlowTrajectory, Model, VectorFieldSpec};
use crate::coefficients::{
    h_hermitian_map, h_matrix, BoundKind, HermitianLinearMap, Method, OptimizerOptions, Witness,
};
use crate::cone::{self, HermitianMatrix, RealVector};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::sampling::{parallel_argmax, HilbertBallSampler, LogBoxSampler, OscillationSampler, Sampler};
use crate::trajectory::MetricKind;

/// Relative slack of [`verify_decay`].
pub const DECAY_SLACK: f64 = 1e-6;
/// Relative tolerance of the numerical homogeneity check.
pub const HOMOGENEITY_TOL: f64 = 1e-8;
/// Tolerance on `A 1 = 0` and on translation invariance of custom fields.
pub const INVARIANCE_TOL: f64 = 1e-9;
/// A sampled rate may exceed its closed-form bound by at most this much.
pub const CLOSED_FORM_TOL: f64 = 1e-9;
/// Same for the Riccati bound, whose left side comes from the optimizer.
pub const RICCATI_BOUND_TOL: f64 = 1e-6;
/// Tolerance on `-B / tr(C) + A + A^T = lambda0 I`.
pub const SCALAR_REFERENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RateCertificate {
    pub alpha: f64,
    /// Description of the sampled domain.
    pub sampler: String,
    pub samples: usize,
    /// Sample point at which `alpha` was attained.
    pub witness: Witness,
    pub method: Method,
    pub bound_kind: BoundKind,
    /// Closed-form rate for the model on the same domain, when known.
    pub closed_form: Option<f64>,
}

/// `h(D phi(x))`, the Hopf-seminorm rate at `x`.
pub fn hopf_rate_at(spec: &VectorFieldSpec, x: &DVector<f64>) -> Result<f64> {
    Ok(h_matrix(&spec.jacobian_vector(x)?)?.value)
}

fn check_translation_invariant(spec: &VectorFieldSpec, w: f64, seed: u64) -> Result<()> {
    match spec.model() {
        Model::Kuramoto { .. } | Model::Arctan { .. } | Model::PLaplacian { .. } => Ok(()),
        Model::Linear { a } => {
            let defect = a.column_sum().amax();
            if defect > INVARIANCE_TOL * a.amax().max(1.0) {
                return Err(Error::domain(format!("linear field needs A 1 = 0, row sums deviate by {defect:e}")));
            }
            Ok(())
        }
        Model::Custom(_) => {
            let sampler = OscillationSampler { n: spec.dim(), w };
            let mut rng = crate::sampling::stream_rng(seed, u64::MAX);
            for _ in 0..8 {
                let x = sampler.sample(&mut rng);
                let fx = spec.field_vector(&x)?;
                let shifted = spec.field_vector(&x.add_scalar(1.0))?;
                let defect = (&shifted - &fx).amax();
                if defect > INVARIANCE_TOL * fx.amax().max(1.0) {
                    return Err(Error::domain(format!(
                        "field is not translation invariant (defect {defect:e})"
                    )));
                }
            }
            Ok(())
        }
        Model::Riccati { .. } => Err(Error::domain("Hopf rates are defined for vector models")),
    }
}

/// Sampled supremum of `h(D phi(x))` over `{x : osc(x) < w, sum x = 0}`,
/// which by translation invariance covers `{osc(x) < w}`.
///
/// For a linear field the Jacobian is constant and the rate `h(A)` is exact.
/// Kuramoto and arctan models also carry the closed forms `h(C) cos(w)`
/// (for `w < pi/2`) and `h(C) / (1 + w^2)`; the sampled value is checked
/// against them.
pub fn hopf_rate_certificate(spec: &VectorFieldSpec, w: f64, samples: usize, seed: u64) -> Result<RateCertificate> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::Precondition(format!("domain width must be positive, got {w}")));
    }
    if samples == 0 {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    check_translation_invariant(spec, w, seed)?;
    let sampler = OscillationSampler { n: spec.dim(), w };
    if let Model::Linear { a } = spec.model() {
        let alpha = h_matrix(a)?.value;
        return Ok(RateCertificate {
            alpha,
            sampler: sampler.describe(),
            samples: 0,
            witness: Witness::None,
            method: Method::ClosedForm,
            bound_kind: BoundKind::Exact,
            closed_form: Some(alpha),
        });
    }
    let best = parallel_argmax(samples, seed, |rng, _| {
        let x = sampler.sample(rng);
        match hopf_rate_at(spec, &x) {
            Ok(v) => Ok(Some((v, x))),
            // p-Laplacian guard: the point is outside the field's domain
            Err(Error::Domain(_)) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let (alpha, _, x) = best.ok_or_else(|| Error::Precondition("no sample fell inside the field's domain".into()))?;
    let closed_form = match spec.model() {
        Model::Kuramoto { c } if w < FRAC_PI_2 => Some(h_matrix(c)?.value * w.cos()),
        Model::Arctan { c } => Some(h_matrix(c)?.value / (1.0 + w * w)),
        _ => None,
    };
    if let Some(bound) = closed_form {
        if alpha > bound + CLOSED_FORM_TOL {
            return Err(Error::Consistency(format!(
                "sampled rate {alpha} exceeds the closed-form bound {bound}"
            )));
        }
    }
    Ok(RateCertificate {
        alpha,
        sampler: sampler.describe(),
        samples,
        witness: Witness::Point(x),
        method: Method::Sampled,
        bound_kind: BoundKind::Lower,
        closed_form,
    })
}

fn check_homogeneous_vector(spec: &VectorFieldSpec, x: &DVector<f64>, fx: &DVector<f64>) -> Result<()> {
    let f2 = spec.field_vector(&(x * 2.0))?;
    let defect = (&f2 - fx * 2.0).amax();
    if defect > HOMOGENEITY_TOL * (fx * 2.0).amax().max(f64::MIN_POSITIVE) {
        return Err(Error::domain(format!("field is not homogeneous of degree one (defect {defect:e})")));
    }
    Ok(())
}

/// `P^{-1/2} D phi(P)(P^{1/2} Z P^{1/2}) P^{-1/2}` as a linear map of `Z`.
pub fn riccati_conjugated_map(spec: &VectorFieldSpec, p: &HermitianMatrix) -> Result<HermitianLinearMap> {
    let jac = spec.jacobian_matrix(p)?;
    let eig = p.eigen();
    let sqrt = eig.map(f64::sqrt);
    let inv_sqrt = eig.map(|l| 1.0 / l.sqrt());
    HermitianLinearMap::from_fn(spec.dim(), |z| {
        let inner: CMatrix = &sqrt * z * &sqrt;
        &inv_sqrt * jac.apply_raw(&inner) * &inv_sqrt
    })
}

/// Hilbert-metric rate at an interior point: `h(diag(x)^-1 D phi(x) diag(x))`
/// for vector models, `h` of [`riccati_conjugated_map`] for the Riccati model
/// (a lower bound from the optimizer).
pub fn hilbert_rate_at(spec: &VectorFieldSpec, x: &super::FlowState, opts: &OptimizerOptions) -> Result<f64> {
    match x {
        super::FlowState::Vector(x) => {
            let rv = RealVector::from_dvector(x.clone())?;
            cone::check_interior(&rv)?;
            let fx = spec.field_vector(x)?;
            check_homogeneous_vector(spec, x, &fx)?;
            let jac = spec.jacobian_vector(x)?;
            let m = DMatrix::from_fn(x.len(), x.len(), |i, j| jac[(i, j)] * x[j] / x[i]);
            Ok(h_matrix(&m)?.value)
        }
        super::FlowState::Matrix(p) => {
            let fp = spec.field_matrix(p)?;
            let f2 = spec.field_matrix(&p.scale(2.0))?;
            let defect = (f2.as_matrix() - fp.as_matrix() * num_complex::Complex64::new(2.0, 0.0)).norm();
            if defect > HOMOGENEITY_TOL * (2.0 * fp.as_matrix().norm()).max(f64::MIN_POSITIVE) {
                return Err(Error::domain(format!("field is not homogeneous of degree one (defect {defect:e})")));
            }
            Ok(h_hermitian_map(&riccati_conjugated_map(spec, p)?, opts)?.value)
        }
    }
}

/// Scale-invariant sampling domains for Hilbert-metric rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HilbertDomain {
    /// Orthant points with log-coordinates in a box (see [`LogBoxSampler`]).
    LogBox { half_width: f64 },
    /// Positive definite matrices with `d_H(P, I) < radius` (see [`HilbertBallSampler`]).
    Ball { radius: f64 },
}

/// Sampled supremum of [`hilbert_rate_at`] over a scale-invariant domain.
///
/// Closed forms: a linear field with nonnegative off-diagonal entries has
/// global rate `-min_{i != j} 2 sqrt(A_ij A_ji)`; the Riccati model on the ball
/// of radius `K` has the envelope `-lambda_min(B) / (n lambda_max(C) e^K)`.
pub fn hilbert_rate_certificate(
    spec: &VectorFieldSpec,
    domain: HilbertDomain,
    samples: usize,
    seed: u64,
    opts: &OptimizerOptions,
) -> Result<RateCertificate> {
    if samples == 0 {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let n = spec.dim();
    let (alpha, witness, description, closed_form, tol) = match (domain, spec.is_matrix_model()) {
        (HilbertDomain::LogBox { half_width }, false) => {
            if !(half_width >= 0.0 && half_width.is_finite()) {
                return Err(Error::Precondition(format!("half-width must be nonnegative, got {half_width}")));
            }
            let sampler = LogBoxSampler { n, half_width };
            let best = parallel_argmax(samples, seed, |rng, _| {
                let x = sampler.sample(rng);
                let v = hilbert_rate_at(spec, &super::FlowState::Vector(x.clone()), opts)?;
                Ok::<_, Error>(Some((v, x)))
            })?;
            let (alpha, _, x) = best.expect("at least one sample");
            let closed = match spec.model() {
                Model::Linear { a } => linear_hilbert_rate(a),
                _ => None,
            };
            (alpha, Witness::Point(x), sampler.describe(), closed, CLOSED_FORM_TOL)
        }
        (HilbertDomain::Ball { radius }, true) => {
            if !(radius >= 0.0 && radius.is_finite()) {
                return Err(Error::Precondition(format!("radius must be nonnegative, got {radius}")));
            }
            let sampler = HilbertBallSampler { n, radius };
            let best = parallel_argmax(samples, seed, |rng, _| {
                let p = sampler.sample(rng);
                let v = hilbert_rate_at(spec, &super::FlowState::Matrix(p.clone()), opts)?;
                Ok::<_, Error>(Some((v, p)))
            })?;
            let (alpha, _, p) = best.expect("at least one sample");
            let closed = Some(riccati_envelope_rate(spec, radius)?);
            (alpha, Witness::Matrix(p), sampler.describe(), closed, RICCATI_BOUND_TOL)
        }
        (HilbertDomain::LogBox { .. }, true) => {
            return Err(Error::domain("matrix models need a Hilbert ball domain"));
        }
        (HilbertDomain::Ball { .. }, false) => {
            return Err(Error::domain("vector models need a log-box domain"));
        }
    };
    if let Some(bound) = closed_form {
        if alpha > bound + tol {
            return Err(Error::Consistency(format!(
                "sampled rate {alpha} exceeds the closed-form bound {bound}"
            )));
        }
    }
    Ok(RateCertificate {
        alpha,
        sampler: description,
        samples,
        witness,
        method: Method::Sampled,
        bound_kind: BoundKind::Lower,
        closed_form,
    })
}

/// `-min_{i != j} 2 sqrt(A_ij A_ji)` when every off-diagonal entry is
/// nonnegative.
fn linear_hilbert_rate(a: &DMatrix<f64>) -> Option<f64> {
    let n = a.nrows();
    let mut min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                if a[(i, j)] < 0.0 {
                    return None;
                }
                min = min.min(2.0 * (a[(i, j)] * a[(j, i)]).sqrt());
            }
        }
    }
    if n < 2 {
        return Some(0.0);
    }
    Some(-min)
}

fn riccati_parts(spec: &VectorFieldSpec) -> Result<(&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>)> {
    match spec.model() {
        Model::Riccati { a, b, c } => Ok((a, b, c)),
        _ => Err(Error::domain("not a Riccati model")),
    }
}

/// `-lambda_min(B P) / tr(C P)`, an upper bound of the Hilbert rate at `P`.
pub fn riccati_pointwise_bound(spec: &VectorFieldSpec, p: &HermitianMatrix) -> Result<f64> {
    let (_, b, c) = riccati_parts(spec)?;
    cone::check_interior(p)?;
    let sqrt = p.eigen().map(f64::sqrt);
    let bc = linalg::to_complex(b);
    let lam_min = linalg::hermitian_eigenvalues(&(&sqrt * bc * &sqrt))[0];
    let tr = linalg::trace(&(linalg::to_complex(c) * p.as_matrix())).re;
    Ok(-lam_min / tr)
}

/// `-lambda_min(B) / (n lambda_max(C) e^K)`, the Riccati rate bound on
/// `{d_H(P, I) < K}`.
pub fn riccati_envelope_rate(spec: &VectorFieldSpec, k: f64) -> Result<f64> {
    let (_, b, c) = riccati_parts(spec)?;
    let lb = b.clone().symmetric_eigenvalues().min();
    let lc = c.clone().symmetric_eigenvalues().max();
    Ok(-lb / (spec.dim() as f64 * lc * k.exp()))
}

/// `lambda0` when `-B / tr(C) + A + A^T = lambda0 I`, in which case
/// `e^{lambda0 t} I` is the solution from `I`.
pub fn riccati_scalar_rate(spec: &VectorFieldSpec) -> Result<Option<f64>> {
    let (a, b, c) = riccati_parts(spec)?;
    let n = a.nrows();
    let m = -b / c.trace() + a + a.transpose();
    let lambda0 = m.trace() / n as f64;
    let defect = (&m - DMatrix::identity(n, n) * lambda0).amax();
    Ok((defect <= SCALAR_REFERENCE_TOL * m.amax().max(1.0)).then_some(lambda0))
}

/// Riccati model with `A = B / (2 tr C) + (lambda0 / 2) I`, so that
/// [`riccati_scalar_rate`] returns `lambda0`.
pub fn riccati_setup(b: DMatrix<f64>, c: DMatrix<f64>, lambda0: f64) -> Result<VectorFieldSpec> {
    let n = b.nrows();
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension { expected: n, found: c.nrows() });
    }
    let a = &b / (2.0 * c.trace()) + DMatrix::identity(n, n) * (lambda0 / 2.0);
    VectorFieldSpec::riccati(a, b, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMetric {
    /// Hopf oscillation (spectral oscillation for matrices).
    Hopf,
    Hilbert,
}

/// What the distance `d(t)` is measured against.
#[derive(Debug, Clone, Copy)]
pub enum DecayReference<'a> {
    /// The metric column recorded by the integrator.
    Recorded,
    /// A second trajectory on the same time grid.
    Trajectory(&'a FlowTrajectory),
    /// The ray of the unit: `osc(x)` for Hopf, `d_H(x, e)` for Hilbert. For
    /// the Riccati model with a scalar reference this is the distance to
    /// `e^{lambda0 t} I`.
    ScaledIdentity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub pass: bool,
    /// Largest `d(t) / (e^{alpha t} d(0))` over the trajectory.
    pub worst_ratio: f64,
    pub worst_time: f64,
    /// First recorded time at which the envelope with slack is exceeded.
    pub first_violation: Option<f64>,
    pub points: usize,
    pub slack: f64,
}

fn pair_distance(x: &FlowTrajectory, y: &FlowTrajectory, k: usize, metric: DecayMetric) -> Result<f64> {
    match (x, y, metric) {
        (FlowTrajectory::Vector(a), FlowTrajectory::Vector(b), DecayMetric::Hopf) => {
            Ok(cone::oscillation((&a.states[k] - &b.states[k]).as_slice()))
        }
        (FlowTrajectory::Vector(a), FlowTrajectory::Vector(b), DecayMetric::Hilbert) => cone::hilbert_metric(
            &RealVector::from_dvector(a.states[k].clone())?,
            &RealVector::from_dvector(b.states[k].clone())?,
        ),
        (FlowTrajectory::Matrix(a), FlowTrajectory::Matrix(b), DecayMetric::Hopf) => {
            Ok(cone::hopf_oscillation(&a.states[k].sub(&b.states[k])))
        }
        (FlowTrajectory::Matrix(a), FlowTrajectory::Matrix(b), DecayMetric::Hilbert) => {
            cone::hilbert_metric(&a.states[k], &b.states[k])
        }
        _ => Err(Error::Precondition("trajectories live in different spaces".into())),
    }
}

fn unit_distance(x: &FlowTrajectory, k: usize, metric: DecayMetric) -> Result<f64> {
    match (x, metric) {
        (FlowTrajectory::Vector(a), DecayMetric::Hopf) => Ok(cone::oscillation(a.states[k].as_slice())),
        (FlowTrajectory::Matrix(a), DecayMetric::Hopf) => Ok(cone::hopf_oscillation(&a.states[k])),
        (FlowTrajectory::Vector(a), DecayMetric::Hilbert) => {
            let n = a.states[k].len();
            cone::hilbert_metric(&RealVector::from_dvector(a.states[k].clone())?, &RealVector::ones(n))
        }
        (FlowTrajectory::Matrix(a), DecayMetric::Hilbert) => {
            cone::hilbert_metric(&a.states[k], &HermitianMatrix::identity(a.states[k].dim()))
        }
    }
}

/// Checks `d(t) <= e^{alpha t} d(0) (1 + 1e-6)` at every recorded time.
pub fn verify_decay(
    traj: &FlowTrajectory,
    alpha: f64,
    metric: DecayMetric,
    reference: DecayReference<'_>,
) -> Result<DecayReport> {
    verify_decay_with_slack(traj, alpha, metric, reference, DECAY_SLACK)
}

pub fn verify_decay_with_slack(
    traj: &FlowTrajectory,
    alpha: f64,
    metric: DecayMetric,
    reference: DecayReference<'_>,
    slack: f64,
) -> Result<DecayReport> {
    if traj.is_empty() {
        return Err(Error::Precondition("trajectory has no recorded states".into()));
    }
    if !alpha.is_finite() || !(slack >= 0.0) {
        return Err(Error::Precondition("rate must be finite and slack nonnegative".into()));
    }
    let distances: Vec<f64> = match reference {
        DecayReference::Recorded => {
            let expected = match metric {
                DecayMetric::Hopf => MetricKind::Oscillation,
                DecayMetric::Hilbert => MetricKind::HilbertToIdentity,
            };
            if traj.metric_kind() != expected || traj.metric().len() != traj.len() {
                return Err(Error::Precondition(format!(
                    "trajectory records {} but {} is required",
                    traj.metric_kind().name(),
                    expected.name()
                )));
            }
            traj.metric().to_vec()
        }
        DecayReference::Trajectory(other) => {
            if other.len() != traj.len()
                || other.times().iter().zip(traj.times()).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
            {
                return Err(Error::Precondition("trajectories are not on the same time grid".into()));
            }
            (0..traj.len()).map(|k| pair_distance(traj, other, k, metric)).collect::<Result<_>>()?
        }
        DecayReference::ScaledIdentity => {
            (0..traj.len()).map(|k| unit_distance(traj, k, metric)).collect::<Result<_>>()?
        }
    };
    let d0 = distances[0];
    let mut report = DecayReport {
        pass: true,
        worst_ratio: 0.0,
        worst_time: 0.0,
        first_violation: None,
        points: distances.len(),
        slack,
    };
    for (t, d) in traj.times().iter().zip(&distances) {
        let envelope = (alpha * t).exp() * d0;
        let ratio = if envelope > 0.0 {
            d / envelope
        } else if *d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio > report.worst_ratio {
            report.worst_ratio = ratio;
            report.worst_time = *t;
        }
        if ratio > 1.0 + slack && report.first_violation.is_none() {
            report.first_violation = Some(*t);
            report.pass = false;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{integrate, integrate_vector, FlowState, DEFAULT_DT};
    use crate::sampling::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn ones_offdiag(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
    }

    fn example_matrix() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[-3.0, 1.0, 2.0, 1.0, 0.0, -1.0, 1.0, 1.0, -2.0])
    }

    #[test]
    fn linear_hopf_rate_is_exact() {
        let spec = VectorFieldSpec::linear(example_matrix()).unwrap();
        let cert = hopf_rate_certificate(&spec, 1.0, 10, 0).unwrap();
        assert_eq!(cert.alpha, -1.0);
        assert_eq!(cert.bound_kind, BoundKind::Exact);
        let not_invariant = VectorFieldSpec::linear(DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(hopf_rate_certificate(&not_invariant, 1.0, 10, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn kuramoto_closed_form() {
        let spec = VectorFieldSpec::kuramoto(ones_offdiag(2)).unwrap();
        let cert = hopf_rate_certificate(&spec, 0.6, 2000, 3).unwrap();
        assert_eq!(cert.closed_form, Some(-2.0 * 0.6f64.cos()));
        assert!(cert.alpha <= cert.closed_form.unwrap() + 1e-9);
        // the sup is approached at the edge of the domain
        assert!(cert.alpha > cert.closed_form.unwrap() - 1e-2);
        let Witness::Point(x) = &cert.witness else { panic!() };
        assert!((hopf_rate_at(&spec, x).unwrap() - cert.alpha).abs() < 1e-9);
    }

    #[test]
    fn arctan_closed_form_dominates_samples() {
        let spec = VectorFieldSpec::arctan(ones_offdiag(3)).unwrap();
        let w = 0.8;
        let cert = hopf_rate_certificate(&spec, w, 2000, 4).unwrap();
        let hc = -3.0;
        assert_eq!(cert.closed_form, Some(hc / (1.0 + w * w)));
        assert!(cert.alpha <= hc / (1.0 + 4.0 * w * w) + 1e-9);
        // pointwise: every Jacobian entry is at least C_ij / (1 + osc^2)
        let mut rng = stream_rng(8, 0);
        let sampler = OscillationSampler { n: 3, w };
        for _ in 0..200 {
            let x = sampler.sample(&mut rng);
            let osc = cone::oscillation(x.as_slice());
            assert!(hopf_rate_at(&spec, &x).unwrap() <= hc / (1.0 + osc * osc) + 1e-12);
        }
    }

    #[test]
    fn custom_field_invariance_check() {
        let mean_field = VectorFieldSpec::named_custom("mean-field", 3).unwrap();
        let cert = hopf_rate_certificate(&mean_field, 1.0, 100, 0).unwrap();
        // Jacobian J - I with J = ones/3
        assert!((cert.alpha + 1.0).abs() < 1e-12);
        let identity = VectorFieldSpec::named_custom("identity", 3).unwrap();
        assert!(matches!(hopf_rate_certificate(&identity, 1.0, 100, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn identity_flow_is_a_hilbert_isometry() {
        let spec = VectorFieldSpec::named_custom("identity", 3).unwrap();
        let opts = OptimizerOptions::default();
        let cert = hilbert_rate_certificate(&spec, HilbertDomain::LogBox { half_width: 2.0 }, 500, 1, &opts).unwrap();
        assert_eq!(cert.alpha, 0.0);
        let x0 = DVector::from_vec(vec![1.0, 2.0, 5.0]);
        let traj = integrate(&spec, &FlowState::Vector(x0), 1.0, 0.01).unwrap();
        let rep = verify_decay(&traj, 0.0, DecayMetric::Hilbert, DecayReference::ScaledIdentity).unwrap();
        assert!(rep.pass);
        assert!((rep.worst_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hilbert_rate_rejects_non_homogeneous_fields() {
        let spec = VectorFieldSpec::kuramoto(ones_offdiag(2)).unwrap();
        let opts = OptimizerOptions::default();
        let err = hilbert_rate_certificate(&spec, HilbertDomain::LogBox { half_width: 1.0 }, 10, 0, &opts);
        assert!(matches!(err, Err(Error::Domain(_))));
        let lin = VectorFieldSpec::linear(example_matrix()).unwrap();
        let err = hilbert_rate_certificate(&lin, HilbertDomain::Ball { radius: 1.0 }, 10, 0, &opts);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn linear_two_node_hilbert_rate_is_sharp() {
        // n = 2 has no k-terms, so the sup is attained at x2 / x1 = sqrt(a21 / a12)
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]);
        let spec = VectorFieldSpec::linear(a).unwrap();
        let opts = OptimizerOptions::default();
        let cert = hilbert_rate_certificate(&spec, HilbertDomain::LogBox { half_width: 2.0 }, 4000, 2, &opts).unwrap();
        assert_eq!(cert.closed_form, Some(-2.0));
        assert!(cert.alpha <= -2.0 + 1e-9 && cert.alpha > -2.0 - 1e-4);
    }

    #[test]
    fn example_linear_flow_pairs_decay_at_rate_minus_one() {
        let spec = VectorFieldSpec::linear(example_matrix()).unwrap();
        let mut rng = stream_rng(9, 0);
        let mut trajs = Vec::new();
        for _ in 0..2 {
            let x0 = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            trajs.push(integrate(&spec, &FlowState::Vector(x0), 3.0, DEFAULT_DT).unwrap());
        }
        let rep = verify_decay(&trajs[0], -1.0, DecayMetric::Hopf, DecayReference::Trajectory(&trajs[1])).unwrap();
        assert!(rep.pass, "{rep:?}");
        let rep = verify_decay(&trajs[0], -1.0, DecayMetric::Hopf, DecayReference::Recorded).unwrap();
        assert!(rep.pass);
        // an inflated rate claim must be caught
        let rep = verify_decay(&trajs[0], -1.5, DecayMetric::Hopf, DecayReference::Recorded).unwrap();
        assert!(!rep.pass);
        assert!(rep.first_violation.unwrap() > 0.0);
    }

    #[test]
    fn verify_decay_preconditions() {
        let spec = VectorFieldSpec::linear(example_matrix()).unwrap();
        let traj = integrate(&spec, &FlowState::Vector(DVector::from_vec(vec![1.0, 0.0, 0.0])), 1.0, 0.1).unwrap();
        let err = verify_decay(&traj, -1.0, DecayMetric::Hilbert, DecayReference::Recorded);
        assert!(matches!(err, Err(Error::Precondition(_))));
        let short = integrate(&spec, &FlowState::Vector(DVector::zeros(3)), 0.5, 0.1).unwrap();
        let err = verify_decay(&traj, -1.0, DecayMetric::Hopf, DecayReference::Trajectory(&short));
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn riccati_setup_has_scalar_reference() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let spec = riccati_setup(b, c, -0.2).unwrap();
        assert!((riccati_scalar_rate(&spec).unwrap().unwrap() + 0.2).abs() < 1e-12);
        let other = VectorFieldSpec::riccati(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        assert_eq!(riccati_scalar_rate(&other).unwrap(), Some(-1.0 / 3.0));
        let skew = VectorFieldSpec::riccati(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        assert_eq!(riccati_scalar_rate(&skew).unwrap(), None);
    }

    #[test]
    fn riccati_certificate_respects_envelope() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]);
        let spec = riccati_setup(b, c, 0.1).unwrap();
        let opts = OptimizerOptions { starts: 8, ..Default::default() };
        let cert = hilbert_rate_certificate(&spec, HilbertDomain::Ball { radius: 1.0 }, 64, 5, &opts).unwrap();
        let bound = riccati_envelope_rate(&spec, 1.0).unwrap();
        assert_eq!(cert.closed_form, Some(bound));
        assert!(cert.alpha <= bound + 1e-6);
        let Witness::Matrix(p) = &cert.witness else { panic!() };
        let again = hilbert_rate_at(&spec, &FlowState::Matrix(p.clone()), &opts).unwrap();
        assert!((again - cert.alpha).abs() < 1e-9);
        assert!(cert.alpha <= riccati_pointwise_bound(&spec, p).unwrap() + 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        // h(D phi(v)) <= (p - 1) h(C^{p-1}) beta^{p-2} on {min gap > beta} for p > 2,
        // and with alpha^{p-2} on {min gap > beta, max gap < alpha} for p < 2
        #[test]
        fn plaplacian_rate_bounds(seed in any::<u64>(), n in 2usize..5, big in any::<bool>()) {
            let mut rng = stream_rng(seed, 3);
            let c = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(0.2..2.0) });
            let p = if big { rng.random_range(2.1..4.0) } else { rng.random_range(1.1..1.9) };
            let spec = VectorFieldSpec::plaplacian(c.clone(), p).unwrap();
            let hcp = h_matrix(&c.map(|v| v.powf(p - 1.0))).unwrap().value;
            // distinct sorted positions with gaps at least beta
            let beta = rng.random_range(0.05..0.5);
            let mut v = DVector::zeros(n);
            let mut pos = 0.0;
            for i in 0..n {
                v[i] = pos;
                pos += beta * rng.random_range(1.01..3.0);
            }
            let alpha = cone::oscillation(v.as_slice()) * 1.0001;
            let rate = hopf_rate_at(&spec, &v).unwrap();
            let bound = if big { (p - 1.0) * hcp * beta.powf(p - 2.0) } else { (p - 1.0) * hcp * alpha.powf(p - 2.0) };
            prop_assert!(rate <= bound + 1e-9, "{rate} > {bound}");
        }

        #[test]
        fn linear_flow_decays_at_its_h(seed in any::<u64>(), n in 2usize..5) {
            let mut rng = stream_rng(seed, 4);
            let mut a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(-0.5..1.5) });
            for i in 0..n {
                let s = a.row(i).sum();
                a[(i, i)] = -s;
            }
            let spec = VectorFieldSpec::linear(a.clone()).unwrap();
            let h = hopf_rate_certificate(&spec, 1.0, 1, 0).unwrap().alpha;
            let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let traj = integrate_vector(&spec, &x0, 1.0, 1e-2).unwrap();
            let traj = FlowTrajectory::Vector(traj);
            let rep = verify_decay(&traj, h, DecayMetric::Hopf, DecayReference::Recorded).unwrap();
            prop_assert!(rep.pass, "{rep:?}");
        }
    }
}
