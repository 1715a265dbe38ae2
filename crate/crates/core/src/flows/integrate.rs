//! Fixed-step classical RK4 with a periodic step-halving error probe.

use nalgebra::DVector;

use super::{FlowState, VectorFieldSpec};
use crate::cone::{self, HermitianMatrix};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::trajectory::{MetricKind, StateColumns, StopReason, Trajectory};

pub const DEFAULT_DT: f64 = 1e-3;
/// Steps between two step-halving probes.
pub const PROBE_EVERY: usize = 100;

trait Rk4State: Clone {
    fn lincomb(&self, terms: &[(f64, &Self)]) -> Self;
    /// Sup-norm size, used to make the error probe relative.
    fn size(&self) -> f64;
}

impl Rk4State for DVector<f64> {
    fn lincomb(&self, terms: &[(f64, &Self)]) -> Self {
        let mut out = self.clone();
        for (c, v) in terms {
            out.axpy(*c, v, 1.0);
        }
        out
    }

    fn size(&self) -> f64 {
        self.amax()
    }
}

impl Rk4State for CMatrix {
    fn lincomb(&self, terms: &[(f64, &Self)]) -> Self {
        let mut out = self.clone();
        for (c, v) in terms {
            out += *v * num_complex::Complex64::new(*c, 0.0);
        }
        out
    }

    fn size(&self) -> f64 {
        self.iter().fold(0.0, |a, z| a.max(z.norm()))
    }
}

fn rk4_step<S: Rk4State>(f: &impl Fn(&S) -> Result<S>, x: &S, h: f64) -> Result<S> {
    let k1 = f(x)?;
    let k2 = f(&x.lincomb(&[(h / 2.0, &k1)]))?;
    let k3 = f(&x.lincomb(&[(h / 2.0, &k2)]))?;
    let k4 = f(&x.lincomb(&[(h, &k3)]))?;
    Ok(x.lincomb(&[(h / 6.0, &k1), (h / 3.0, &k2), (h / 3.0, &k3), (h / 6.0, &k4)]))
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!("time step must be positive, got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Precondition(format!("end time must be nonnegative, got {t_end}")));
    }
    let ratio = t_end / dt;
    let rounded = ratio.round();
    Ok(if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) { rounded as usize } else { ratio.ceil() as usize })
}

/// Shared driver: `accept` validates a new state and returns its metric.
fn run<S: Rk4State, T>(
    f: impl Fn(&S) -> Result<S>,
    accept: impl Fn(&S) -> Result<(f64, T)>,
    x0: S,
    t_end: f64,
    dt: f64,
    metric_kind: MetricKind,
) -> Result<Trajectory<T>> {
    let steps = step_count(t_end, dt)?;
    let (m0, s0) = accept(&x0)?;
    f(&x0)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![s0],
        metric: vec![m0],
        metric_kind,
        stop: StopReason::Completed,
        error_estimate: None,
    };
    let mut x = x0;
    let mut worst = 0.0f64;
    for k in 0..steps {
        let t = k as f64 * dt;
        let h = if k + 1 == steps { t_end - t } else { dt };
        if h <= 0.0 {
            break;
        }
        let next = rk4_step(&f, &x, h).and_then(|y| {
            if k % PROBE_EVERY == 0 {
                let half = rk4_step(&f, &x, h / 2.0)?;
                let two = rk4_step(&f, &half, h / 2.0)?;
                let diff = y.lincomb(&[(-1.0, &two)]).size();
                worst = worst.max(diff / y.size().max(1.0) / h);
            }
            let accepted = accept(&y)?;
            f(&y)?;
            Ok((y, accepted))
        });
        match next {
            Ok((y, (m, s))) => {
                traj.times.push(if k + 1 == steps { t_end } else { t + h });
                traj.states.push(s);
                traj.metric.push(m);
                x = y;
            }
            Err(e) => {
                traj.stop = StopReason::DomainExit { time: t, message: e.to_string() };
                break;
            }
        }
    }
    traj.error_estimate = Some(worst);
    Ok(traj)
}

/// Integrates a vector model from `x0` to `t_end`. The metric column is the
/// Hopf oscillation of the state.
///
/// A state at which the field cannot be evaluated ends the trajectory with
/// [`StopReason::DomainExit`]; an invalid `x0` is an error.
pub fn integrate_vector(spec: &VectorFieldSpec, x0: &DVector<f64>, t_end: f64, dt: f64) -> Result<Trajectory<DVector<f64>>> {
    run(
        |x: &DVector<f64>| spec.field_vector(x),
        |x: &DVector<f64>| {
            if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(i));
            }
            Ok((cone::oscillation(x.as_slice()), x.clone()))
        },
        x0.clone(),
        t_end,
        dt,
        MetricKind::Oscillation,
    )
}

/// Integrates the Riccati model from `p0`. The metric column is `d_H(P(t), I)`.
/// Leaving the interior of the cone ends the trajectory.
pub fn integrate_matrix(spec: &VectorFieldSpec, p0: &HermitianMatrix, t_end: f64, dt: f64) -> Result<Trajectory<HermitianMatrix>> {
    let n = spec.dim();
    let id = HermitianMatrix::identity(n);
    run(
        |p: &CMatrix| spec.field_matrix(&HermitianMatrix::hermitian_part(p)).map(HermitianMatrix::into_matrix),
        |p: &CMatrix| {
            let h = HermitianMatrix::hermitian_part(p);
            let d = cone::hilbert_metric(&h, &id)?;
            Ok((d, h))
        },
        p0.as_matrix().clone(),
        t_end,
        dt,
        MetricKind::HilbertToIdentity,
    )
}

#[derive(Debug, Clone)]
pub enum FlowTrajectory {
    Vector(Trajectory<DVector<f64>>),
    Matrix(Trajectory<HermitianMatrix>),
}

impl FlowTrajectory {
    pub fn times(&self) -> &[f64] {
        match self {
            FlowTrajectory::Vector(t) => &t.times,
            FlowTrajectory::Matrix(t) => &t.times,
        }
    }

    pub fn metric(&self) -> &[f64] {
        match self {
            FlowTrajectory::Vector(t) => &t.metric,
            FlowTrajectory::Matrix(t) => &t.metric,
        }
    }

    pub fn metric_kind(&self) -> MetricKind {
        match self {
            FlowTrajectory::Vector(t) => t.metric_kind,
            FlowTrajectory::Matrix(t) => t.metric_kind,
        }
    }

    pub fn stop(&self) -> &StopReason {
        match self {
            FlowTrajectory::Vector(t) => &t.stop,
            FlowTrajectory::Matrix(t) => &t.stop,
        }
    }

    pub fn error_estimate(&self) -> Option<f64> {
        match self {
            FlowTrajectory::Vector(t) => t.error_estimate,
            FlowTrajectory::Matrix(t) => t.error_estimate,
        }
    }

    pub fn len(&self) -> usize {
        self.times().len()
    }

    pub fn is_empty(&self) -> bool {
        self.times().is_empty()
    }

    /// Output columns of state `k`: entries, or the spectrum for matrices.
    pub fn state_columns(&self, k: usize) -> Vec<f64> {
        match self {
            FlowTrajectory::Vector(t) => t.states[k].output_columns(),
            FlowTrajectory::Matrix(t) => t.states[k].output_columns(),
        }
    }
}

pub fn integrate(spec: &VectorFieldSpec, x0: &FlowState, t_end: f64, dt: f64) -> Result<FlowTrajectory> {
    match x0 {
        FlowState::Vector(v) => integrate_vector(spec, v, t_end, dt).map(FlowTrajectory::Vector),
        FlowState::Matrix(p) => integrate_matrix(spec, p, t_end, dt).map(FlowTrajectory::Matrix),
    }
}
