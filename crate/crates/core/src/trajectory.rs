//! Time-indexed states with a per-step scalar diagnostic.

use nalgebra::DVector;

use crate::cone::HermitianMatrix;

/// What the `metric` column of a trajectory measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Hopf oscillation `max x - min x` of the state.
    Oscillation,
    /// Trace norm of the change `rho_{k+1} - rho_k`.
    TraceDistanceStep,
    /// Hilbert distance from the state to the identity (equivalently to any
    /// positive multiple of it).
    HilbertToIdentity,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Oscillation => "oscillation",
            MetricKind::TraceDistanceStep => "trace-distance-step",
            MetricKind::HilbertToIdentity => "hilbert-to-identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    Completed,
    /// The state left the domain of the model; the trajectory ends at the
    /// last valid state.
    DomainExit { time: f64, message: String },
}

/// Scalar columns used when a state is written out.
pub trait StateColumns {
    fn output_columns(&self) -> Vec<f64>;
}

impl StateColumns for DVector<f64> {
    fn output_columns(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }
}

/// Hermitian states are written as their ascending spectrum.
impl StateColumns for HermitianMatrix {
    fn output_columns(&self) -> Vec<f64> {
        self.eigenvalues()
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub metric: Vec<f64>,
    pub metric_kind: MetricKind,
    pub stop: StopReason,
    /// Largest step-halving error estimate per unit time, when the
    /// integrator probed for one.
    pub error_estimate: Option<f64>,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&S> {
        self.states.last()
    }

    pub fn completed(&self) -> bool {
        self.stop == StopReason::Completed
    }
}
