//! Contraction coefficients: Dobrushin and Hopf operator norms, flow rates
//! `h(.)`, projective diameters with Birkhoff's bound, and Hilbert-metric
//! Lipschitz constants of homogeneous maps.

mod hermitian_map;
mod optimizer;
mod orthant;
mod psd;

use nalgebra::DVector;

use crate::cone::HermitianMatrix;
use crate::linalg::CVector;

pub use hermitian_map::{coords_to_hermitian, hermitian_to_coords, HermitianLinearMap};
pub use optimizer::{OptimizerDiagnostics, OptimizerOptions};
pub use orthant::{
    birkhoff_bound, dobrushin_tau, h_matrix, h_matrix_pair, hilbert_lipschitz_at,
    hilbert_lipschitz_homogeneous_map,
    hopf_opnorm_matrix, projective_diameter_matrix, row_oscillation, FnMap, HomogeneousMap,
    LinearMap,
};
pub use psd::{
    dual_contraction_forms, h_hermitian_map, h_pair_objective, hopf_opnorm_hermitian_map,
    hopf_pair_objective, noncommutative_dobrushin, projective_diameter_map, rank_one_distance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Optimized,
    Sampled,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::Optimized => "optimized",
            Method::Sampled => "sampled",
        }
    }
}

/// How the reported value relates to the exact quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Exact,
    Lower,
    Upper,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Exact => "exact",
            BoundKind::Lower => "lower",
            BoundKind::Upper => "upper",
        }
    }
}

/// The object at which a coefficient is attained (or best approximated).
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    None,
    /// Row or column index pair.
    Pair(usize, usize),
    /// Unit vectors, e.g. an orthonormal pair `(u, v)`.
    Vectors(CVector, CVector),
    /// A sample point of the orthant.
    Point(DVector<f64>),
    /// A sample point of the PSD cone.
    Matrix(HermitianMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientReport {
    pub value: f64,
    pub witness: Witness,
    pub method: Method,
    pub bound_kind: BoundKind,
    pub diagnostics: Option<OptimizerDiagnostics>,
}

impl CoefficientReport {
    pub(crate) fn exact(value: f64, witness: Witness) -> Self {
        CoefficientReport {
            value,
            witness,
            method: Method::ClosedForm,
            bound_kind: BoundKind::Exact,
            diagnostics: None,
        }
    }
}
