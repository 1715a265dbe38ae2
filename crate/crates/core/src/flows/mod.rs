//! Continuous-time consensus flows `x' = phi(x)`: built-in vector fields,
//! their Jacobians, RK4 integration and contraction-rate certificates.

mod certificates;
mod integrate;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::coefficients::HermitianLinearMap;
use crate::cone::{self, HermitianMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

pub use certificates::{
    hilbert_rate_at, hilbert_rate_certificate, hopf_rate_at, hopf_rate_certificate,
    riccati_conjugated_map, riccati_envelope_rate, riccati_pointwise_bound, riccati_scalar_rate,
    riccati_setup, verify_decay, verify_decay_with_slack, DecayMetric, DecayReference, DecayReport,
    HilbertDomain, RateCertificate, DECAY_SLACK,
};
pub use integrate::{integrate, integrate_matrix, integrate_vector, FlowTrajectory, DEFAULT_DT, PROBE_EVERY};

/// For `p < 2`, states whose smallest edge gap is below this fraction of the
/// oscillation are outside the domain of the p-Laplacian field.
pub const PLAPLACIAN_GUARD: f64 = 1e-6;
/// Symmetry tolerance for the Riccati data `B` and `C`, relative to their size.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub type FieldFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A user-supplied field on `R^n`. Without a Jacobian, central finite
/// differences are used.
#[derive(Clone)]
pub struct CustomField {
    pub name: String,
    pub field: FieldFn,
    pub jacobian: Option<JacobianFn>,
}

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomField")
            .field("name", &self.name)
            .field("jacobian", &self.jacobian.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    /// `x_i' = sum_j C_ij sin(x_j - x_i)`
    Kuramoto { c: DMatrix<f64> },
    /// `x_i' = sum_j C_ij atan(x_j - x_i)`
    Arctan { c: DMatrix<f64> },
    /// `x_i' = sum_j C_ij (x_j - x_i) |C_ij (x_i - x_j)|^(p-2)`
    PLaplacian { c: DMatrix<f64>, p: f64 },
    /// `x' = A x`
    Linear { a: DMatrix<f64> },
    /// `P' = -P B P / tr(C P) + A P + P A^T` on positive definite matrices.
    Riccati { a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64> },
    Custom(CustomField),
}

/// A validated vector field together with its dimension.
#[derive(Debug, Clone)]
pub struct VectorFieldSpec {
    model: Model,
    n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowState {
    Vector(DVector<f64>),
    Matrix(HermitianMatrix),
}

#[derive(Debug, Clone)]
pub enum Jacobian {
    Matrix(DMatrix<f64>),
    Map(HermitianLinearMap),
}

fn check_square(m: &DMatrix<f64>, name: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::domain(format!("{name} must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    if let Some(i) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(m.nrows())
}

fn check_coupling(c: &DMatrix<f64>) -> Result<usize> {
    let n = check_square(c, "coupling matrix")?;
    for i in 0..n {
        if c[(i, i)] != 0.0 {
            return Err(Error::domain(format!("coupling matrix has nonzero diagonal entry at {i}")));
        }
        for j in 0..n {
            if c[(i, j)] < 0.0 {
                return Err(Error::domain(format!("coupling matrix has negative entry at ({i}, {j})")));
            }
        }
    }
    Ok(n)
}

fn check_spd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::domain(format!("{name} is not symmetric (deviation {asym:e})")));
    }
    let sym = (m + m.transpose()) * 0.5;
    let min = sym.symmetric_eigenvalues().min();
    if !(min > 0.0) {
        return Err(Error::domain(format!("{name} is not positive definite (smallest eigenvalue {min:e})")));
    }
    Ok(())
}

impl VectorFieldSpec {
    pub fn kuramoto(c: DMatrix<f64>) -> Result<Self> {
        let n = check_coupling(&c)?;
        Ok(VectorFieldSpec { model: Model::Kuramoto { c }, n })
    }

    pub fn arctan(c: DMatrix<f64>) -> Result<Self> {
        let n = check_coupling(&c)?;
        Ok(VectorFieldSpec { model: Model::Arctan { c }, n })
    }

    pub fn plaplacian(c: DMatrix<f64>, p: f64) -> Result<Self> {
        let n = check_coupling(&c)?;
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::domain(format!("p-Laplacian exponent must exceed 1, got {p}")));
        }
        Ok(VectorFieldSpec { model: Model::PLaplacian { c, p }, n })
    }

    pub fn linear(a: DMatrix<f64>) -> Result<Self> {
        let n = check_square(&a, "A")?;
        Ok(VectorFieldSpec { model: Model::Linear { a }, n })
    }

    pub fn riccati(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = check_square(&a, "A")?;
        for (m, name) in [(&b, "B"), (&c, "C")] {
            if check_square(m, name)? != n {
                return Err(Error::Dimension { expected: n, found: m.nrows() });
            }
            check_spd(m, name)?;
        }
        Ok(VectorFieldSpec { model: Model::Riccati { a, b, c }, n })
    }

    pub fn custom(n: usize, field: CustomField) -> Self {
        VectorFieldSpec { model: Model::Custom(field), n }
    }

    /// Looks up a named field from the built-in table:
    /// `identity` (`x' = x`), `mean-field` (`x' = mean(x) 1 - x`) and
    /// `logistic-ratio` (`x_i' = x_i (mean(x) - x_i) / mean(x)`).
    pub fn named_custom(name: &str, n: usize) -> Result<Self> {
        let field: FieldFn = match name {
            "identity" => Arc::new(|x: &DVector<f64>| x.clone()),
            "mean-field" => Arc::new(|x: &DVector<f64>| DVector::from_element(x.len(), x.mean()) - x),
            "logistic-ratio" => Arc::new(|x: &DVector<f64>| {
                let m = x.mean();
                x.map(|v| v * (m - v) / m)
            }),
            _ => return Err(Error::domain(format!("unknown custom field '{name}'"))),
        };
        let jacobian: Option<JacobianFn> = match name {
            "identity" => Some(Arc::new(|x: &DVector<f64>| DMatrix::identity(x.len(), x.len()))),
            "mean-field" => Some(Arc::new(|x: &DVector<f64>| {
                let n = x.len();
                DMatrix::from_element(n, n, 1.0 / n as f64) - DMatrix::identity(n, n)
            })),
            _ => None,
        };
        Ok(Self::custom(n, CustomField { name: name.to_string(), field, jacobian }))
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn name(&self) -> &str {
        match &self.model {
            Model::Kuramoto { .. } => "kuramoto",
            Model::Arctan { .. } => "arctan",
            Model::PLaplacian { .. } => "plaplacian",
            Model::Linear { .. } => "linear",
            Model::Riccati { .. } => "riccati",
            Model::Custom(f) => &f.name,
        }
    }

    /// True when the state space is the Hermitian matrices.
    pub fn is_matrix_model(&self) -> bool {
        matches!(self.model, Model::Riccati { .. })
    }

    /// Kuramoto, arctan and p-Laplacian fields, which depend only on
    /// differences of coordinates.
    pub fn is_consensus_model(&self) -> bool {
        matches!(self.model, Model::Kuramoto { .. } | Model::Arctan { .. } | Model::PLaplacian { .. })
    }

    /// The coupling matrix of a consensus model.
    pub fn coupling(&self) -> Option<&DMatrix<f64>> {
        match &self.model {
            Model::Kuramoto { c } | Model::Arctan { c } | Model::PLaplacian { c, .. } => Some(c),
            _ => None,
        }
    }

    fn check_vector(&self, x: &DVector<f64>) -> Result<()> {
        if self.is_matrix_model() {
            return Err(Error::domain("this model acts on Hermitian matrices"));
        }
        if x.len() != self.n {
            return Err(Error::Dimension { expected: self.n, found: x.len() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    fn check_matrix(&self, p: &HermitianMatrix) -> Result<()> {
        if !self.is_matrix_model() {
            return Err(Error::domain("this model acts on real vectors"));
        }
        if p.dim() != self.n {
            return Err(Error::Dimension { expected: self.n, found: p.dim() });
        }
        cone::check_interior(p)
    }

    fn plaplacian_guard(&self, c: &DMatrix<f64>, p: f64, x: &DVector<f64>) -> Result<()> {
        if p >= 2.0 {
            return Ok(());
        }
        let osc = x.max() - x.min();
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                if i != j && c[(i, j)] > 0.0 {
                    let gap = (x[i] - x[j]).abs();
                    if gap < PLAPLACIAN_GUARD * osc {
                        return Err(Error::domain(format!(
                            "p-Laplacian with p < 2: edge ({i}, {j}) gap {gap:e} is below the guard"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `phi(x)` for the vector models.
    pub fn field_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_vector(x)?;
        let n = self.n;
        let pairwise = |c: &DMatrix<f64>, g: &dyn Fn(f64, f64) -> f64| {
            DVector::from_fn(n, |i, _| {
                (0..n).filter(|&j| j != i && c[(i, j)] != 0.0).map(|j| g(c[(i, j)], x[j] - x[i])).sum()
            })
        };
        Ok(match &self.model {
            Model::Kuramoto { c } => pairwise(c, &|cij, d| cij * d.sin()),
            Model::Arctan { c } => pairwise(c, &|cij, d| cij * d.atan()),
            Model::PLaplacian { c, p } => {
                self.plaplacian_guard(c, *p, x)?;
                let p = *p;
                pairwise(c, &|cij, d| {
                    if d == 0.0 {
                        0.0
                    } else {
                        cij * d * (cij * d.abs()).powf(p - 2.0)
                    }
                })
            }
            Model::Linear { a } => a * x,
            Model::Custom(f) => {
                let y = (f.field)(x);
                if y.len() != n {
                    return Err(Error::Dimension { expected: n, found: y.len() });
                }
                y
            }
            Model::Riccati { .. } => unreachable!("checked above"),
        })
    }

    /// Analytic Jacobian for the vector models (finite differences for a
    /// custom field without one).
    pub fn jacobian_vector(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_vector(x)?;
        let n = self.n;
        let laplacian = |c: &DMatrix<f64>, g: &dyn Fn(f64, f64) -> f64| {
            let mut jac = DMatrix::zeros(n, n);
            for i in 0..n {
                let mut diag = 0.0;
                for j in 0..n {
                    if j != i && c[(i, j)] != 0.0 {
                        let v = g(c[(i, j)], x[j] - x[i]);
                        jac[(i, j)] = v;
                        diag -= v;
                    }
                }
                jac[(i, i)] = diag;
            }
            jac
        };
        Ok(match &self.model {
            Model::Kuramoto { c } => laplacian(c, &|cij, d| cij * d.cos()),
            Model::Arctan { c } => laplacian(c, &|cij, d| cij / (1.0 + d * d)),
            Model::PLaplacian { c, p } => {
                self.plaplacian_guard(c, *p, x)?;
                let p = *p;
                if p < 2.0 {
                    for i in 0..n {
                        for j in 0..n {
                            if i != j && c[(i, j)] > 0.0 && x[i] == x[j] {
                                return Err(Error::domain("p-Laplacian Jacobian is singular at coincident states"));
                            }
                        }
                    }
                }
                laplacian(c, &|cij, d| {
                    if d == 0.0 && p > 2.0 {
                        0.0
                    } else {
                        (p - 1.0) * cij.powf(p - 1.0) * d.abs().powf(p - 2.0)
                    }
                })
            }
            Model::Linear { a } => a.clone(),
            Model::Custom(f) => match &f.jacobian {
                Some(jac) => jac(x),
                None => linalg::numerical_jacobian(|y| (f.field)(y), x),
            },
            Model::Riccati { .. } => unreachable!("checked above"),
        })
    }

    fn riccati_data(&self) -> (CMatrix, CMatrix, CMatrix) {
        match &self.model {
            Model::Riccati { a, b, c } => (linalg::to_complex(a), linalg::to_complex(b), linalg::to_complex(c)),
            _ => unreachable!("riccati_data on a vector model"),
        }
    }

    /// `phi(P) = -P B P / tr(C P) + A P + P A^T`.
    pub fn field_matrix(&self, p: &HermitianMatrix) -> Result<HermitianMatrix> {
        self.check_matrix(p)?;
        let (a, b, c) = self.riccati_data();
        Ok(HermitianMatrix::hermitian_part(&riccati_field(&a, &b, &c, p.as_matrix())))
    }

    /// `D phi(P)` as a linear map on Hermitian matrices:
    /// `Z -> -(Z B P + P B Z) / tr(CP) + P B P tr(C Z) / tr(CP)^2 + A Z + Z A^T`.
    pub fn jacobian_matrix(&self, p: &HermitianMatrix) -> Result<HermitianLinearMap> {
        self.check_matrix(p)?;
        let (a, b, c) = self.riccati_data();
        let pm = p.as_matrix();
        HermitianLinearMap::from_fn(self.n, |z| riccati_derivative(&a, &b, &c, pm, z))
    }

    pub fn field_eval(&self, x: &FlowState) -> Result<FlowState> {
        match x {
            FlowState::Vector(v) => self.field_vector(v).map(FlowState::Vector),
            FlowState::Matrix(p) => self.field_matrix(p).map(FlowState::Matrix),
        }
    }

    pub fn jacobian(&self, x: &FlowState) -> Result<Jacobian> {
        match x {
            FlowState::Vector(v) => self.jacobian_vector(v).map(Jacobian::Matrix),
            FlowState::Matrix(p) => self.jacobian_matrix(p).map(Jacobian::Map),
        }
    }
}

fn riccati_field(a: &CMatrix, b: &CMatrix, c: &CMatrix, p: &CMatrix) -> CMatrix {
    let tr = linalg::trace(&(c * p));
    -(p * b * p) / tr + a * p + p * a.adjoint()
}

fn riccati_derivative(a: &CMatrix, b: &CMatrix, c: &CMatrix, p: &CMatrix, z: &CMatrix) -> CMatrix {
    let tr = linalg::trace(&(c * p));
    let trz = linalg::trace(&(c * z));
    -(z * b * p + p * b * z) / tr + (p * b * p) * (trz / (tr * tr)) + a * z + z * a.adjoint()
}
