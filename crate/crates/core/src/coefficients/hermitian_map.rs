use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::cone::HermitianMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};

const PRESERVE_TOL: f64 = 1e-9;

/// Coordinates of a Hermitian matrix in the orthonormal basis (trace inner
/// product) made of `E_ii`, `(E_ij + E_ji)/sqrt 2` and `i(E_ij - E_ji)/sqrt 2`
/// for `i < j`. The layout is the `n` diagonal entries followed by a
/// `(re, im)` pair for each `i < j` in row-major order.
pub fn hermitian_to_coords(x: &CMatrix) -> DVector<f64> {
    let n = x.nrows();
    let mut c = DVector::zeros(n * n);
    for i in 0..n {
        c[i] = x[(i, i)].re;
    }
    let mut k = n;
    let r2 = std::f64::consts::SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            c[k] = r2 * x[(i, j)].re;
            c[k + 1] = r2 * x[(i, j)].im;
            k += 2;
        }
    }
    c
}

/// Inverse of [`hermitian_to_coords`].
pub fn coords_to_hermitian(n: usize, c: &DVector<f64>) -> CMatrix {
    let mut x = CMatrix::zeros(n, n);
    for i in 0..n {
        x[(i, i)] = Complex64::new(c[i], 0.0);
    }
    let mut k = n;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = Complex64::new(c[k] * r, c[k + 1] * r);
            x[(i, j)] = z;
            x[(j, i)] = z.conj();
            k += 2;
        }
    }
    x
}

/// A real-linear map of the Hermitian `n x n` matrices into themselves.
///
/// Stored as the real `n^2 x n^2` matrix of its action on an orthonormal
/// Hermitian basis, so the adjoint for the trace inner product is the
/// transpose. Maps built from Kraus operators keep the operators as a faster
/// evaluation path.
#[derive(Debug, Clone)]
pub struct HermitianLinearMap {
    n: usize,
    matrix: DMatrix<f64>,
    /// `Phi(X) = sum V_i^* X V_i`.
    kraus: Option<Vec<CMatrix>>,
}

impl HermitianLinearMap {
    /// Tabulates `f` on the Hermitian basis. Fails if some basis image is not
    /// Hermitian.
    pub fn from_fn(n: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Result<Self> {
        let d = n * n;
        let mut matrix = DMatrix::zeros(d, d);
        for k in 0..d {
            let mut e = DVector::zeros(d);
            e[k] = 1.0;
            let img = f(&coords_to_hermitian(n, &e));
            if img.nrows() != n || img.ncols() != n {
                return Err(Error::Dimension { expected: n, found: img.nrows() });
            }
            let dev = (&img - img.adjoint()).norm();
            if dev > PRESERVE_TOL * img.norm().max(1.0) {
                return Err(Error::domain(format!(
                    "map does not preserve Hermitian matrices (basis element {k}, defect {dev:e})"
                )));
            }
            matrix.set_column(k, &hermitian_to_coords(&img));
        }
        Ok(HermitianLinearMap { n, matrix, kraus: None })
    }

    /// `Phi(X) = sum_i V_i^* X V_i`.
    pub fn from_kraus(ops: &[CMatrix]) -> Result<Self> {
        let n = ops.first().map(|v| v.nrows()).unwrap_or(0);
        if n == 0 {
            return Err(Error::Precondition("at least one Kraus operator is required".into()));
        }
        for v in ops {
            if v.nrows() != n || v.ncols() != n {
                return Err(Error::Dimension { expected: n, found: v.nrows().max(v.ncols()) });
            }
        }
        let apply = |x: &CMatrix| ops.iter().fold(CMatrix::zeros(n, n), |acc, v| acc + v.adjoint() * x * v);
        let mut map = Self::from_fn(n, apply)?;
        map.kraus = Some(ops.to_vec());
        Ok(map)
    }

    /// Wraps a real `n^2 x n^2` coordinate matrix.
    pub fn from_real_matrix(n: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != n * n || matrix.ncols() != n * n {
            return Err(Error::Dimension { expected: n * n, found: matrix.nrows() });
        }
        Ok(HermitianLinearMap { n, matrix, kraus: None })
    }

    pub fn identity(n: usize) -> Self {
        HermitianLinearMap { n, matrix: DMatrix::identity(n * n, n * n), kraus: None }
    }

    pub fn zero(n: usize) -> Self {
        HermitianLinearMap { n, matrix: DMatrix::zeros(n * n, n * n), kraus: None }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn real_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kraus(&self) -> Option<&[CMatrix]> {
        self.kraus.as_deref()
    }

    pub fn apply(&self, x: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix::hermitian_part(&self.apply_raw(x.as_matrix()))
    }

    pub(crate) fn apply_raw(&self, x: &CMatrix) -> CMatrix {
        match &self.kraus {
            Some(ops) => ops.iter().fold(CMatrix::zeros(self.n, self.n), |acc, v| acc + v.adjoint() * x * v),
            None => coords_to_hermitian(self.n, &(&self.matrix * hermitian_to_coords(x))),
        }
    }

    /// Adjoint for the trace inner product.
    pub fn apply_adjoint(&self, x: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix::hermitian_part(&self.apply_adjoint_raw(x.as_matrix()))
    }

    pub(crate) fn apply_adjoint_raw(&self, x: &CMatrix) -> CMatrix {
        match &self.kraus {
            Some(ops) => ops.iter().fold(CMatrix::zeros(self.n, self.n), |acc, v| acc + v * x * v.adjoint()),
            None => coords_to_hermitian(self.n, &(self.matrix.tr_mul(&hermitian_to_coords(x)))),
        }
    }

    /// `Phi^*(u u^*)`.
    pub(crate) fn adjoint_on_projector(&self, u: &CVector) -> CMatrix {
        match &self.kraus {
            Some(ops) => ops.iter().fold(CMatrix::zeros(self.n, self.n), |acc, v| {
                let w = v * u;
                acc + &w * w.adjoint()
            }),
            None => self.apply_adjoint_raw(&linalg::outer(u)),
        }
    }

    /// `Phi(u u^*)`.
    pub(crate) fn apply_on_projector(&self, u: &CVector) -> CMatrix {
        match &self.kraus {
            Some(ops) => ops.iter().fold(CMatrix::zeros(self.n, self.n), |acc, v| {
                let w = v.adjoint() * u;
                acc + &w * w.adjoint()
            }),
            None => self.apply_raw(&linalg::outer(u)),
        }
    }

    pub fn adjoint(&self) -> Self {
        HermitianLinearMap {
            n: self.n,
            matrix: self.matrix.transpose(),
            kraus: self.kraus.as_ref().map(|ops| ops.iter().map(|v| v.adjoint()).collect()),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        HermitianLinearMap { n: self.n, matrix: &self.matrix + &other.matrix, kraus: None }
    }

    pub fn sub(&self, other: &Self) -> Self {
        HermitianLinearMap { n: self.n, matrix: &self.matrix - &other.matrix, kraus: None }
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianLinearMap { n: self.n, matrix: &self.matrix * s, kraus: None }
    }

    /// `self o other`.
    pub fn compose(&self, other: &Self) -> Self {
        HermitianLinearMap { n: self.n, matrix: &self.matrix * &other.matrix, kraus: None }
    }

    /// `exp(t Phi)`.
    pub fn exp(&self, t: f64) -> Self {
        HermitianLinearMap { n: self.n, matrix: linalg::expm(&(&self.matrix * t)), kraus: None }
    }

    /// `c` such that `Phi(I) = c I`, or a domain error when `Phi(I)` is not
    /// a multiple of the identity within `tol` (relative).
    pub fn unit_scalar(&self, tol: f64) -> Result<f64> {
        let img = self.apply_raw(&CMatrix::identity(self.n, self.n));
        let c = linalg::trace(&img).re / self.n as f64;
        let defect = (&img - CMatrix::identity(self.n, self.n) * Complex64::new(c, 0.0)).norm();
        if defect > tol * c.abs().max(1.0) {
            return Err(Error::domain(format!(
                "Phi(I) is not a multiple of I (distance {defect:e})"
            )));
        }
        Ok(c)
    }
}
