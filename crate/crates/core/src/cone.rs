//! Norms, seminorms and Hilbert's projective metric on the nonnegative orthant
//! (unit `1`) and the cone of positive semidefinite Hermitian matrices (unit `I`).

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, HermitianEigen};

/// Relative threshold below which a point counts as lying on the cone boundary.
pub const INTERIOR_TOL: f64 = 1e-12;

/// Tolerance on `<mu, e>` for the quotient dual norm.
pub const PAIRING_TOL: f64 = 1e-10;

/// Tolerance when validating that a stored matrix is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConeTag {
    Orthant,
    Psd,
}

impl ConeTag {
    pub fn name(self) -> &'static str {
        match self {
            ConeTag::Orthant => "orthant",
            ConeTag::Psd => "psd",
        }
    }
}

/// Finite real vector, an element of the space ordered by the orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVector(DVector<f64>);

impl RealVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(entries))
    }

    pub fn from_dvector(v: DVector<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::Dimension { expected: 1, found: 0 });
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(RealVector(v))
    }

    pub fn ones(n: usize) -> Self {
        RealVector(DVector::from_element(n, 1.0))
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_dvector(self) -> DVector<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Hermitian matrix. The upper triangle is always the conjugate of the lower
/// one and the diagonal is real, so the symmetry holds exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Validates that `m` is Hermitian up to `1e-10` (relative to its norm)
    /// and stores it with exact conjugate symmetry.
    pub fn new(m: CMatrix) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::Dimension { expected: n.max(1), found: m.ncols() });
        }
        if let Some(i) = m.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let scale = m.norm().max(1.0);
        for i in 0..n {
            for j in i..n {
                let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
                if dev > HERMITIAN_TOL * scale {
                    return Err(Error::NotHermitian { row: i, col: j, deviation: dev });
                }
            }
        }
        Ok(Self::hermitian_part(&m))
    }

    /// `(m + m^*) / 2`, with no validation.
    pub fn hermitian_part(m: &CMatrix) -> Self {
        let n = m.nrows();
        let mut out = CMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
            for j in 0..i {
                let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out[(i, j)] = z;
                out[(j, i)] = z.conj();
            }
        }
        HermitianMatrix(out)
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        HermitianMatrix(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(d[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix(CMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix(CMatrix::zeros(n, n))
    }

    /// Rank-one projector `u u^*`.
    pub fn projector(u: &linalg::CVector) -> Self {
        Self::hermitian_part(&linalg::outer(u))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn eigen(&self) -> HermitianEigen {
        linalg::hermitian_eigen(&self.0)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.0)
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.0).re
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianMatrix(&self.0 * Complex64::new(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        HermitianMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        HermitianMatrix(&self.0 - &other.0)
    }

    /// `tr(self * other)`, real for Hermitian arguments.
    pub fn inner(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.transpose().iter())
            .map(|(a, b)| (a * b).re)
            .sum()
    }
}

/// An element of one of the two concrete ordered spaces.
pub trait ConeElement: Sized {
    const TAG: ConeTag;

    fn dim(&self) -> usize;

    /// Coordinates of the element relative to the unit: entries for vectors,
    /// ascending eigenvalues for Hermitian matrices.
    fn unit_coordinates(&self) -> Vec<f64>;

    /// Pairing with the unit: sum of entries or trace.
    fn unit_pairing(&self) -> f64;

    /// Euclidean / Frobenius pairing `<self, other>`.
    fn pairing(&self, other: &Self) -> f64;

    /// `(m(self/y), M(self/y))` for `y` already known to be interior.
    fn order_bounds_unchecked(&self, y: &Self) -> (f64, f64);
}

impl ConeElement for RealVector {
    const TAG: ConeTag = ConeTag::Orthant;

    fn dim(&self) -> usize {
        self.len()
    }

    fn unit_coordinates(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }

    fn unit_pairing(&self) -> f64 {
        self.0.sum()
    }

    fn pairing(&self, other: &Self) -> f64 {
        self.0.dot(&other.0)
    }

    fn order_bounds_unchecked(&self, y: &Self) -> (f64, f64) {
        self.0
            .iter()
            .zip(y.0.iter())
            .map(|(a, b)| a / b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }
}

impl ConeElement for HermitianMatrix {
    const TAG: ConeTag = ConeTag::Psd;

    fn dim(&self) -> usize {
        HermitianMatrix::dim(self)
    }

    fn unit_coordinates(&self) -> Vec<f64> {
        self.eigenvalues()
    }

    fn unit_pairing(&self) -> f64 {
        self.trace()
    }

    fn pairing(&self, other: &Self) -> f64 {
        self.inner(other)
    }

    fn order_bounds_unchecked(&self, y: &Self) -> (f64, f64) {
        let inv_sqrt = y.eigen().map(|l| 1.0 / l.sqrt());
        let w = &inv_sqrt * &self.0 * &inv_sqrt;
        let vals = linalg::hermitian_eigenvalues(&w);
        (vals[0], *vals.last().unwrap())
    }
}

fn check_dims<E: ConeElement>(x: &E, y: &E) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension { expected: x.dim(), found: y.dim() });
    }
    Ok(())
}

/// Fails unless the smallest coordinate exceeds `1e-12` times the Thompson norm.
pub fn check_interior<E: ConeElement>(x: &E) -> Result<()> {
    let coords = x.unit_coordinates();
    let min = coords.iter().copied().fold(f64::INFINITY, f64::min);
    let norm = coords.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let threshold = INTERIOR_TOL * norm;
    if min > threshold && min > 0.0 {
        Ok(())
    } else {
        Err(Error::NotInterior { min, threshold })
    }
}

pub fn is_interior<E: ConeElement>(x: &E) -> bool {
    check_interior(x).is_ok()
}

/// `m(x/y) = sup{t : t y <= x}` and `M(x/y) = inf{t : x <= t y}`.
pub fn order_bounds<E: ConeElement>(x: &E, y: &E) -> Result<(f64, f64)> {
    check_dims(x, y)?;
    check_interior(y)?;
    Ok(x.order_bounds_unchecked(y))
}

pub fn thompson_norm<E: ConeElement>(x: &E) -> f64 {
    x.unit_coordinates().iter().fold(0.0, |a, c| a.max(c.abs()))
}

/// Hopf's oscillation seminorm: max minus min of the unit coordinates.
pub fn hopf_oscillation<E: ConeElement>(x: &E) -> f64 {
    oscillation(&x.unit_coordinates())
}

pub(crate) fn oscillation(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    (hi - lo).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualNorms {
    /// Dual of Thompson's norm: l1 norm or trace norm.
    pub tstar: f64,
    /// Dual of Hopf's seminorm on `{<mu, e> = 0}`, equal to `tstar / 2`.
    pub hstar: f64,
}

/// Dual norms of a functional `mu`. Fails when `<mu, e>` is not zero, since the
/// Hopf dual norm is only defined on the annihilator of the unit.
pub fn dual_norms<E: ConeElement>(mu: &E) -> Result<DualNorms> {
    let tstar = thompson_dual_norm(mu);
    let pairing = mu.unit_pairing();
    if pairing.abs() > PAIRING_TOL * tstar.max(1.0) {
        return Err(Error::domain(format!(
            "Hopf dual norm needs <mu, e> = 0, got {pairing:e}"
        )));
    }
    Ok(DualNorms { tstar, hstar: tstar / 2.0 })
}

/// l1 norm or trace norm.
pub fn thompson_dual_norm<E: ConeElement>(mu: &E) -> f64 {
    mu.unit_coordinates().iter().map(|c| c.abs()).sum()
}

/// Hilbert's projective metric `log(M(x/y) / m(x/y))`.
pub fn hilbert_metric<E: ConeElement>(x: &E, y: &E) -> Result<f64> {
    check_dims(x, y)?;
    check_interior(x)?;
    check_interior(y)?;
    let (m, big_m) = x.order_bounds_unchecked(y);
    Ok((big_m / m).ln().max(0.0))
}
