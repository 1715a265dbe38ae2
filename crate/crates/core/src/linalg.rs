//! Dense linear-algebra kernels for small matrices.
//!
//! The Hermitian eigensolver is a cyclic Jacobi iteration with complex plane
//! rotations. It is exact enough for the desk-scale dimensions used here
//! (n up to a few dozen) and fully deterministic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are orthonormal eigenvectors, in the order of `values`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Rebuilds `V f(Λ) V*`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            for i in 0..n {
                let vi = v[i] * w;
                for j in 0..n {
                    out[(i, j)] += vi * v[j].conj();
                }
            }
        }
        out
    }
}

/// Cyclic Jacobi eigensolver for a Hermitian matrix.
///
/// Only the Hermitian part of `a` is used. Iterates until the off-diagonal
/// Frobenius mass falls below `1e-13` times the Frobenius norm of `a`.
pub fn hermitian_eigen(a: &CMatrix) -> HermitianEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "hermitian_eigen needs a square matrix");
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    let mut v = CMatrix::identity(n, n);
    let scale = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let threshold = JACOBI_TOL * scale.max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = m[(p, q)];
                let babs = b.norm();
                if babs <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let theta = (aqq - app) / (2.0 * babs);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // b = |b| e^{i phi}; U = [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                let phase = b / babs;
                let ph_conj = phase.conj();
                let u_qp = -ph_conj * s;
                let u_qq = ph_conj * c;
                // columns: M <- M U
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * c + mkq * u_qp;
                    m[(k, q)] = mkp * s + mkq * u_qq;
                }
                // rows: M <- U^* M
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = mpk * c + mqk * u_qp.conj();
                    m[(q, k)] = mpk * s + mqk * u_qq.conj();
                }
                m[(p, q)] = Complex64::new(0.0, 0.0);
                m[(q, p)] = Complex64::new(0.0, 0.0);
                m[(p, p)] = Complex64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = Complex64::new(m[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c + vkq * u_qp;
                    v[(k, q)] = vkp * s + vkq * u_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    HermitianEigen { values, vectors }
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    hermitian_eigen(a).values
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(a: &CMatrix) -> f64 {
    hermitian_eigenvalues(a).iter().map(|l| l.abs()).sum()
}

pub fn trace(a: &CMatrix) -> Complex64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// Real part of `u^* M u`.
pub fn quadratic_form(m: &CMatrix, u: &CVector) -> f64 {
    u.dotc(&(m * u)).re
}

/// Rank-one projector `u u^*`.
pub fn outer(u: &CVector) -> CMatrix {
    u * u.adjoint()
}

pub fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Standard complex Gaussian vector normalized to unit length (Haar on the sphere).
pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    loop {
        let v = CVector::from_fn(n, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let norm = v.norm();
        if norm > 1e-8 {
            return v / Complex64::new(norm, 0.0);
        }
    }
}

/// Haar-ish random unitary from Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    orthonormalize_columns(&g)
}

/// Modified Gram-Schmidt (twice) on the columns of `a`; a degenerate column is
/// replaced by the first standard basis vector that is not yet spanned.
pub fn orthonormalize_columns(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let k = a.ncols();
    let mut q = CMatrix::zeros(n, k);
    for j in 0..k {
        let mut col: CVector = a.column(j).into_owned();
        let mut ok = reorthogonalize(&q, j, &mut col);
        let mut e = 0;
        while !ok {
            col = CVector::zeros(n);
            col[e] = Complex64::new(1.0, 0.0);
            ok = reorthogonalize(&q, j, &mut col);
            e += 1;
        }
        q.set_column(j, &col);
    }
    q
}

fn reorthogonalize(q: &CMatrix, upto: usize, col: &mut CVector) -> bool {
    let start = col.norm();
    for _ in 0..2 {
        for i in 0..upto {
            let qi = q.column(i);
            let proj = qi.dotc(col);
            *col -= qi * proj;
        }
    }
    let norm = col.norm();
    if norm <= 1e-10 * start.max(1.0) {
        return false;
    }
    *col /= Complex64::new(norm, 0.0);
    true
}

/// Completes orthonormal columns `u`, `v` into a unitary basis `[u, v, w_3, …]`.
pub fn complete_basis(u: &CVector, v: &CVector) -> CMatrix {
    let n = u.len();
    let mut a = CMatrix::identity(n, n);
    a.set_column(0, u);
    if n > 1 {
        a.set_column(1, v);
        // fill remaining columns from the standard basis
        for j in 2..n {
            a.set_column(j, &CVector::from_fn(n, |i, _| {
                if i == j - 2 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
            }));
        }
    }
    orthonormalize_columns(&a)
}

/// Central finite-difference Jacobian of `f` at `x`.
pub fn numerical_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Matrix exponential of a real square matrix by scaling and squaring with a
/// truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm: f64 = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.125 {
        scale *= 0.5;
        squarings += 1;
    }
    let b = a * scale;
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=20 {
        term = &term * &b / (k as f64);
        sum += &term;
        if term.amax() < 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let g = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn jacobi_matches_nalgebra_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=8 {
            let a = random_hermitian(n, &mut rng);
            let ours = hermitian_eigen(&a);
            let mut reference: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            for (x, y) in ours.values.iter().zip(&reference) {
                assert!((x - y).abs() < 1e-10, "n={n}: {x} vs {y}");
            }
            let rebuilt = ours.map(|l| l);
            assert!((rebuilt - &a).norm() < 1e-10 * a.norm().max(1.0));
            let vv = ours.vectors.adjoint() * &ours.vectors;
            assert!((vv - CMatrix::identity(n, n)).norm() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_all_ones() {
        let a = to_complex(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        let e = hermitian_eigen(&a);
        assert!(e.values[0].abs() < 1e-15);
        assert!((e.values[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn complete_basis_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_unitary(5, &mut rng);
        let u = q.column(0).into_owned();
        let v = q.column(1).into_owned();
        let b = complete_basis(&u, &v);
        assert!((b.adjoint() * &b - CMatrix::identity(5, 5)).norm() < 1e-12);
        assert!((b.column(0) - &u).norm() < 1e-12);
        assert!((b.column(1) - &v).norm() < 1e-12);
    }

    #[test]
    fn expm_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0, 0.5]));
        let e = expm(&a);
        for (i, x) in [1.0f64, -2.0, 0.5].iter().enumerate() {
            assert!((e[(i, i)] - x.exp()).abs() < 1e-13 * x.exp().max(1.0));
        }
    }

    #[test]
    fn expm_rotation_generator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = expm(&(a * 3.0));
        assert!((e[(0, 0)] - 3.0f64.cos()).abs() < 1e-13);
        assert!((e[(1, 0)] - 3.0f64.sin()).abs() < 1e-13);
    }
}
