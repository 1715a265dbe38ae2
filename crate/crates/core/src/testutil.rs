use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::CMatrix;

/// Random row-stochastic matrix; roughly a third of the entries are zero.
pub fn random_stochastic<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(n, n, |_, _| {
        if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random::<f64>()
        }
    });
    for i in 0..n {
        if a.row(i).sum() == 0.0 {
            a[(i, rng.random_range(0..n))] = 1.0;
        }
        let s = a.row(i).sum();
        for j in 0..n {
            a[(i, j)] /= s;
        }
    }
    a
}

pub fn random_positive_stochastic<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.0));
    for i in 0..n {
        let s = a.row(i).sum();
        for j in 0..n {
            a[(i, j)] /= s;
        }
    }
    a
}

pub fn random_hermitian<R: Rng>(n: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}
