use super::optimizer::{maximize, Frame, FrameOptimum};
use super::{BoundKind, CoefficientReport, HermitianLinearMap, Method, OptimizerOptions, Witness};
use crate::cone::{self, HermitianMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::quantum::{KrausChannel, UNITAL_TOL};

/// Tolerance on `Phi(I) = c I` for the Hopf operator norm.
pub const UNIT_TOL: f64 = 1e-9;

/// The two evaluations of the noncommutative Dobrushin coefficient must agree
/// to this tolerance at the returned witness.
pub const CROSS_EVAL_TOL: f64 = 1e-9;

fn check_options(opts: &OptimizerOptions) -> Result<()> {
    if opts.starts == 0 {
        return Err(Error::Precondition("optimizer needs at least one start".into()));
    }
    if !(opts.tol >= 0.0) {
        return Err(Error::Precondition("optimizer tolerance must be nonnegative".into()));
    }
    Ok(())
}

fn optimized(opt: FrameOptimum, value: f64, witness: Witness) -> CoefficientReport {
    CoefficientReport {
        value,
        witness,
        method: Method::Optimized,
        bound_kind: BoundKind::Lower,
        diagnostics: Some(opt.diagnostics),
    }
}

/// `(1/2) |Phi^*(u u^*) - Phi^*(v v^*)|_1`.
pub fn hopf_pair_objective(phi: &HermitianLinearMap, u: &CVector, v: &CVector) -> f64 {
    let k = phi.adjoint_on_projector(u) - phi.adjoint_on_projector(v);
    0.5 * linalg::trace_norm(&k)
}

/// Operator norm of `Phi` for the spectral oscillation seminorm, maximized
/// over orthonormal pairs `(u, v)` of
/// `(1/2) |Phi^*(u u^*) - Phi^*(v v^*)|_1`. The value is the best local
/// maximum found, hence a lower bound.
pub fn hopf_opnorm_hermitian_map(
    phi: &HermitianLinearMap,
    opts: &OptimizerOptions,
) -> Result<CoefficientReport> {
    check_options(opts)?;
    phi.unit_scalar(UNIT_TOL)?;
    let n = phi.dim();
    if n < 2 {
        return Ok(CoefficientReport::exact(0.0, Witness::None));
    }
    let opt = maximize(n, Frame::OrthonormalPair, opts, |b| {
        hopf_pair_objective(phi, &b[0].column(0).into_owned(), &b[0].column(1).into_owned())
    });
    let u = opt.bases[0].column(0).into_owned();
    let v = opt.bases[0].column(1).into_owned();
    let value = hopf_pair_objective(phi, &u, &v);
    Ok(optimized(opt, value, Witness::Vectors(u, v)))
}

/// Evaluates the noncommutative Dobrushin coefficient at `(u, v)` in two ways:
/// `1 - sum_i min(u^* Phi(x_i x_i^*) u, v^* Phi(x_i x_i^*) v)` over the
/// eigenbasis `x_i` of `Phi^*(u u^*) - Phi^*(v v^*)`, and half the trace norm of
/// that difference. They agree when `Phi` is unital.
pub fn dual_contraction_forms(phi: &HermitianLinearMap, u: &CVector, v: &CVector) -> (f64, f64) {
    let k = phi.adjoint_on_projector(u) - phi.adjoint_on_projector(v);
    let eig = linalg::hermitian_eigen(&k);
    let mut overlap = 0.0;
    for i in 0..eig.values.len() {
        let x = eig.vectors.column(i).into_owned();
        let img = phi.apply_on_projector(&x);
        overlap += linalg::quadratic_form(&img, u).min(linalg::quadratic_form(&img, v));
    }
    let half_trace = 0.5 * eig.values.iter().map(|l| l.abs()).sum::<f64>();
    (1.0 - overlap, half_trace)
}

/// Noncommutative Dobrushin coefficient of a unital Kraus channel.
pub fn noncommutative_dobrushin(
    channel: &KrausChannel,
    opts: &OptimizerOptions,
) -> Result<CoefficientReport> {
    let defect = channel.unitality_defect();
    if defect > UNITAL_TOL {
        return Err(Error::NotUnital(defect));
    }
    let phi = channel.phi_map();
    let report = hopf_opnorm_hermitian_map(&phi, opts)?;
    if let Witness::Vectors(u, v) = &report.witness {
        let (a, b) = dual_contraction_forms(&phi, u, v);
        if (a - b).abs() > CROSS_EVAL_TOL {
            return Err(Error::Consistency(format!(
                "overlap form {a:e} and trace-norm form {b:e} disagree at the witness"
            )));
        }
    }
    Ok(report)
}

/// The bracket minimized in `h(Phi)` for the orthonormal pair `(x1, x2)` given
/// as the first two columns of the unitary `basis`, with the completion
/// `x3, ..., xn` chosen optimally (spectral split of the compressed
/// difference `Phi^*(x1 x1^*) - Phi^*(x2 x2^*)`).
fn h_bracket(phi: &HermitianLinearMap, basis: &CMatrix) -> f64 {
    let n = basis.nrows();
    let x1 = basis.column(0).into_owned();
    let x2 = basis.column(1).into_owned();
    let a1 = phi.adjoint_on_projector(&x1);
    let a2 = phi.adjoint_on_projector(&x2);
    let mut g = linalg::quadratic_form(&a1, &x2) + linalg::trace(&a2).re - linalg::quadratic_form(&a2, &x2);
    if n > 2 {
        let w = basis.columns(2, n - 2).into_owned();
        let k = w.adjoint() * (&a1 - &a2) * &w;
        g += linalg::hermitian_eigenvalues(&k).iter().filter(|l| **l < 0.0).sum::<f64>();
    }
    g
}

/// The bracket of `h(Phi)` at an orthonormal pair `(x1, x2)`.
pub fn h_pair_objective(phi: &HermitianLinearMap, x1: &CVector, x2: &CVector) -> f64 {
    h_bracket(phi, &linalg::complete_basis(x1, x2))
}

/// Flow rate `h(Phi)` of a linear map on Hermitian matrices: minus the
/// minimum over orthonormal `(x1, x2)` of
/// `x1^* Phi(x2 x2^*) x1 + x2^* Phi(x1 x1^*) x2 + sum_k min(x1^* Phi(x_k x_k^*) x1, x2^* Phi(x_k x_k^*) x2)`.
///
/// The completion is solved exactly and the pair by local search, so the
/// reported value is a lower bound of `h`.
pub fn h_hermitian_map(phi: &HermitianLinearMap, opts: &OptimizerOptions) -> Result<CoefficientReport> {
    check_options(opts)?;
    let n = phi.dim();
    if n < 2 {
        return Ok(CoefficientReport::exact(0.0, Witness::None));
    }
    let opt = maximize(n, Frame::OrthonormalPair, opts, |b| -h_bracket(phi, &b[0]));
    let value = -h_bracket(phi, &opt.bases[0]);
    let witness = Witness::Vectors(opt.bases[0].column(0).into_owned(), opt.bases[0].column(1).into_owned());
    Ok(optimized(opt, value, witness))
}

/// `d_H(Phi(x x^*), Phi(y y^*))`, infinite when either image is singular.
pub fn rank_one_distance(phi: &HermitianLinearMap, x: &CVector, y: &CVector) -> f64 {
    let p = HermitianMatrix::hermitian_part(&phi.apply_on_projector(x));
    let q = HermitianMatrix::hermitian_part(&phi.apply_on_projector(y));
    cone::hilbert_metric(&p, &q).unwrap_or(f64::INFINITY)
}

/// Projective diameter of a positive map on Hermitian matrices: the supremum
/// of [`rank_one_distance`] over pure states, approached by multi-start local
/// search. Reported as a lower bound; `+inf` when some pure state is mapped
/// to the boundary of the cone.
pub fn projective_diameter_map(
    phi: &HermitianLinearMap,
    opts: &OptimizerOptions,
) -> Result<CoefficientReport> {
    check_options(opts)?;
    let n = phi.dim();
    if n < 2 {
        return Ok(CoefficientReport::exact(0.0, Witness::None));
    }
    let opt = maximize(n, Frame::IndependentPair, opts, |b| {
        rank_one_distance(phi, &b[0].column(0).into_owned(), &b[1].column(0).into_owned())
    });
    let x = opt.bases[0].column(0).into_owned();
    let y = opt.bases[1].column(0).into_owned();
    let value = rank_one_distance(phi, &x, &y);
    Ok(optimized(opt, value, Witness::Vectors(x, y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{birkhoff_bound, dobrushin_tau};
    use crate::quantum::{sample_dual_ratio, KrausChannel};
    use crate::sampling::stream_rng;
    use crate::testutil::{random_hermitian, random_stochastic};
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn opts(seed: u64) -> OptimizerOptions {
        OptimizerOptions { seed, ..Default::default() }
    }

    fn trace_map(n: usize) -> HermitianLinearMap {
        HermitianLinearMap::from_fn(n, |x| {
            CMatrix::identity(n, n) * (linalg::trace(x) / Complex64::new(n as f64, 0.0))
        })
        .unwrap()
    }

    #[test]
    fn hopf_identity_and_constant_maps() {
        let r = hopf_opnorm_hermitian_map(&HermitianLinearMap::identity(2), &opts(1)).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.bound_kind, BoundKind::Lower);
        let r = hopf_opnorm_hermitian_map(&trace_map(3), &opts(1)).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn hopf_rejects_non_unit_preserving() {
        let skew = HermitianLinearMap::from_fn(2, |x| {
            let mut y = x.clone();
            y[(0, 0)] *= 3.0;
            y
        })
        .unwrap();
        assert!(matches!(hopf_opnorm_hermitian_map(&skew, &opts(0)), Err(Error::Domain(_))));
    }

    #[test]
    fn witness_reproduces_value() {
        let mut rng = stream_rng(21, 0);
        let ch = KrausChannel::random_unital(3, 2, &mut rng);
        let r = noncommutative_dobrushin(&ch, &opts(3)).unwrap();
        let Witness::Vectors(u, v) = &r.witness else { panic!("missing witness") };
        assert!((hopf_pair_objective(&ch.phi_map(), u, v) - r.value).abs() < 1e-9);
        assert!(u.dotc(v).norm() < 1e-10);
        assert!(r.value >= 0.0 && r.value <= 1.0 + 1e-12);
    }

    #[test]
    fn h_examples() {
        let r = h_hermitian_map(&HermitianLinearMap::zero(3), &opts(0)).unwrap();
        assert!(r.value.abs() < 1e-15);
        for n in 2..5 {
            let phi = trace_map(n).sub(&HermitianLinearMap::identity(n));
            let r = h_hermitian_map(&phi, &opts(n as u64)).unwrap();
            assert!((r.value + 1.0).abs() < 1e-9, "n={n}: {}", r.value);
            let t = 1e-5;
            let fd = (hopf_opnorm_hermitian_map(&phi.exp(t), &opts(7)).unwrap().value - 1.0) / t;
            assert!((fd + 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn h_witness_reproduces_value() {
        let mut rng = stream_rng(22, 0);
        let n = 3;
        let phi = HermitianLinearMap::from_real_matrix(
            n,
            DMatrix::from_fn(n * n, n * n, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0)),
        )
        .unwrap();
        let r = h_hermitian_map(&phi, &opts(5)).unwrap();
        let Witness::Vectors(x1, x2) = &r.witness else { panic!("missing witness") };
        assert!((-h_pair_objective(&phi, x1, x2) - r.value).abs() < 1e-9);
    }

    #[test]
    fn diameter_of_identity_is_infinite() {
        let id = KrausChannel::new(vec![CMatrix::identity(2, 2)]).unwrap();
        let r = projective_diameter_map(&id.phi_map(), &opts(0)).unwrap();
        assert_eq!(r.value, f64::INFINITY);
        assert_eq!(birkhoff_bound(r.value).unwrap(), 1.0);
    }

    #[test]
    fn sandwich_on_random_qubit_channels() {
        let mut rng = stream_rng(23, 0);
        for k in 0..5 {
            let ch = KrausChannel::random_unital(2, 2, &mut rng);
            let coef = noncommutative_dobrushin(&ch, &opts(k)).unwrap().value;
            let sampled = sample_dual_ratio(&ch, 2000, k).unwrap().value;
            let diam = projective_diameter_map(&ch.phi_map(), &opts(k)).unwrap().value;
            assert!(sampled <= coef + 1e-8);
            assert!(coef <= birkhoff_bound(diam).unwrap() + 1e-6);
        }
    }

    /// `Phi(X) = diag(A diag(X))` on Hermitian matrices.
    fn diagonal_map(a: &DMatrix<f64>) -> HermitianLinearMap {
        let n = a.nrows();
        HermitianLinearMap::from_fn(n, |x| {
            let mut out = CMatrix::zeros(n, n);
            for i in 0..n {
                let s: f64 = (0..n).map(|j| a[(i, j)] * x[(j, j)].re).sum();
                out[(i, i)] = Complex64::new(s, 0.0);
            }
            out
        })
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn diagonal_map_matches_dobrushin(n in 2usize..5, seed in any::<u64>()) {
            let a = random_stochastic(n, &mut stream_rng(seed, 0));
            let tau = dobrushin_tau(&a).unwrap().value;
            let phi = diagonal_map(&a);
            let r = hopf_opnorm_hermitian_map(&phi, &OptimizerOptions { starts: 16, seed, ..Default::default() }).unwrap();
            prop_assert!((r.value - tau).abs() <= 1e-6, "{} vs {}", r.value, tau);
        }

        #[test]
        fn h_invariant_under_hermitian_shift(n in 2usize..4, seed in any::<u64>()) {
            let mut rng = stream_rng(seed, 1);
            let d = n * n;
            let phi = HermitianLinearMap::from_real_matrix(
                n,
                DMatrix::from_fn(d, d, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0)),
            ).unwrap();
            let z = random_hermitian(n, &mut rng);
            let shifted = HermitianLinearMap::from_fn(n, |x| phi.apply_raw(x) - &z * x - x * &z).unwrap();
            let o = OptimizerOptions { starts: 32, seed, ..Default::default() };
            let h1 = h_hermitian_map(&phi, &o).unwrap().value;
            let h2 = h_hermitian_map(&shifted, &o).unwrap().value;
            prop_assert!((h1 - h2).abs() <= 1e-6, "{} vs {}", h1, h2);
        }
    }
}
