use nalgebra::{DMatrix, DVector};

use super::{BoundKind, CoefficientReport, Method, Witness};
use crate::cone::{self, RealVector};
use crate::error::{Error, Result};
use crate::linalg;
use crate::markov::normalized_stochastic;
use crate::sampling::{parallel_argmax, Sampler};

/// Row sums must agree to this (relative) tolerance for the Hopf operator norm.
pub const ROW_SUM_TOL: f64 = 1e-10;

const TAU_CROSS_CHECK: f64 = 1e-12;
const HOMOGENEITY_TOL: f64 = 1e-8;
const EULER_TOL: f64 = 1e-6;

fn check_square(a: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Dimension { expected: n.max(1), found: a.ncols() });
    }
    Ok(n)
}

fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    match a.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// `(1/2) max_{i<j} |row_i - row_j|_1` with the maximizing pair.
/// Returns `(0, 0, 0)` for a single row.
pub fn row_oscillation(m: &DMatrix<f64>) -> (f64, usize, usize) {
    let n = m.nrows();
    let mut best = (0.0, 0, usize::from(n > 1));
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = (0..m.ncols()).map(|s| (m[(i, s)] - m[(j, s)]).abs()).sum();
            if d / 2.0 > best.0 {
                best = (d / 2.0, i, j);
            }
        }
    }
    best
}

/// Dobrushin's ergodicity coefficient `1 - min_{i != j} sum_s min(A_is, A_js)`.
///
/// The value is cross-checked against half the largest l1 distance between rows.
pub fn dobrushin_tau(a: &DMatrix<f64>) -> Result<CoefficientReport> {
    let a = normalized_stochastic(a)?;
    let n = a.nrows();
    if n < 2 {
        return Ok(CoefficientReport::exact(0.0, Witness::None));
    }
    let mut best = (f64::INFINITY, 0, 1);
    for i in 0..n {
        for j in (i + 1)..n {
            let overlap: f64 = (0..n).map(|s| a[(i, s)].min(a[(j, s)])).sum();
            if overlap < best.0 {
                best = (overlap, i, j);
            }
        }
    }
    let tau = (1.0 - best.0).clamp(0.0, 1.0);
    let (half_l1, _, _) = row_oscillation(&a);
    if (tau - half_l1).abs() > TAU_CROSS_CHECK {
        return Err(Error::Consistency(format!(
            "overlap form {tau:e} and half-l1 form {half_l1:e} of the ergodicity coefficient disagree"
        )));
    }
    Ok(CoefficientReport::exact(tau, Witness::Pair(best.1, best.2)))
}

/// Operator norm of `M` for Hopf's oscillation seminorm, `(1/2) max l1` row
/// difference. Requires `M 1 = c 1`.
pub fn hopf_opnorm_matrix(m: &DMatrix<f64>) -> Result<CoefficientReport> {
    let n = check_square(m)?;
    check_finite(m)?;
    let sums: Vec<f64> = (0..n).map(|i| m.row(i).sum()).collect();
    let scale = sums.iter().fold(1.0f64, |a, s| a.max(s.abs()));
    if let Some(i) = sums.iter().position(|s| (s - sums[0]).abs() > ROW_SUM_TOL * scale) {
        return Err(Error::domain(format!(
            "row sums differ (row 0 sums to {}, row {i} to {}); M does not fix the unit direction",
            sums[0], sums[i]
        )));
    }
    let (value, i, j) = row_oscillation(m);
    let witness = if n < 2 { Witness::None } else { Witness::Pair(i, j) };
    Ok(CoefficientReport::exact(value, witness))
}

/// The bracket `A_ji + A_ij + sum_{k != i,j} min(A_ik, A_jk)` whose negated
/// minimum over pairs is `h(A)`.
pub fn h_matrix_pair(a: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let n = a.nrows();
    let mut s = a[(j, i)] + a[(i, j)];
    for k in 0..n {
        if k != i && k != j {
            s += a[(i, k)].min(a[(j, k)]);
        }
    }
    s
}

/// Flow rate `h(A) = -min_{i != j} (A_ji + A_ij + sum_k min(A_ik, A_jk))`.
/// The diagonal of `A` is never read.
pub fn h_matrix(a: &DMatrix<f64>) -> Result<CoefficientReport> {
    let n = check_square(a)?;
    for i in 0..n {
        for j in 0..n {
            if i != j && !a[(i, j)].is_finite() {
                return Err(Error::NonFinite(i * n + j));
            }
        }
    }
    if n < 2 {
        return Ok(CoefficientReport::exact(0.0, Witness::None));
    }
    let mut best = (f64::INFINITY, 0, 1);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = h_matrix_pair(a, i, j);
            if s < best.0 {
                best = (s, i, j);
            }
        }
    }
    // -0.0 would print oddly
    let value = if best.0 == 0.0 { 0.0 } else { -best.0 };
    Ok(CoefficientReport::exact(value, Witness::Pair(best.1, best.2)))
}

/// Projective diameter of a nonnegative matrix: the largest Hilbert distance
/// between two columns. A column on the boundary of the orthant makes the
/// diameter infinite.
pub fn projective_diameter_matrix(a: &DMatrix<f64>) -> Result<CoefficientReport> {
    let n = check_square(a)?;
    check_finite(a)?;
    let cols: Vec<RealVector> = (0..n)
        .map(|j| RealVector::from_dvector(a.column(j).into_owned()))
        .collect::<Result<_>>()?;
    if let Some(j) = cols.iter().position(|c| !cone::is_interior(c)) {
        return Ok(CoefficientReport::exact(f64::INFINITY, Witness::Pair(j, j)));
    }
    let mut best = (0.0, 0, 0);
    for j in 0..n {
        for k in (j + 1)..n {
            let d = cone::hilbert_metric(&cols[j], &cols[k])?;
            if d > best.0 {
                best = (d, j, k);
            }
        }
    }
    Ok(CoefficientReport::exact(best.0, Witness::Pair(best.1, best.2)))
}

/// Birkhoff's contraction bound `tanh(diam / 4)`.
pub fn birkhoff_bound(diam: f64) -> Result<f64> {
    if diam.is_nan() || diam < 0.0 {
        return Err(Error::domain(format!("projective diameter must be nonnegative, got {diam}")));
    }
    if diam.is_infinite() {
        return Ok(1.0);
    }
    Ok((diam / 4.0).tanh())
}

/// A map of the open orthant into itself, positively homogeneous of degree one.
pub trait HomogeneousMap: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Defaults to central finite differences.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        linalg::numerical_jacobian(|y| self.eval(y), x)
    }
}

#[derive(Debug, Clone)]
pub struct LinearMap(pub DMatrix<f64>);

impl HomogeneousMap for LinearMap {
    fn dim(&self) -> usize {
        self.0.ncols()
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.0.clone()
    }
}

/// Wraps a closure; the Jacobian is taken by finite differences.
pub struct FnMap<F> {
    pub n: usize,
    pub f: F,
}

impl<F> HomogeneousMap for FnMap<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
}

/// Local Hilbert-metric Lipschitz constant of `f` at `x`:
/// the Hopf operator norm of `diag(f(x))^-1 Df(x) diag(x)`.
pub fn hilbert_lipschitz_at(f: &dyn HomogeneousMap, x: &DVector<f64>) -> Result<f64> {
    if x.len() != f.dim() {
        return Err(Error::Dimension { expected: f.dim(), found: x.len() });
    }
    let fx = f.eval(x);
    if let Some(i) = fx.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::domain(format!("f(x) is not strictly positive at coordinate {i}")));
    }
    let f2x = f.eval(&(x * 2.0));
    let defect = (&f2x - &fx * 2.0).amax();
    if defect > HOMOGENEITY_TOL * fx.amax() {
        return Err(Error::domain(format!(
            "map is not homogeneous of degree one: |f(2x) - 2f(x)| = {defect:e}"
        )));
    }
    let jac = f.jacobian(x);
    let m = DMatrix::from_fn(fx.len(), x.len(), |i, j| jac[(i, j)] * x[j] / fx[i]);
    for i in 0..m.nrows() {
        let s = m.row(i).sum();
        if (s - 1.0).abs() > EULER_TOL {
            return Err(Error::domain(format!(
                "Euler identity Df(x) x = f(x) fails in row {i} (ratio {s})"
            )));
        }
    }
    Ok(row_oscillation(&m).0)
}

/// Sampled supremum of [`hilbert_lipschitz_at`], a lower bound of the
/// Lipschitz constant of `f` in Hilbert's metric.
pub fn hilbert_lipschitz_homogeneous_map(
    f: &dyn HomogeneousMap,
    sampler: &dyn Sampler<DVector<f64>>,
    samples: usize,
    seed: u64,
) -> Result<CoefficientReport> {
    if samples == 0 {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let best = parallel_argmax(samples, seed, |rng, _| {
        let x = sampler.sample(rng);
        let v = hilbert_lipschitz_at(f, &x)?;
        Ok::<_, Error>(Some((v, x)))
    })?;
    let (value, _, x) = best.expect("at least one sample");
    Ok(CoefficientReport {
        value,
        witness: Witness::Point(x),
        method: Method::Sampled,
        bound_kind: BoundKind::Lower,
        diagnostics: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::hopf_oscillation;
    use crate::sampling::{stream_rng, LogBoxSampler};
    use crate::testutil::{random_positive_stochastic, random_stochastic};
    use proptest::prelude::*;
    use rand::Rng;

    fn m(n: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, v)
    }

    /// sup over non-constant 0/1 vectors of osc(Ax) / osc(x).
    fn vertex_oracle(a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        let mut best = 0.0f64;
        for mask in 1..(1u32 << n) - 1 {
            let x = DVector::from_fn(n, |i, _| ((mask >> i) & 1) as f64);
            let ax = a * &x;
            let r = RealVector::from_dvector(ax).unwrap();
            best = best.max(hopf_oscillation(&r));
        }
        best
    }

    #[test]
    fn tau_examples() {
        let r = dobrushin_tau(&m(2, &[0.5, 0.5, 0.5, 0.5])).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(dobrushin_tau(&DMatrix::identity(2, 2)).unwrap().value, 1.0);
        let a = m(3, &[0.8, 0.2, 0.0, 0.2, 0.8, 0.0, 0.0, 0.3, 0.7]);
        let r = dobrushin_tau(&a).unwrap();
        assert!((r.value - 0.8).abs() < 1e-15);
        assert!((vertex_oracle(&a) - 0.8).abs() < 1e-15);
        assert_eq!(r.witness, Witness::Pair(0, 2));
        assert_eq!(r.bound_kind, BoundKind::Exact);
    }

    #[test]
    fn tau_rejects_non_stochastic() {
        let err = dobrushin_tau(&m(2, &[0.5, 0.6, 0.5, 0.5])).unwrap_err();
        assert!(matches!(err, Error::NotStochastic { row: 0, .. }));
    }

    #[test]
    fn tau_accepts_rounding_noise() {
        let a = m(2, &[0.9 + 1e-11, 0.1, -1e-13, 1.0]);
        let r = dobrushin_tau(&a).unwrap();
        assert!((r.value - 0.9).abs() < 1e-10);
    }

    #[test]
    fn hopf_opnorm_examples() {
        assert_eq!(hopf_opnorm_matrix(&DMatrix::identity(2, 2)).unwrap().value, 1.0);
        let r = hopf_opnorm_matrix(&m(2, &[2.0, -1.0, -1.0, 2.0])).unwrap();
        assert_eq!(r.value, 3.0);
        let ones = DMatrix::from_element(3, 3, 2.5 / 3.0);
        assert_eq!(hopf_opnorm_matrix(&ones).unwrap().value, 0.0);
        assert!(matches!(
            hopf_opnorm_matrix(&m(2, &[1.0, 0.0, 1.0, 1.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn h_examples() {
        let a = m(3, &[-3.0, 1.0, 2.0, 1.0, 0.0, -1.0, 1.0, 1.0, -2.0]);
        assert_eq!(h_matrix(&a).unwrap().value, -1.0);
        assert_eq!(h_matrix(&DMatrix::zeros(3, 3)).unwrap().value, 0.0);
        let lap = m(3, &[-2.0, 1.0, 1.0, 1.0, -2.0, 1.0, 1.0, 1.0, -2.0]);
        assert_eq!(h_matrix(&lap).unwrap().value, -3.0);
        let t = 1e-5;
        let fd = (hopf_opnorm_matrix(&linalg::expm(&(&lap * t))).unwrap().value - 1.0) / t;
        assert!((fd + 3.0).abs() < 1e-3);
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(projective_diameter_matrix(&DMatrix::from_element(2, 2, 0.5)).unwrap().value, 0.0);
        let d = projective_diameter_matrix(&m(2, &[2.0, 1.0, 1.0, 2.0])).unwrap().value;
        assert!((d - 4f64.ln()).abs() < 1e-15);
        assert_eq!(
            projective_diameter_matrix(&DMatrix::identity(2, 2)).unwrap().value,
            f64::INFINITY
        );
    }

    #[test]
    fn birkhoff_examples() {
        assert_eq!(birkhoff_bound(0.0).unwrap(), 0.0);
        assert_eq!(birkhoff_bound(f64::INFINITY).unwrap(), 1.0);
        // tanh(log(k) / 4) = (sqrt(k) - 1) / (sqrt(k) + 1)
        assert!((birkhoff_bound(4f64.ln()).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(birkhoff_bound(-1.0).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let sampler = LogBoxSampler { n: 3, half_width: 2.0 };
        let id = LinearMap(DMatrix::identity(3, 3));
        let r = hilbert_lipschitz_homogeneous_map(&id, &sampler, 50, 1).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
        assert_eq!(r.bound_kind, BoundKind::Lower);

        let rank_one = FnMap { n: 2, f: |x: &DVector<f64>| DVector::from_vec(vec![x[0], x[0]]) };
        let sampler2 = LogBoxSampler { n: 2, half_width: 2.0 };
        let r = hilbert_lipschitz_homogeneous_map(&rank_one, &sampler2, 50, 1).unwrap();
        assert!(r.value.abs() < 1e-9);

        let square = FnMap { n: 2, f: |x: &DVector<f64>| x.map(|t| t * t) };
        assert!(matches!(
            hilbert_lipschitz_homogeneous_map(&square, &sampler2, 5, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn lipschitz_linear_matches_direct_formula() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..20 {
            let n = rng.random_range(2..5);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.1..2.0));
            let x = DVector::from_fn(n, |_, _| rng.random_range(0.1..3.0));
            let ax = &a * &x;
            let inner = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * x[j] / ax[i]);
            let direct = hopf_opnorm_matrix(&inner).unwrap().value;
            let ours = hilbert_lipschitz_at(&LinearMap(a.clone()), &x).unwrap();
            assert!((direct - ours).abs() < 1e-12);
            let fd = FnMap { n, f: |y: &DVector<f64>| &a * y };
            assert!((hilbert_lipschitz_at(&fd, &x).unwrap() - direct).abs() < 1e-6);
        }
    }

    fn stochastic_pair() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
        (2usize..7, any::<u64>()).prop_map(|(n, seed)| {
            let mut rng = stream_rng(seed, 0);
            (random_stochastic(n, &mut rng), random_stochastic(n, &mut rng))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn tau_matches_vertex_enumeration((a, _b) in stochastic_pair()) {
            let tau = dobrushin_tau(&a).unwrap().value;
            prop_assert!((tau - vertex_oracle(&a)).abs() < 1e-12);
        }

        #[test]
        fn tau_submultiplicative((a, b) in stochastic_pair()) {
            let ab = dobrushin_tau(&(&a * &b)).unwrap().value;
            let ta = dobrushin_tau(&a).unwrap().value;
            let tb = dobrushin_tau(&b).unwrap().value;
            prop_assert!(ab <= ta * tb + 1e-10);
        }

        #[test]
        fn tau_below_birkhoff(n in 2usize..7, seed in any::<u64>()) {
            let a = random_positive_stochastic(n, &mut stream_rng(seed, 1));
            let tau = dobrushin_tau(&a).unwrap().value;
            let diam = projective_diameter_matrix(&a).unwrap().value;
            prop_assert!(tau <= birkhoff_bound(diam).unwrap() + 1e-10);
        }

        #[test]
        fn column_pairs_dominate_random_pairs(n in 2usize..6, seed in any::<u64>()) {
            let mut rng = stream_rng(seed, 2);
            let a = random_positive_stochastic(n, &mut rng);
            let diam = projective_diameter_matrix(&a).unwrap().value;
            for _ in 0..50 {
                let x = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
                let y = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
                let ax = RealVector::from_dvector(&a * x).unwrap();
                let ay = RealVector::from_dvector(&a * y).unwrap();
                prop_assert!(cone::hilbert_metric(&ax, &ay).unwrap() <= diam + 1e-10);
            }
        }

        #[test]
        fn h_ignores_diagonal(n in 2usize..7, seed in any::<u64>()) {
            let mut rng = stream_rng(seed, 3);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
            let mut shifted = a.clone();
            for i in 0..n {
                shifted[(i, i)] -= rng.random_range(-5.0..5.0);
            }
            prop_assert_eq!(h_matrix(&a).unwrap().value, h_matrix(&shifted).unwrap().value);
        }

        #[test]
        fn h_matches_finite_difference(n in 2usize..6, seed in any::<u64>()) {
            let mut rng = stream_rng(seed, 4);
            let mut a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(-0.5..2.0) });
            for i in 0..n {
                a[(i, i)] = -a.row(i).sum();
            }
            let t = 1e-5;
            let e = linalg::expm(&(&a * t));
            let fd = (row_oscillation(&e).0 - 1.0) / t;
            prop_assert!((fd - h_matrix(&a).unwrap().value).abs() <= 1e-3);
        }
    }
}
