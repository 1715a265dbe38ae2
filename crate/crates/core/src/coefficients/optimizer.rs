//! Multi-start local search over unit vectors.
//!
//! A start is one or two random unitary bases; the optimized vectors are
//! fixed columns of those bases. Moves are complex Givens rotations mixing
//! two columns, which keep every basis unitary. Each start runs BFGS in the
//! chart of all relevant rotations, then pattern search per rotation.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::linalg::{self, CMatrix};
use crate::sampling::stream_rng;

const MIN_STEP: f64 = 1e-8;
/// Relative gain a trial point needs over the current value; smaller gains
/// are rounding noise and would let the search drift along plateaus.
const NOISE_GAIN: f64 = 16.0 * f64::EPSILON;
/// Trial evaluations allowed for one Givens pair within a pattern sweep.
const MOVE_BUDGET: usize = 400;
/// Central-difference step for gradients in the Givens chart.
const GRAD_STEP: f64 = 1e-6;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_sweeps: usize,
    /// A start stops once a full sweep improves the objective by less than this.
    pub tol: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions { starts: 64, seed: 0, max_sweeps: 500, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerDiagnostics {
    pub starts: usize,
    pub best_start: usize,
    /// Sweeps used by the best start.
    pub sweeps: usize,
    /// Starts that met the improvement tolerance before `max_sweeps`.
    pub converged_starts: usize,
    pub evaluations: usize,
    /// Best value reached by any other start.
    pub runner_up: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Frame {
    /// One basis; columns 0 and 1 are an orthonormal pair.
    OrthonormalPair,
    /// Two bases; column 0 of each is a free unit vector.
    IndependentPair,
}

impl Frame {
    fn bases(self) -> usize {
        match self {
            Frame::OrthonormalPair => 1,
            Frame::IndependentPair => 2,
        }
    }

    fn moves(self, n: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        match self {
            Frame::OrthonormalPair => {
                for a in 0..2.min(n) {
                    for c in (a + 1)..n {
                        out.push((0, a, c));
                    }
                }
            }
            Frame::IndependentPair => {
                for b in 0..2 {
                    for c in 1..n {
                        out.push((b, 0, c));
                    }
                }
            }
        }
        out
    }
}

pub(crate) struct FrameOptimum {
    #[allow(dead_code)] // read in tests; callers re-evaluate at the witness
    pub value: f64,
    pub bases: Vec<CMatrix>,
    pub diagnostics: OptimizerDiagnostics,
}

struct StartResult {
    value: f64,
    bases: Vec<CMatrix>,
    sweeps: usize,
    converged: bool,
    evaluations: usize,
}

fn rotate(basis: &CMatrix, a: usize, c: usize, theta: f64, phi: f64) -> CMatrix {
    let (s, co) = theta.sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    let mut out = basis.clone();
    let ca = basis.column(a);
    let cc = basis.column(c);
    let new_a = ca * Complex64::new(co, 0.0) + cc * (e * s);
    let new_c = ca * (-e.conj() * s) + cc * Complex64::new(co, 0.0);
    out.set_column(a, &new_a);
    out.set_column(c, &new_c);
    out
}

/// Maximizes `objective` over the frame. `+inf` is accepted as a terminal value.
pub(crate) fn maximize<F>(n: usize, frame: Frame, opts: &OptimizerOptions, objective: F) -> FrameOptimum
where
    F: Fn(&[CMatrix]) -> f64 + Sync,
{
    let starts = opts.starts.max(1);
    let moves = frame.moves(n);
    let results: Vec<StartResult> = (0..starts)
        .into_par_iter()
        .map(|idx| run_start(n, frame, &moves, opts, idx, &objective))
        .collect();

    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.value > results[best].value {
            best = i;
        }
    }
    let runner_up = results
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, r)| r.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let diagnostics = OptimizerDiagnostics {
        starts,
        best_start: best,
        sweeps: results[best].sweeps,
        converged_starts: results.iter().filter(|r| r.converged).count(),
        evaluations: results.iter().map(|r| r.evaluations).sum(),
        runner_up,
    };
    let winner = results.into_iter().nth(best).unwrap();
    FrameOptimum { value: winner.value, bases: winner.bases, diagnostics }
}

/// `rotate` in Cartesian coordinates `z = x + iy = theta e^{i phi}`, which are
/// smooth at the identity.
fn rotate_xy(basis: &CMatrix, a: usize, c: usize, x: f64, y: f64) -> CMatrix {
    let r = x.hypot(y);
    if r == 0.0 {
        basis.clone()
    } else {
        rotate(basis, a, c, r, y.atan2(x))
    }
}

fn chart(bases: &[CMatrix], moves: &[(usize, usize, usize)], xi: &[f64]) -> Vec<CMatrix> {
    let mut out = bases.to_vec();
    for (k, &(b, a, c)) in moves.iter().enumerate() {
        out[b] = rotate_xy(&out[b], a, c, xi[2 * k], xi[2 * k + 1]);
    }
    out
}

struct Search<'a, F> {
    moves: &'a [(usize, usize, usize)],
    objective: &'a F,
    evaluations: usize,
}

impl<F: Fn(&[CMatrix]) -> f64> Search<'_, F> {
    fn eval(&mut self, bases: &[CMatrix], xi: &[f64]) -> f64 {
        self.evaluations += 1;
        (self.objective)(&chart(bases, self.moves, xi))
    }

    fn gradient(&mut self, bases: &[CMatrix]) -> Option<Vec<f64>> {
        let p = 2 * self.moves.len();
        let mut g = vec![0.0; p];
        let mut xi = vec![0.0; p];
        for k in 0..p {
            xi[k] = GRAD_STEP;
            let up = self.eval(bases, &xi);
            xi[k] = -GRAD_STEP;
            let down = self.eval(bases, &xi);
            xi[k] = 0.0;
            if !up.is_finite() || !down.is_finite() {
                return None;
            }
            g[k] = (up - down) / (2.0 * GRAD_STEP);
        }
        Some(g)
    }

    /// One sweep of pattern search over every Givens pair, capped at
    /// `MOVE_BUDGET` trial points per pair.
    fn pattern_sweep(&mut self, bases: &mut [CMatrix], value: &mut f64) {
        for &(b, a, c) in self.moves {
            let origin = bases[b].clone();
            let (mut theta, mut phi, mut step) = (0.0, 0.0, FRAC_PI_4);
            let budget_end = self.evaluations + MOVE_BUDGET;
            while step > MIN_STEP && *value < f64::INFINITY && self.evaluations < budget_end {
                let mut improved = false;
                for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                    bases[b] = rotate(&origin, a, c, theta + dt, phi + dp);
                    let v = (self.objective)(bases);
                    self.evaluations += 1;
                    if v > *value + NOISE_GAIN * value.abs().max(1.0) {
                        *value = v;
                        theta += dt;
                        phi += dp;
                        improved = true;
                        break;
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            bases[b] = rotate(&origin, a, c, theta, phi);
        }
    }
}

/// Quasi-Newton ascent in the Givens chart around the current frame, which
/// is re-centred after every accepted step. Where the objective is not
/// differentiable the search falls back to a pattern sweep, and it finishes
/// with pattern sweeps to settle on kinks.
fn run_start<F>(
    n: usize,
    frame: Frame,
    moves: &[(usize, usize, usize)],
    opts: &OptimizerOptions,
    idx: usize,
    objective: &F,
) -> StartResult
where
    F: Fn(&[CMatrix]) -> f64,
{
    let mut rng = stream_rng(opts.seed, idx as u64);
    let mut bases: Vec<CMatrix> = (0..frame.bases()).map(|_| linalg::random_unitary(n, &mut rng)).collect();
    let mut search = Search { moves, objective, evaluations: 0 };
    let mut value = objective(&bases);
    search.evaluations += 1;
    let p = 2 * moves.len();
    let mut h = DMatrix::<f64>::identity(p, p);
    let mut grad: Option<DVector<f64>> = None;
    let mut sweeps = 0;
    let mut converged = false;
    let mut fresh_metric = true;

    while sweeps < opts.max_sweeps && value < f64::INFINITY {
        sweeps += 1;
        let before = value;
        let g = match grad.take() {
            Some(g) => g,
            None => match search.gradient(&bases) {
                Some(g) => DVector::from_vec(g),
                None => {
                    search.pattern_sweep(&mut bases, &mut value);
                    h = DMatrix::identity(p, p);
                    if !(value - before >= opts.tol) {
                        converged = true;
                        break;
                    }
                    continue;
                }
            },
        };
        let mut d = &h * &g;
        let mut slope = g.dot(&d);
        if !(slope > 0.0) {
            h = DMatrix::identity(p, p);
            d = g.clone();
            slope = g.dot(&g);
            fresh_metric = true;
        }
        let dmax = d.amax();
        if dmax > FRAC_PI_4 {
            d *= FRAC_PI_4 / dmax;
            slope *= FRAC_PI_4 / dmax;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xi: Vec<f64> = (&d * t).iter().copied().collect();
            let v = search.eval(&bases, &xi);
            if v.is_nan() {
                t *= 0.5;
                continue;
            }
            if v >= value + ARMIJO * t * slope || v == f64::INFINITY {
                accepted = Some((xi, v));
                break;
            }
            t *= 0.5;
        }
        let improved = match accepted {
            Some((xi, v)) if v > value + NOISE_GAIN * value.abs().max(1.0) => {
                bases = chart(&bases, moves, &xi);
                for basis in bases.iter_mut() {
                    *basis = linalg::orthonormalize_columns(basis);
                }
                value = objective(&bases);
                search.evaluations += 1;
                if value == f64::INFINITY {
                    break;
                }
                if let Some(g_new) = search.gradient(&bases) {
                    let g_new = DVector::from_vec(g_new);
                    // BFGS on the inverse Hessian of -f
                    let s = DVector::from_vec(xi);
                    let y = &g - &g_new;
                    let sy = s.dot(&y);
                    if sy > 1e-14 * s.norm() * y.norm() {
                        let rho = 1.0 / sy;
                        let hy = &h * &y;
                        h += (&s * s.transpose()) * (rho * (1.0 + rho * y.dot(&hy)))
                            - (&hy * s.transpose() + &s * hy.transpose()) * rho;
                        fresh_metric = false;
                    }
                    grad = Some(g_new);
                }
                true
            }
            _ => false,
        };
        if !improved || value - before < opts.tol {
            if !fresh_metric {
                // retry once along the gradient before stopping
                h = DMatrix::identity(p, p);
                fresh_metric = true;
                if improved {
                    continue;
                }
                grad = Some(g);
                continue;
            }
            let polished = value;
            search.pattern_sweep(&mut bases, &mut value);
            if !(value - polished >= opts.tol) {
                converged = true;
                break;
            }
            grad = None;
        }
    }
    if value == f64::INFINITY {
        converged = true;
    }
    StartResult { value, bases, sweeps, converged, evaluations: search.evaluations }
}
