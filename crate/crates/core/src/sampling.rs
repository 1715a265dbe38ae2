//! Seeded samplers for the domains over which rates are maximized, and a
//! deterministic parallel arg-max.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cone::HermitianMatrix;
use crate::linalg::{self, CMatrix};

/// Samples per parallel batch. Fixed so results do not depend on thread count.
pub const BATCH: usize = 256;

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A distribution over points of a domain.
pub trait Sampler<S>: Sync {
    fn sample(&self, rng: &mut ChaCha8Rng) -> S;
    fn describe(&self) -> String;
}

/// Uniform samples of `{x : max x - min x < w, sum x = 0}`.
///
/// The first `n - 1` coordinates are drawn from `(-w, w)` and the last one
/// closes the sum; the map is linear so the result is uniform on the slice,
/// and points with oscillation `>= w` are rejected.
#[derive(Debug, Clone)]
pub struct OscillationSampler {
    pub n: usize,
    pub w: f64,
}

impl Sampler<DVector<f64>> for OscillationSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let n = self.n;
        if n <= 1 {
            return DVector::zeros(n);
        }
        loop {
            let mut x = DVector::zeros(n);
            let mut sum = 0.0;
            for i in 0..n - 1 {
                x[i] = rng.random_range(-self.w..self.w);
                sum += x[i];
            }
            x[n - 1] = -sum;
            if x.max() - x.min() < self.w {
                return x;
            }
        }
    }

    fn describe(&self) -> String {
        format!("uniform on {{oscillation < {}, sum = 0}} in dimension {}", self.w, self.n)
    }
}

/// Log-coordinates uniform in `[-half_width, half_width]^n`, exponentiated and
/// rescaled to geometric mean one.
#[derive(Debug, Clone)]
pub struct LogBoxSampler {
    pub n: usize,
    pub half_width: f64,
}

impl Sampler<DVector<f64>> for LogBoxSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let l = self.half_width;
        let logs: Vec<f64> = (0..self.n).map(|_| rng.random_range(-l..=l)).collect();
        let mean = logs.iter().sum::<f64>() / self.n as f64;
        DVector::from_iterator(self.n, logs.iter().map(|t| (t - mean).exp()))
    }

    fn describe(&self) -> String {
        format!(
            "log-uniform box of half-width {} in dimension {}, geometric mean 1",
            self.half_width, self.n
        )
    }
}

/// Positive definite matrices `U diag(exp(s)) U^*` with a random unitary `U`
/// and `s` uniform in `[-k/2, k/2]^n` shifted to mean zero, so that
/// `d_H(P, I) < k` and `det P = 1`.
#[derive(Debug, Clone)]
pub struct HilbertBallSampler {
    pub n: usize,
    pub radius: f64,
}

impl Sampler<HermitianMatrix> for HilbertBallSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> HermitianMatrix {
        let n = self.n;
        let half = self.radius / 2.0;
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-half..half)).collect();
        let mean = s.iter().sum::<f64>() / n as f64;
        let u = linalg::random_unitary(n, rng);
        let d = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new((s[i] - mean).exp(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        HermitianMatrix::hermitian_part(&(&u * d * u.adjoint()))
    }

    fn describe(&self) -> String {
        format!("Hilbert ball of radius {} around I in dimension {}", self.radius, self.n)
    }
}

/// Evaluates `eval` on `samples` draws split into fixed-size batches, each
/// batch with its own stream of `seed`, and returns the maximum by
/// `(value, sample index)` together with its payload.
///
/// `eval` receives the batch generator and the global sample index and
/// returns `Ok(None)` for draws that should be skipped. The first error
/// in batch order is returned.
pub fn parallel_argmax<T, E, F>(samples: usize, seed: u64, eval: F) -> Result<Option<(f64, usize, T)>, E>
where
    T: Send,
    E: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<Option<(f64, T)>, E> + Sync,
{
    let batches = samples.div_ceil(BATCH);
    let per_batch: Vec<Result<Option<(f64, usize, T)>, E>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let lo = b * BATCH;
            let hi = (lo + BATCH).min(samples);
            let mut best: Option<(f64, usize, T)> = None;
            for idx in lo..hi {
                if let Some((v, payload)) = eval(&mut rng, idx)? {
                    if best.as_ref().is_none_or(|(bv, _, _)| better(v, *bv)) {
                        best = Some((v, idx, payload));
                    }
                }
            }
            Ok(best)
        })
        .collect();
    let mut best: Option<(f64, usize, T)> = None;
    for r in per_batch {
        if let Some(cand) = r? {
            if best.as_ref().is_none_or(|(bv, _, _)| better(cand.0, *bv)) {
                best = Some(cand);
            }
        }
    }
    Ok(best)
}

// NaN never wins; +inf beats everything finite.
fn better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent || (incumbent.is_nan() && !candidate.is_nan())
}
