//! Reproducible Monte Carlo plumbing: per-path RNG streams and estimators.
//!
//! Path `i` of a run with master seed `s` always draws from the same ChaCha
//! stream, and reductions run in index order, so results do not depend on
//! the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type PathRng = ChaCha8Rng;

/// Independent generator for path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a sub-seed so that different stages of one experiment use
/// disjoint stream families.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f(rng_i)` for `i in 0..n` in parallel and returns results in order.
pub fn par_paths<T, F>(seed: u64, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut PathRng) -> T + Sync + Send,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| f(&mut path_rng(seed, i)))
        .collect()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }

    /// z-score of the estimate against a reference value.
    pub fn z(&self, reference: f64) -> f64 {
        z_score(self.mean - reference, self.stderr)
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Estimate) -> Estimate {
        Estimate {
            mean: self.mean - other.mean,
            stderr: self.stderr.hypot(other.stderr),
            n: self.n.min(other.n),
        }
    }
}

/// `diff / stderr`, with an exact zero difference giving `z = 0`.
pub fn z_score(diff: f64, stderr: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if stderr == 0.0 {
        f64::INFINITY.copysign(diff)
    } else {
        diff / stderr
    }
}

/// Self-normalized ratio `Σ w f / Σ w` with a delta-method standard error.
pub fn ratio_estimate(weights: &[f64], values: &[f64]) -> Estimate {
    assert_eq!(weights.len(), values.len());
    let n = weights.len();
    let wf: Vec<f64> = weights.iter().zip(values).map(|(w, f)| w * f).collect();
    let num = Estimate::from_samples(&wf);
    let den = Estimate::from_samples(weights);
    let ratio = num.mean / den.mean;
    // Residuals of the linearized ratio.
    let resid: Vec<f64> = weights
        .iter()
        .zip(values)
        .map(|(w, f)| w * (f - ratio) / den.mean)
        .collect();
    let r = Estimate::from_samples(&resid);
    Estimate {
        mean: ratio,
        stderr: r.stderr,
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = path_rng(7, 3).random();
        let b: f64 = path_rng(7, 3).random();
        let c: f64 = path_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(sub_seed(7, 1), sub_seed(7, 2));
    }

    #[test]
    fn par_paths_is_ordered() {
        let xs = par_paths(11, 100, |r| r.random::<u64>());
        let ys: Vec<u64> = (0..100).map(|i| path_rng(11, i).random::<u64>()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn estimate_basics() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(Estimate::from_samples(&[2.0, 2.0]).z(2.0), 0.0);
    }

    #[test]
    fn ratio_with_unit_weights_is_mean() {
        let v = [1.0, 4.0, 2.0, 5.0];
        let r = ratio_estimate(&[1.0; 4], &v);
        let e = Estimate::from_samples(&v);
        assert!((r.mean - e.mean).abs() < 1e-15);
        assert!((r.stderr - e.stderr).abs() < 1e-15);
    }
}
