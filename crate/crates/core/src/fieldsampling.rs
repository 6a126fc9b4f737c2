//! Gaussian, squared-Gaussian and Cox samplers on finite site sets.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::existence::WeightVector;
use crate::matrix::{self, Kernel, Matrix};
use crate::montecarlo::{par_paths, path_rng, ratio_estimate, Estimate};

const SYMMETRY_TOL: f64 = 1e-12;

/// Field values per site (η, η + r, ψ or φ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample(pub Vec<f64>);

impl FieldSample {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pair(&self, alpha: &[f64]) -> f64 {
        self.0.iter().zip(alpha).map(|(x, a)| x * a).sum()
    }

    pub fn scaled(&self, c: f64) -> FieldSample {
        FieldSample(self.0.iter().map(|x| c * x).collect())
    }

    pub fn add(&self, other: &FieldSample) -> FieldSample {
        FieldSample(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

/// Draws `η + r` with `Cov(η) = K` through a Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: Matrix,
}

impl GaussianSampler {
    pub fn new(k: &Kernel) -> Result<Self> {
        k.check_finite()?;
        if !k.is_symmetric(SYMMETRY_TOL * k.max_abs().max(1.0)) {
            return Err(Error::InvalidInput("Gaussian covariance must be symmetric".into()));
        }
        Ok(GaussianSampler {
            factor: matrix::cholesky(k)?,
        })
    }

    pub fn n(&self) -> usize {
        self.factor.n()
    }

    pub fn sample<R: Rng + ?Sized>(&self, shift: f64, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.n()).map(|_| rng.sample(StandardNormal)).collect();
        self.factor.mul_vec(&z).into_iter().map(|x| x + shift).collect()
    }

    /// `Σ_{j<m} η_j²` for `m` independent copies.
    pub fn sample_squares<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for _ in 0..m {
            for (o, x) in out.iter_mut().zip(self.sample(0.0, rng)) {
                *o += x * x;
            }
        }
        out
    }
}

pub fn gaussian_field(k: &Kernel, shift: f64, seed: u64) -> Result<FieldSample> {
    let s = GaussianSampler::new(k)?;
    Ok(FieldSample(s.sample(shift, &mut path_rng(seed, 0))))
}

pub fn gaussian_fields(k: &Kernel, shift: f64, n_samples: usize, seed: u64) -> Result<Vec<FieldSample>> {
    let s = GaussianSampler::new(k)?;
    Ok(par_paths(seed, n_samples, |rng| FieldSample(s.sample(shift, rng))))
}

/// `m` such that `β = 2/m`.
pub fn squared_gaussian_count(beta: f64) -> Result<usize> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::UnsupportedIndex { beta });
    }
    let m = (2.0 / beta).round();
    if m < 1.0 || (2.0 / m - beta).abs() > 1e-12 * beta {
        return Err(Error::UnsupportedIndex { beta });
    }
    Ok(m as usize)
}

/// Index-`β` permanental field `ψ = Σ_{j≤m} η_j²`, `β = 2/m`, so that
/// `E[exp(-½ Σ α ψ)] = |I + αK|^{-1/β}`.
pub fn permanental_field(k: &Kernel, beta: f64, seed: u64) -> Result<FieldSample> {
    let m = squared_gaussian_count(beta)?;
    let s = GaussianSampler::new(k)?;
    Ok(FieldSample(s.sample_squares(m, &mut path_rng(seed, 0))))
}

pub fn permanental_fields(k: &Kernel, beta: f64, n_samples: usize, seed: u64) -> Result<Vec<FieldSample>> {
    let m = squared_gaussian_count(beta)?;
    let s = GaussianSampler::new(k)?;
    Ok(par_paths(seed, n_samples, |rng| FieldSample(s.sample_squares(m, rng))))
}

/// `E[exp(-c Σ α ψ)]` estimated over `fields`.
pub fn empirical_laplace(fields: &[FieldSample], alpha: &[f64], c: f64) -> Estimate {
    let xs: Vec<f64> = fields.iter().map(|f| (-c * f.pair(alpha)).exp()).collect();
    Estimate::from_samples(&xs)
}

/// Site weights `w > 0` with an optional extra atom `ε δ_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMeasure {
    weights: Vec<f64>,
    atom: Option<(usize, f64)>,
}

impl SiteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!("site weight {i} is {w}, must be positive")));
        }
        Ok(SiteMeasure { weights, atom: None })
    }

    pub fn uniform(n: usize, w: f64) -> Result<Self> {
        SiteMeasure::new(vec![w; n])
    }

    pub fn with_atom(mut self, a: usize, eps: f64) -> Result<Self> {
        if a >= self.weights.len() {
            return Err(Error::InvalidInput(format!("atom site {a} out of range")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidInput(format!("atom mass must be >= 0, got {eps}")));
        }
        self.atom = Some((a, eps));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atom(&self) -> Option<(usize, f64)> {
        self.atom
    }

    /// Per-site mass including the atom.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.weights.clone();
        if let Some((a, eps)) = self.atom {
            w[a] += eps;
        }
        w
    }
}

/// Nonnegative integer counts per site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointConfiguration(pub Vec<u64>);

impl PointConfiguration {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// `Σ f(x) ξ(x)`.
    pub fn pair(&self, f: &[f64]) -> f64 {
        self.0.iter().zip(f).map(|(&c, f)| c as f64 * f).sum()
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
    } else {
        0
    }
}

/// Independent Poisson counts with means `field(x) w(x)`.
pub fn cox_sample_with<R: Rng + ?Sized>(field: &FieldSample, weights: &[f64], rng: &mut R) -> PointConfiguration {
    PointConfiguration(
        field
            .0
            .iter()
            .zip(weights)
            .map(|(&x, &w)| poisson(x * w, rng))
            .collect(),
    )
}

pub fn cox_sample(field: &FieldSample, measure: &SiteMeasure, seed: u64) -> Result<PointConfiguration> {
    if field.len() != measure.len() {
        return Err(Error::DimensionMismatch {
            expected: measure.len(),
            got: field.len(),
        });
    }
    if let Some((i, &x)) = field.0.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
        return Err(Error::InvalidInput(format!("Cox intensity at site {i} is {x}")));
    }
    Ok(cox_sample_with(field, &measure.weights(), &mut path_rng(seed, 0)))
}

/// Draws the field with `draw`, then the Cox counts, on one stream per sample.
pub fn cox_samples<F>(measure: &SiteMeasure, n_samples: usize, seed: u64, draw: F) -> Vec<PointConfiguration>
where
    F: Fn(&mut crate::montecarlo::PathRng) -> FieldSample + Sync + Send,
{
    let w = measure.weights();
    par_paths(seed, n_samples, |rng| {
        let field = draw(rng);
        cox_sample_with(&field, &w, rng)
    })
}

/// `E[exp(-Σ f ξ)]` over sampled configurations.
pub fn empirical_cox_laplace(configs: &[PointConfiguration], f: &[f64]) -> Estimate {
    let xs: Vec<f64> = configs.iter().map(|c| (-c.pair(f)).exp()).collect();
    Estimate::from_samples(&xs)
}

/// Importance-sampling estimate of `|I + αG|^{-1}` for a nonsymmetric `G`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct P5Estimate {
    /// Self-normalized `E[Re w F] / E[Re w]`.
    pub ratio: Estimate,
    /// `E[Re w]`, which should equal `normalization_target`.
    pub normalization: Estimate,
    /// `|G| / |S|`.
    pub normalization_target: f64,
}

struct P5Setup {
    factor: Matrix,
    a: Matrix,
    target: f64,
}

fn p5_setup(g: &Kernel) -> Result<P5Setup> {
    g.check_finite()?;
    let s = g.add(&g.transpose()).scale(0.5);
    let det_s = matrix::det(&s)?;
    let factor = matrix::cholesky(&s).map_err(|_| Error::NotPd)?;
    if det_s <= 0.0 || (0..s.n()).any(|i| factor[(i, i)] <= 0.0) {
        return Err(Error::NotPd);
    }
    let a = matrix::inverse(&s)?.sub(&matrix::inverse(g)?);
    Ok(P5Setup {
        factor,
        a,
        target: matrix::det(g)? / det_s,
    })
}

/// True when `2 Herm(G^{-1}) - S^{-1}` is positive definite, which makes the
/// complex weight square-integrable.
pub fn p5_weight_has_finite_variance(g: &Kernel) -> Result<bool> {
    let s = g.add(&g.transpose()).scale(0.5);
    let gi = matrix::inverse(g)?;
    let m = gi.add(&gi.transpose()).sub(&matrix::inverse(&s)?);
    let m = m.add(&m.transpose()).scale(0.5);
    Ok(matrix::eigenvalues(&m)?.iter().all(|z| z.re > 0.0))
}

/// `Λ = η + iη̃` with `η, η̃ ~ N(0, S)`, `S = (G + Gᵗ)/2`, weight
/// `exp(½ Λ* A Λ)` with `A = S^{-1} - G^{-1}`, functional
/// `exp(-½ Σ α |Λ|²)`.
pub fn p5_estimate(g: &Kernel, alpha: &WeightVector, n_samples: usize, seed: u64) -> Result<P5Estimate> {
    if alpha.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: alpha.len(),
        });
    }
    let setup = p5_setup(g)?;
    let n = g.n();
    let al = alpha.as_slice();
    let draws: Vec<(f64, f64)> = par_paths(seed, n_samples, |rng| {
        let z1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let z2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let eta = setup.factor.mul_vec(&z1);
        let eta2 = setup.factor.mul_vec(&z2);
        let lam: Vec<Complex64> = eta.iter().zip(&eta2).map(|(&x, &y)| Complex64::new(x, y)).collect();
        let mut q = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                q += lam[i].conj() * setup.a[(i, j)] * lam[j];
            }
        }
        let w = (0.5 * q).exp().re;
        let f = (-0.5 * (0..n).map(|i| al[i] * lam[i].norm_sqr()).sum::<f64>()).exp();
        (w, f)
    });
    let (w, f): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    Ok(P5Estimate {
        ratio: ratio_estimate(&w, &f),
        normalization: Estimate::from_samples(&w),
        normalization_target: setup.target,
    })
}
