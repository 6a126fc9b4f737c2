//! Laplace functionals of permanental and Bosonian point processes on a
//! finite site set with weights `w`.
//!
//! An integral operator with kernel `K` and reference measure `Σ w_j δ_j`
//! acts on vectors through the matrix `K diag(w)`; its Fredholm determinant
//! is the ordinary determinant of that matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldsampling::{cox_sample_with, empirical_cox_laplace, FieldSample, GaussianSampler, PointConfiguration};
use crate::matrix::{self, Kernel, Matrix};
use crate::montecarlo::{par_paths, ratio_estimate, sub_seed, Estimate};
use crate::permanents::{beta_pd_scan, ScanVerdict};

/// Entrywise tolerance for the sign conditions, relative to the kernel scale.
pub const SIGN_TOL: f64 = 1e-10;

/// `f >= 0` per site, with `φ = 1 - e^{-f}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    f: Vec<f64>,
}

impl TestFunction {
    pub fn new(f: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = f.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("test function at site {i} is {v}")));
        }
        Ok(TestFunction { f })
    }

    pub fn zeros(n: usize) -> Self {
        TestFunction { f: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        TestFunction::new(vec![c; n])
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: TestFunction = serde_json::from_str(s)?;
        TestFunction::new(t.f)
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn phi(&self) -> Vec<f64> {
        self.f.iter().map(|&x| -(-x).exp_m1()).collect()
    }
}

/// Kernel values `K(x_i, x_j)` together with site weights `w_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMatrix {
    kernel: Kernel,
    weights: Vec<f64>,
}

impl OperatorMatrix {
    pub fn new(kernel: Kernel, weights: Vec<f64>) -> Result<Self> {
        kernel.check_finite()?;
        if weights.len() != kernel.n() {
            return Err(Error::DimensionMismatch {
                expected: kernel.n(),
                got: weights.len(),
            });
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!("site weight {i} is {w}, must be positive")));
        }
        Ok(OperatorMatrix { kernel, weights })
    }

    pub fn uniform(kernel: Kernel, w: f64) -> Result<Self> {
        let n = kernel.n();
        OperatorMatrix::new(kernel, vec![w; n])
    }

    pub fn n(&self) -> usize {
        self.kernel.n()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `M_ij = K_ij w_j`.
    pub fn action(&self) -> Matrix {
        self.kernel.scale_cols(&self.weights)
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        matrix::spectral_radius(&self.action())
    }

    fn check_sites(&self, f: &TestFunction) -> Result<()> {
        if f.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// Action matrix of `K_φ`: `√φ_i K_ij √φ_j w_j`.
pub fn k_phi(op: &OperatorMatrix, f: &TestFunction) -> Result<Matrix> {
    op.check_sites(f)?;
    let u: Vec<f64> = f.phi().iter().map(|p| p.sqrt()).collect();
    let uw: Vec<f64> = u.iter().zip(op.weights()).map(|(a, w)| a * w).collect();
    Ok(op.kernel().scale_rows(&u).scale_cols(&uw))
}

/// `F = (√φ, (I + K_φ)^{-1} √φ)` in the weighted inner product.
pub fn flux(op: &OperatorMatrix, f: &TestFunction) -> Result<f64> {
    let m = k_phi(op, f)?.plus_identity();
    let u: Vec<f64> = f.phi().iter().map(|p| p.sqrt()).collect();
    let x = matrix::solve(&m, &u)?;
    Ok(u.iter().zip(&x).zip(op.weights()).map(|((a, b), w)| a * b * w).sum())
}

fn positive_det(m: &Matrix) -> Result<f64> {
    let d = matrix::det(m)?;
    if d <= 0.0 {
        return Err(Error::NonPositiveDeterminant { value: d });
    }
    Ok(d)
}

/// `Det(I + α K_φ)^{-1/α}`.
pub fn mu_laplace(op: &OperatorMatrix, alpha: f64, f: &TestFunction) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    let d = positive_det(&k_phi(op, f)?.scale(alpha).plus_identity())?;
    Ok(d.powf(-1.0 / alpha))
}

/// `exp(-½ r² F)`.
pub fn nu_r_laplace(op: &OperatorMatrix, r: f64, f: &TestFunction) -> Result<f64> {
    Ok((-0.5 * r * r * flux(op, f)?).exp())
}

/// Cox functional of `½ (η + r)²`, `Cov(η) = K`, evaluated as the Gaussian
/// integral `det(I + KD)^{-1/2} exp(-½ r² 1ᵗ D (I + KD)^{-1} 1)` with
/// `D = diag(φ w)`.
pub fn shifted_field_laplace(op: &OperatorMatrix, r: f64, f: &TestFunction) -> Result<f64> {
    op.check_sites(f)?;
    let k = op.kernel();
    if !k.is_symmetric(1e-12 * k.max_abs().max(1.0)) {
        return Err(Error::InvalidInput("shifted field law needs a symmetric kernel".into()));
    }
    let dw: Vec<f64> = f.phi().iter().zip(op.weights()).map(|(p, w)| p * w).collect();
    let m = k.scale_cols(&dw).plus_identity();
    let d = positive_det(&m)?;
    let x = matrix::solve(&m, &vec![1.0; op.n()])?;
    let q: f64 = dw.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(d.powf(-0.5) * (-0.5 * r * r * q).exp())
}

fn check_density(rho: f64, rho_c: f64) -> Result<()> {
    if !(rho >= rho_c) {
        return Err(Error::SubcriticalDensity { rho, rho_c });
    }
    Ok(())
}

/// `Det(I + K_φ)^{-1} exp(-(ρ - ρ_c) F)`.
pub fn zeta_laplace(op: &OperatorMatrix, rho: f64, rho_c: f64, f: &TestFunction) -> Result<f64> {
    check_density(rho, rho_c)?;
    let d = positive_det(&k_phi(op, f)?.plus_identity())?;
    Ok((-(rho - rho_c) * flux(op, f)?).exp() / d)
}

/// Four evaluations of the condensate functional by different routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaForms {
    pub direct: f64,
    /// `μ_{1,K} * ν_r` with `r = √(2(ρ - ρ_c))`.
    pub convolution: f64,
    /// Two independent copies of `½ (η + s)²`, `s = √(ρ - ρ_c)`.
    pub two_shifted: f64,
    /// One copy shifted by `√(2(ρ - ρ_c))`, one unshifted.
    pub shifted_unshifted: f64,
}

impl ZetaForms {
    pub fn max_rel_spread(&self) -> f64 {
        let v = [self.direct, self.convolution, self.two_shifted, self.shifted_unshifted];
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        (hi - lo) / hi.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn zeta_forms(op: &OperatorMatrix, rho: f64, rho_c: f64, f: &TestFunction) -> Result<ZetaForms> {
    check_density(rho, rho_c)?;
    let excess = rho - rho_c;
    let s = excess.sqrt();
    let r = (2.0 * excess).sqrt();
    let shifted = shifted_field_laplace(op, s, f)?;
    Ok(ZetaForms {
        direct: zeta_laplace(op, rho, rho_c, f)?,
        convolution: mu_laplace(op, 1.0, f)? * nu_r_laplace(op, r, f)?,
        two_shifted: shifted * shifted,
        shifted_unshifted: shifted_field_laplace(op, r, f)? * shifted_field_laplace(op, 0.0, f)?,
    })
}

/// Samples the Cox process driven by `½ Σ_{j<copies} (η_j + shift)²`.
pub fn shifted_cox_samples(
    op: &OperatorMatrix,
    shift: f64,
    copies: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<PointConfiguration>> {
    let sampler = GaussianSampler::new(op.kernel())?;
    let w = op.weights().to_vec();
    Ok(par_paths(seed, n_samples, |rng| {
        let mut field = vec![0.0; w.len()];
        for _ in 0..copies {
            for (o, x) in field.iter_mut().zip(sampler.sample(shift, rng)) {
                *o += 0.5 * x * x;
            }
        }
        cox_sample_with(&FieldSample(field), &w, rng)
    }))
}

/// Empirical functional of the two-shifted-squares Cox representation.
pub fn zeta_cox_estimate(
    op: &OperatorMatrix,
    rho: f64,
    rho_c: f64,
    f: &TestFunction,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_density(rho, rho_c)?;
    op.check_sites(f)?;
    let configs = shifted_cox_samples(op, (rho - rho_c).sqrt(), 2, n_samples, seed)?;
    Ok(empirical_cox_laplace(&configs, f.values()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum KernelVerdict {
    Nonnegative,
    NegativeEntry { row: usize, col: usize, value: f64 },
}

impl KernelVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, KernelVerdict::Nonnegative)
    }
}

fn sign_check(j: &Matrix, scale: f64) -> KernelVerdict {
    let tol = SIGN_TOL * scale.max(f64::MIN_POSITIVE);
    let n = j.n();
    for r in 0..n {
        for c in 0..n {
            if j[(r, c)] < -tol {
                return KernelVerdict::NegativeEntry {
                    row: r,
                    col: c,
                    value: j[(r, c)],
                };
            }
        }
    }
    KernelVerdict::Nonnegative
}

/// Kernel of `J_α = K (I + αK)^{-1}`, i.e. `K (I + α W K)^{-1}`.
pub fn resolvent_kernel(op: &OperatorMatrix, alpha: f64) -> Result<OperatorMatrix> {
    let wk = op.kernel().scale_rows(op.weights()).scale(alpha).plus_identity();
    let j = op.kernel().matmul(&matrix::inverse(&wk)?);
    OperatorMatrix::new(j, op.weights().to_vec())
}

/// Inverse of [`resolvent_kernel`] at `α = 1`: `K = J (I - W J)^{-1}`.
pub fn kernel_from_resolvent(j: &OperatorMatrix) -> Result<OperatorMatrix> {
    let m = Matrix::identity(j.n()).sub(&j.kernel().scale_rows(j.weights()));
    let k = j.kernel().matmul(&matrix::inverse(&m)?);
    OperatorMatrix::new(k, j.weights().to_vec())
}

/// Nonnegativity of the kernel of `J_α`.
pub fn condition_b_check(op: &OperatorMatrix, alpha: f64) -> Result<KernelVerdict> {
    let j = resolvent_kernel(op, alpha)?;
    Ok(sign_check(j.kernel(), j.kernel().max_abs().max(op.kernel().max_abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassVerdict {
    /// `max_i Σ_j J_ij w_j`.
    pub max_row_mass: f64,
    /// `max_j Σ_i w_i J_ij`.
    pub max_column_mass: f64,
    pub rows_pass: bool,
    pub columns_pass: bool,
}

impl MassVerdict {
    pub fn passed(&self) -> bool {
        self.rows_pass && self.columns_pass
    }
}

pub fn mass_condition_check(j: &OperatorMatrix) -> MassVerdict {
    let n = j.n();
    let w = j.weights();
    let k = j.kernel();
    let rows = (0..n).map(|i| (0..n).map(|c| k[(i, c)] * w[c]).sum::<f64>());
    let cols = (0..n).map(|c| (0..n).map(|i| w[i] * k[(i, c)]).sum::<f64>());
    let max_row_mass = rows.fold(f64::NEG_INFINITY, f64::max);
    let max_column_mass = cols.fold(f64::NEG_INFINITY, f64::max);
    let limit = 1.0 + SIGN_TOL;
    MassVerdict {
        max_row_mass,
        max_column_mass,
        rows_pass: n == 0 || max_row_mass <= limit,
        columns_pass: n == 0 || max_column_mass <= limit,
    }
}

/// `J̄₁ = (K + 1̄)(I + K + 1̄)^{-1}` with `1̄` the all-ones kernel.
pub fn plus_one_transform(op: &OperatorMatrix) -> Result<OperatorMatrix> {
    let shifted = OperatorMatrix::new(op.kernel().shift(1.0), op.weights().to_vec())?;
    resolvent_kernel(&shifted, 1.0)
}

/// Entrywise sign of [`plus_one_transform`].
pub fn plus_one_check(op: &OperatorMatrix) -> Result<KernelVerdict> {
    let j = plus_one_transform(op)?;
    Ok(sign_check(j.kernel(), j.kernel().max_abs().max(1.0)))
}

/// `α`-positive definiteness of the kernel values of `J_α` up to `max_order`.
pub fn p2_check(op: &OperatorMatrix, alpha: f64, max_order: usize) -> Result<ScanVerdict> {
    let j = resolvent_kernel(op, alpha)?;
    beta_pd_scan(j.kernel(), alpha, max_order)
}

/// Periodic cubic grid with `sites_per_axis^dims` sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub sites_per_axis: usize,
    pub dims: usize,
    pub spacing: f64,
}

impl TorusGrid {
    pub fn new(sites_per_axis: usize, dims: usize, spacing: f64) -> Result<Self> {
        if sites_per_axis == 0 || dims == 0 {
            return Err(Error::InvalidInput(
                "torus grid needs at least one site and axis".into(),
            ));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        Ok(TorusGrid {
            sites_per_axis,
            dims,
            spacing,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites_per_axis.pow(self.dims as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dims as i32)
    }

    fn coords(&self, mut i: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.dims);
        for _ in 0..self.dims {
            c.push(i % self.sites_per_axis);
            i /= self.sites_per_axis;
        }
        c
    }

    /// Squared periodic distance.
    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        let l = self.sites_per_axis;
        self.coords(i)
            .into_iter()
            .zip(self.coords(j))
            .map(|(a, b)| {
                let d = a.abs_diff(b);
                let d = d.min(l - d) as f64 * self.spacing;
                d * d
            })
            .sum()
    }
}

/// `J(x, y) = (4πβ)^{-d/2} exp(-|x - y|² / 4β)` on the torus, weighted by
/// cell volume. `d` sets the prefactor and may differ from the grid's own
/// dimensionality.
pub fn heat_kernel(grid: &TorusGrid, beta_temp: f64, d: usize) -> Result<OperatorMatrix> {
    if !(beta_temp > 0.0 && beta_temp.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "beta_temp must be positive, got {beta_temp}"
        )));
    }
    let pre = (4.0 * std::f64::consts::PI * beta_temp).powf(-(d as f64) / 2.0);
    let k = Matrix::from_fn(grid.n_sites(), |i, j| {
        pre * (-grid.dist2(i, j) / (4.0 * beta_temp)).exp()
    });
    OperatorMatrix::uniform(k, grid.cell_volume())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// `(4πβ)^{-d/2} Σ_k k^{-d/2}` with an Euler–Maclaurin tail.
    Series,
    /// Adaptive Simpson on the radial integral.
    Radial,
}

fn gamma_half_integer(d: usize) -> f64 {
    // Γ(d/2) for integer d >= 1.
    let mut g = if d % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut x = if d % 2 == 0 { 1.0 } else { 0.5 };
    while x + 1e-9 < d as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

fn zeta_series(s: f64) -> f64 {
    let n = 1000usize;
    let head: f64 = (1..n).map(|k| (k as f64).powf(-s)).sum();
    let nf = n as f64;
    head + nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s * nf.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * nf.powf(-s - 3.0) / 720.0
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `ρ_c = ∫ dx/(2π)^d e^{-β|x|²}/(1 - e^{-β|x|²})`, finite only for `d > 2`.
pub fn critical_density(d: usize, beta_temp: f64, quadrature: Quadrature) -> Result<f64> {
    if d <= 2 {
        return Err(Error::DivergentIntegral { d });
    }
    if !(beta_temp > 0.0 && beta_temp.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "beta_temp must be positive, got {beta_temp}"
        )));
    }
    let pi = std::f64::consts::PI;
    let df = d as f64;
    let value = match quadrature {
        Quadrature::Series => (4.0 * pi * beta_temp).powf(-df / 2.0) * zeta_series(df / 2.0),
        Quadrature::Radial => {
            let surface = 2.0 * pi.powf(df / 2.0) / gamma_half_integer(d);
            let integrand = |t: f64| {
                if t == 0.0 {
                    if d == 3 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    t.powi(d as i32 - 1) / (t * t).exp_m1()
                }
            };
            // Integrate on t = √β |x|; the tail beyond t = 12 is below e^{-140}.
            let mut prev = f64::NAN;
            let mut value = f64::NAN;
            for tol in [1e-8, 1e-10, 1e-12, 1e-14] {
                value = adaptive_simpson(&integrand, 0.0, 12.0, tol);
                if (value - prev).abs() < 1e-9 * value.abs() {
                    break;
                }
                prev = value;
            }
            surface / (2.0 * pi).powf(df) * beta_temp.powf(-df / 2.0) * value
        }
    };
    Ok(value)
}

/// Desk-scale Bose-gas surrogate: heat kernel on a torus, its geometric sum
/// `K = J (I - J)^{-1}`, and the critical density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoseGasConfig {
    pub d: usize,
    pub beta_temp: f64,
    pub grid: TorusGrid,
    pub rho: f64,
}

impl BoseGasConfig {
    pub fn new(d: usize, beta_temp: f64, grid: TorusGrid, rho: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("dimension d must be >= 1".into()));
        }
        if !(beta_temp > 0.0 && beta_temp.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "beta_temp must be positive, got {beta_temp}"
            )));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidInput(format!("density must be >= 0, got {rho}")));
        }
        Ok(BoseGasConfig {
            d,
            beta_temp,
            grid,
            rho,
        })
    }

    pub fn rho_c(&self) -> Result<f64> {
        critical_density(self.d, self.beta_temp, Quadrature::Series)
    }

    pub fn heat_kernel(&self) -> Result<OperatorMatrix> {
        heat_kernel(&self.grid, self.beta_temp, self.d)
    }

    /// `K = J (I - J)^{-1}`, requiring spectral radius of `J` below one.
    pub fn bose_kernel(&self) -> Result<OperatorMatrix> {
        let j = self.heat_kernel()?;
        let radius = j.spectral_radius()?;
        if radius >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "heat kernel spectral radius {radius} >= 1; grid not admissible"
            )));
        }
        kernel_from_resolvent(&j)
    }

    /// `exp(-ρ Σ φ w)`.
    pub fn poisson_laplace(&self, f: &TestFunction) -> f64 {
        let w = self.grid.cell_volume();
        (-self.rho * f.phi().iter().map(|p| p * w).sum::<f64>()).exp()
    }
}

/// Both sides of the Palm factorization at site `b` for the Cox process
/// driven by `ψ = ½ η² + ½ η̃²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PalmCheck {
    /// Size-biased field functional times `e^{-f(b)}`.
    pub size_biased: Estimate,
    /// `E[ξ_b e^{-ξ(f)}] / E[ξ_b]`, the `f_b`-derivative of the functional
    /// taken per sample.
    pub palm: Estimate,
}

impl PalmCheck {
    pub fn z(&self) -> f64 {
        let d = self.size_biased.minus(&self.palm);
        crate::montecarlo::z_score(d.mean, d.stderr)
    }
}

pub fn palm_check(op: &OperatorMatrix, b: usize, f: &TestFunction, n_mc: usize, seed: u64) -> Result<PalmCheck> {
    op.check_sites(f)?;
    if b >= op.n() {
        return Err(Error::InvalidInput(format!("site {b} out of range")));
    }
    if !(op.kernel()[(b, b)] > 0.0) {
        return Err(Error::InvalidInput(format!(
            "E[ψ_b] = K(b,b) must be positive at site {b}"
        )));
    }
    let sampler = GaussianSampler::new(op.kernel())?;
    let w = op.weights().to_vec();
    let phi = f.phi();
    let draw_field = |rng: &mut crate::montecarlo::PathRng| {
        let a = sampler.sample(0.0, rng);
        let c = sampler.sample(0.0, rng);
        FieldSample(a.iter().zip(&c).map(|(x, y)| 0.5 * (x * x + y * y)).collect())
    };

    let left: Vec<(f64, f64)> = par_paths(sub_seed(seed, 1), n_mc, |rng| {
        let psi = draw_field(rng);
        let m: f64 = psi.0.iter().zip(&phi).zip(&w).map(|((p, q), w)| p * q * w).sum();
        (psi.0[b], (-m).exp())
    });
    let (lw, lv): (Vec<f64>, Vec<f64>) = left.into_iter().unzip();
    let mut size_biased = ratio_estimate(&lw, &lv);
    let eb = (-f.values()[b]).exp();
    size_biased.mean *= eb;
    size_biased.stderr *= eb;

    let right: Vec<(f64, f64)> = par_paths(sub_seed(seed, 2), n_mc, |rng| {
        let psi = draw_field(rng);
        let xi = cox_sample_with(&psi, &w, rng);
        (xi.0[b] as f64, (-xi.pair(f.values())).exp())
    });
    let (rw, rv): (Vec<f64>, Vec<f64>) = right.into_iter().unzip();
    Ok(PalmCheck {
        size_biased,
        palm: ratio_estimate(&rw, &rv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op3() -> OperatorMatrix {
        let k = Matrix::from_rows(&[vec![1.0, 0.4, 0.2], vec![0.4, 0.8, 0.3], vec![0.2, 0.3, 0.6]]).unwrap();
        OperatorMatrix::new(k, vec![0.5, 1.0, 2.0]).unwrap()
    }

    fn f3() -> TestFunction {
        TestFunction::new(vec![0.3, 1.0, 0.7]).unwrap()
    }

    #[test]
    fn zero_test_function_gives_one() {
        let op = op3();
        let z = TestFunction::zeros(3);
        assert_eq!(mu_laplace(&op, 1.0, &z).unwrap(), 1.0);
        assert_eq!(nu_r_laplace(&op, 2.0, &z).unwrap(), 1.0);
        assert_eq!(shifted_field_laplace(&op, 2.0, &z).unwrap(), 1.0);
        assert_eq!(zeta_laplace(&op, 3.0, 1.0, &z).unwrap(), 1.0);
    }

    #[test]
    fn scalar_closed_forms() {
        let (c, w, alpha) = (0.8, 1.5, 2.0);
        let op = OperatorMatrix::uniform(Matrix::constant(1, c), w).unwrap();
        let f = TestFunction::new(vec![0.6]).unwrap();
        let phi = f.phi()[0];
        let mu = mu_laplace(&op, alpha, &f).unwrap();
        assert!((mu - (1.0 + alpha * c * phi * w).powf(-1.0 / alpha)).abs() < 1e-14);
        let r = 1.3;
        let sh = shifted_field_laplace(&op, r, &f).unwrap();
        let a = phi * w;
        let expect = (1.0 + c * a).powf(-0.5) * (-0.5 * r * r * a / (1.0 + c * a)).exp();
        assert!((sh - expect).abs() < 1e-14);
    }

    #[test]
    fn shifted_factorizes() {
        let op = op3();
        let f = f3();
        for r in [0.5, 1.0, 2.0] {
            let lhs = shifted_field_laplace(&op, r, &f).unwrap();
            let rhs = mu_laplace(&op, 1.0, &f).unwrap().sqrt() * nu_r_laplace(&op, r, &f).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * lhs);
        }
    }

    #[test]
    fn zeta_forms_agree() {
        let op = op3();
        let z = zeta_forms(&op, 2.0, 0.5, &f3()).unwrap();
        assert!(z.max_rel_spread() < 1e-12, "{z:?}");
        let at_crit = zeta_laplace(&op, 0.5, 0.5, &f3()).unwrap();
        assert!((at_crit - mu_laplace(&op, 1.0, &f3()).unwrap()).abs() < 1e-15);
        assert!(matches!(
            zeta_laplace(&op, 0.1, 0.5, &f3()),
            Err(Error::SubcriticalDensity { .. })
        ));
    }

    #[test]
    fn symmetric_reweighting_keeps_det() {
        let op = op3();
        let f = f3();
        let a = k_phi(&op, &f).unwrap().plus_identity();
        let sw: Vec<f64> = op.weights().iter().map(|w| w.sqrt()).collect();
        let u: Vec<f64> = f.phi().iter().map(|p| p.sqrt()).collect();
        let both: Vec<f64> = sw.iter().zip(&u).map(|(a, b)| a * b).collect();
        let sym = op.kernel().scale_rows(&both).scale_cols(&both).plus_identity();
        let (d1, d2) = (matrix::det(&a).unwrap(), matrix::det(&sym).unwrap());
        assert!((d1 - d2).abs() < 1e-13);
    }

    #[test]
    fn condition_b_cases() {
        let diag = OperatorMatrix::uniform(Matrix::diag(&[1.0, 2.0, 0.5]), 1.0).unwrap();
        assert!(condition_b_check(&diag, 1.0).unwrap().passed());
        let alt = Matrix::from_rows(&[vec![1.0, -0.5], vec![-0.5, 1.0]]).unwrap();
        let v = condition_b_check(&OperatorMatrix::uniform(alt, 1.0).unwrap(), 1.0).unwrap();
        assert!(matches!(v, KernelVerdict::NegativeEntry { row: 0, col: 1, .. }));
    }

    #[test]
    fn resolvent_round_trip() {
        let j = OperatorMatrix::new(
            Matrix::from_rows(&[vec![0.2, 0.1], vec![0.05, 0.3]]).unwrap(),
            vec![1.0, 2.0],
        )
        .unwrap();
        let k = kernel_from_resolvent(&j).unwrap();
        let back = resolvent_kernel(&k, 1.0).unwrap();
        assert!(back.kernel().max_abs_diff(j.kernel()) < 1e-14);
    }

    #[test]
    fn mass_condition_cases() {
        let z = OperatorMatrix::uniform(Matrix::zeros(3), 1.0).unwrap();
        assert!(mass_condition_check(&z).passed());
        let big = OperatorMatrix::uniform(Matrix::constant(3, 10.0), 1.0).unwrap();
        let v = mass_condition_check(&big);
        assert!(!v.rows_pass && !v.columns_pass);
        let lop = OperatorMatrix::new(
            Matrix::from_rows(&[vec![0.1, 0.8], vec![0.1, 0.1]]).unwrap(),
            vec![1.0, 1.0],
        )
        .unwrap();
        let v = mass_condition_check(&lop);
        assert!(v.rows_pass && v.columns_pass);
    }

    #[test]
    fn plus_one_scalar() {
        let w = 0.7;
        let op = OperatorMatrix::uniform(Matrix::zeros(1), w).unwrap();
        let j = plus_one_transform(&op).unwrap();
        assert!((j.action()[(0, 0)] - w / (1.0 + w)).abs() < 1e-15);
    }

    #[test]
    fn p2_diagonal_passes() {
        let op = OperatorMatrix::uniform(Matrix::diag(&[1.0, 0.5, 2.0]), 1.0).unwrap();
        assert!(p2_check(&op, 1.0, 4).unwrap().passed());
    }

    #[test]
    fn heat_kernel_structure() {
        let grid = TorusGrid::new(16, 1, 1.0).unwrap();
        let j = heat_kernel(&grid, 1.0, 3).unwrap();
        let pre = (4.0 * std::f64::consts::PI).powf(-1.5);
        assert!((j.kernel()[(5, 5)] - pre).abs() < 1e-16);
        assert_eq!(j.kernel(), &j.kernel().transpose());
        assert!((j.kernel()[(0, 15)] - j.kernel()[(0, 1)]).abs() < 1e-18);
        assert!(j.spectral_radius().unwrap() < 1.0);
        let g2 = TorusGrid::new(3, 2, 0.5).unwrap();
        assert_eq!(g2.n_sites(), 9);
        assert!((g2.dist2(0, 8) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn critical_density_schemes() {
        assert!(matches!(
            critical_density(2, 1.0, Quadrature::Radial),
            Err(Error::DivergentIntegral { d: 2 })
        ));
        let a = critical_density(3, 1.0, Quadrature::Series).unwrap();
        let b = critical_density(3, 1.0, Quadrature::Radial).unwrap();
        assert!((a - b).abs() < 1e-6 * a, "{a} {b}");
        assert!((a - 0.058_643).abs() < 1e-5);
        let c = critical_density(4, 2.0, Quadrature::Series).unwrap();
        let d = critical_density(4, 2.0, Quadrature::Radial).unwrap();
        assert!((c - d).abs() < 1e-6 * c, "{c} {d}");
    }

    #[test]
    fn gamma_values() {
        assert!((gamma_half_integer(3) - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(gamma_half_integer(6), 2.0);
        assert_eq!(gamma_half_integer(2), 1.0);
    }
}
