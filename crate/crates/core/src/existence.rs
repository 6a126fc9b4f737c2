//! Laplace transforms of permanental vectors and the existence conditions.
//!
//! A permanental vector with kernel `G` and index `β` has
//! `E[exp(-½ Σ α_i ψ_i)] = |I + diag(α) G|^{-1/β}`. It exists iff
//! `|I + rG| > 0` for all `r > 0` and every `Q_r = G (I + rG)^{-1}` is
//! β-positive definite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, Kernel, Matrix};
use crate::permanents::{beta_pd_scan, MultiIndex, ScanVerdict};

#[derive(Debug, Clone)]
pub struct PermanentalSpec {
    pub kernel: Kernel,
    pub beta: f64,
}

impl PermanentalSpec {
    pub fn new(kernel: Kernel, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("index must be positive, got {beta}")));
        }
        kernel.check_finite()?;
        Ok(PermanentalSpec { kernel, beta })
    }
}

/// Nonnegative per-site weights, i.e. the diagonal of `diag(α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if let Some(a) = alpha.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidInput(format!("weights must be nonnegative, got {a}")));
        }
        Ok(WeightVector(alpha))
    }

    pub fn zeros(n: usize) -> Self {
        WeightVector(vec![0.0; n])
    }

    pub fn one_hot(n: usize, i: usize, value: f64) -> Result<Self> {
        let mut a = vec![0.0; n];
        a[i] = value;
        WeightVector::new(a)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0.0)
    }

    /// Same weights multiplied by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        WeightVector::new(self.0.iter().map(|a| a * c).collect())
    }
}

fn check_len(g: &Matrix, alpha: &WeightVector) -> Result<()> {
    if alpha.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: alpha.len(),
        });
    }
    Ok(())
}

/// `I + diag(α) G`.
pub fn i_plus_alpha_g(g: &Matrix, alpha: &WeightVector) -> Result<Matrix> {
    check_len(g, alpha)?;
    Ok(g.scale_rows(alpha.as_slice()).plus_identity())
}

/// `|I + diag(α) G|^{-1/β}`.
pub fn laplace_closed_form(spec: &PermanentalSpec, alpha: &WeightVector) -> Result<f64> {
    let d = matrix::det(&i_plus_alpha_g(&spec.kernel, alpha)?)?;
    if d <= 0.0 {
        return Err(Error::NonPositiveDeterminant { value: d });
    }
    Ok(d.powf(-1.0 / spec.beta))
}

/// `1^t (I + αG)^{-1} α 1`.
pub fn resolvent_mass(g: &Matrix, alpha: &WeightVector) -> Result<f64> {
    let m = i_plus_alpha_g(g, alpha)?;
    let x = matrix::solve(&m, alpha.as_slice())?;
    Ok(x.iter().sum())
}

/// Both sides of `|I + α(G + δ)| = |I + αG| (1 + δ 1^t (I+αG)^{-1} α 1)`,
/// each evaluated on its own.
pub fn shifted_det_identity(g: &Kernel, alpha: &WeightVector, delta: f64) -> Result<(f64, f64)> {
    let lhs = matrix::det(&i_plus_alpha_g(&g.shift(delta), alpha)?)?;
    let base = i_plus_alpha_g(g, alpha)?;
    let lu = matrix::Lu::new(&base)?;
    let mass: f64 = lu.solve(alpha.as_slice()).iter().sum();
    let rhs = lu.det() * (1.0 + delta * mass);
    Ok((lhs, rhs))
}

/// `E[exp(-½ Σ α_i ψ_i) | ψ_a = r]` for a kernel whose row and column `a` vanish.
pub fn conditional_laplace(spec: &PermanentalSpec, alpha: &WeightVector, anchor: usize, r: f64) -> Result<f64> {
    let g = &spec.kernel;
    if anchor >= g.n() {
        return Err(Error::InvalidInput(format!("anchor {anchor} out of range")));
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidInput(format!("conditioning level must be >= 0, got {r}")));
    }
    if (0..g.n()).any(|x| g[(x, anchor)] != 0.0 || g[(anchor, x)] != 0.0) {
        return Err(Error::AnchorNotNull { site: anchor });
    }
    let base = laplace_closed_form(spec, alpha)?;
    Ok(base * (-0.5 * r * resolvent_mass(g, alpha)?).exp())
}

/// Default grid for the resolvent condition: 10 log-spaced points in `[1e-2, 1e2]`.
pub fn default_r_grid() -> Vec<f64> {
    (0..10).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 9.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ExistenceVerdict {
    /// The spectral condition holds exactly; the resolvent condition showed
    /// no violation on the grid up to `max_order`.
    NoViolationFound { max_order: usize, r_grid: Vec<f64> },
    /// `G` has a negative real eigenvalue, so `|I + rG|` vanishes at `r = -1/λ`.
    NegativeEigenvalue { eigenvalue: f64 },
    /// A derived matrix of `Q_r` has a negative α-permanent.
    NotBetaPositive { r: f64, witness: MultiIndex, value: f64 },
}

impl ExistenceVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ExistenceVerdict::NoViolationFound { .. })
    }
}

/// Smallest negative real eigenvalue of `g`, if any.
pub fn negative_real_eigenvalue(g: &Matrix) -> Result<Option<f64>> {
    let scale = g.norm_inf().max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    Ok(matrix::eigenvalues(g)?
        .into_iter()
        .filter(|z| z.im.abs() <= tol && z.re < -tol)
        .map(|z| z.re)
        .reduce(f64::min))
}

/// Vere-Jones conditions: the spectral one exactly, the resolvent one on a
/// finite grid and order.
pub fn vere_jones_check(g: &Kernel, beta: f64, r_grid: &[f64], max_order: usize) -> Result<ExistenceVerdict> {
    if r_grid.is_empty() {
        return Err(Error::InvalidInput("r grid must be nonempty".into()));
    }
    if let Some(eigenvalue) = negative_real_eigenvalue(g)? {
        return Ok(ExistenceVerdict::NegativeEigenvalue { eigenvalue });
    }
    for &r in r_grid {
        let q = resolvent(g, r)?;
        if let ScanVerdict::Fail { witness, value } = beta_pd_scan(&q, beta, max_order)? {
            return Ok(ExistenceVerdict::NotBetaPositive { r, witness, value });
        }
    }
    Ok(ExistenceVerdict::NoViolationFound {
        max_order,
        r_grid: r_grid.to_vec(),
    })
}

/// `Q_r = G (I + rG)^{-1}`.
pub fn resolvent(g: &Matrix, r: f64) -> Result<Matrix> {
    let inv = matrix::inverse(&g.scale(r).plus_identity())?;
    Ok(g.matmul(&inv))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ResolventVerdict {
    Nonnegative,
    NegativeEntry { r: f64, row: usize, col: usize, value: f64 },
    Singular { r: f64 },
}

impl ResolventVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ResolventVerdict::Nonnegative)
    }
}

/// Entrywise nonnegativity of `σG(I + σG)^{-1}` on the grid.
pub fn resolvent_nonneg_check(g: &Kernel, r_grid: &[f64]) -> Result<ResolventVerdict> {
    let tol = 1e-10;
    for &r in r_grid {
        let q = match resolvent(g, r) {
            Ok(q) => q.scale(r),
            Err(Error::SingularMatrix { .. }) => return Ok(ResolventVerdict::Singular { r }),
            Err(e) => return Err(e),
        };
        let scale = q.max_abs().max(1.0);
        for i in 0..q.n() {
            for j in 0..q.n() {
                if q[(i, j)] < -tol * scale {
                    return Ok(ResolventVerdict::NegativeEntry {
                        r,
                        row: i,
                        col: j,
                        value: q[(i, j)],
                    });
                }
            }
        }
    }
    Ok(ResolventVerdict::Nonnegative)
}
