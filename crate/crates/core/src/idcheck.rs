//! Infinite divisibility of index-2 permanental vectors.
//!
//! A nonsingular kernel `G` gives an infinitely divisible vector iff some
//! signature matrix `S` makes `S G^{-1} S` an M-matrix. When it does, `G`
//! factors through the Green function of an explicit Markov chain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, Kernel, Matrix};

/// Largest dimension for the exhaustive signature enumeration.
pub const SIGNATURE_CAP: usize = 24;
/// Largest dimension for simple-cycle enumeration in the Griffiths–Milne test.
pub const CYCLE_CAP: usize = 10;

/// Diagonal ±1 entries of a signature matrix, gauged so that `s[0] = +1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureVector(Vec<i8>);

impl SignatureVector {
    pub fn new(s: Vec<i8>) -> Result<Self> {
        if s.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidInput("signature entries must be +1 or -1".into()));
        }
        if s.first().is_some_and(|&v| v != 1) {
            return Err(Error::InvalidInput("signature gauge requires s[0] = +1".into()));
        }
        Ok(SignatureVector(s))
    }

    pub fn all_plus(n: usize) -> Self {
        SignatureVector(vec![1; n])
    }

    /// Signature number `code` in lexicographic order (+1 before -1).
    fn from_code(n: usize, code: u32) -> Self {
        let mut s = vec![1i8; n];
        for i in 1..n {
            if code >> (n - 1 - i) & 1 == 1 {
                s[i] = -1;
            }
        }
        SignatureVector(s)
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }

    /// `S M S`.
    pub fn conjugate(&self, m: &Matrix) -> Matrix {
        let s = self.as_f64();
        m.scale_rows(&s).scale_cols(&s)
    }
}

/// Off-diagonal entries `<= tol`, nonsingular, inverse entrywise `>= -tol`.
pub fn is_m_matrix(a: &Matrix, tol: f64) -> bool {
    let n = a.n();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] > tol * scale {
                return false;
            }
        }
    }
    let Ok(inv) = matrix::inverse(a) else {
        return false;
    };
    let inv_scale = inv.max_abs().max(f64::MIN_POSITIVE);
    inv.min_entry() >= -tol * inv_scale
}

const M_MATRIX_TOL: f64 = 1e-10;

/// Lexicographically first signature making `S G^{-1} S` an M-matrix.
pub fn signature_search(g: &Kernel) -> Result<Option<SignatureVector>> {
    let n = g.n();
    if n > SIGNATURE_CAP {
        return Err(Error::DimensionTooLarge { n, cap: SIGNATURE_CAP });
    }
    if n == 0 {
        return Ok(Some(SignatureVector(Vec::new())));
    }
    let ginv = matrix::inverse(g)?;
    let count: u32 = 1 << (n - 1);
    Ok((0..count)
        .into_par_iter()
        .map(|code| SignatureVector::from_code(n, code))
        .find_first(|s| is_m_matrix(&s.conjugate(&ginv), M_MATRIX_TOL)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum GriffithsMilneVerdict {
    Pass,
    /// (i) spectral radius not strictly below 1.
    SpectralRadius {
        radius: f64,
    },
    /// (ii) negative diagonal entry or `Q_ij Q_ji < 0`.
    SignPattern {
        row: usize,
        col: usize,
        value: f64,
    },
    /// (iii) negative cycle product of `T = Q + Q^t`.
    NegativeCycle {
        cycle: Vec<usize>,
        product: f64,
    },
}

impl GriffithsMilneVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, GriffithsMilneVerdict::Pass)
    }
}

/// Checks the three Griffiths–Milne conditions on `Q`.
pub fn griffiths_milne(q: &Matrix, tol: f64) -> Result<GriffithsMilneVerdict> {
    let n = q.n();
    if n > CYCLE_CAP {
        return Err(Error::DimensionTooLarge { n, cap: CYCLE_CAP });
    }
    let radius = matrix::spectral_radius(q)?;
    if radius >= 1.0 - tol {
        return Ok(GriffithsMilneVerdict::SpectralRadius { radius });
    }
    for i in 0..n {
        if q[(i, i)] < -tol {
            return Ok(GriffithsMilneVerdict::SignPattern {
                row: i,
                col: i,
                value: q[(i, i)],
            });
        }
        for j in i + 1..n {
            let p = q[(i, j)] * q[(j, i)];
            if p < -tol {
                return Ok(GriffithsMilneVerdict::SignPattern {
                    row: i,
                    col: j,
                    value: p,
                });
            }
        }
    }
    let t = q.add(&q.transpose());
    if let Some((cycle, product)) = first_negative_cycle(&t, tol) {
        return Ok(GriffithsMilneVerdict::NegativeCycle { cycle, product });
    }
    Ok(GriffithsMilneVerdict::Pass)
}

/// Depth-first search over simple cycles whose smallest vertex is the start.
fn first_negative_cycle(t: &Matrix, tol: f64) -> Option<(Vec<usize>, f64)> {
    fn dfs(t: &Matrix, tol: f64, path: &mut Vec<usize>, used: &mut [bool], prod: f64) -> Option<(Vec<usize>, f64)> {
        let start = path[0];
        let last = *path.last().unwrap();
        if path.len() >= 2 {
            let closed = prod * t[(last, start)];
            if closed < -tol {
                return Some((path.clone(), closed));
            }
        }
        for next in start + 1..t.n() {
            if used[next] || t[(last, next)] == 0.0 {
                continue;
            }
            used[next] = true;
            path.push(next);
            let found = dfs(t, tol, path, used, prod * t[(last, next)]);
            path.pop();
            used[next] = false;
            if found.is_some() {
                return found;
            }
        }
        None
    }
    let n = t.n();
    for start in 0..n {
        let mut used = vec![false; n];
        used[start] = true;
        let mut path = vec![start];
        if let Some(hit) = dfs(t, tol, &mut path, &mut used, 1.0) {
            return Some(hit);
        }
    }
    None
}

/// `G = D_L g D_R` with `g` the Green function of the chain `(Λ, P)`.
///
/// Also carries the similarity form `G = E^{-1} g_sim E`, for which
/// `|I + αG| = |I + α g_sim|` holds for every diagonal `α`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovFactorization {
    pub signature: SignatureVector,
    /// `d_L(i) = s_i u_i` with `u = (S G^{-1} S)^{-1} 1`.
    pub left_scaling: Vec<f64>,
    pub green: Matrix,
    /// `d_R(i) = s_i`.
    pub right_scaling: Vec<f64>,
    /// Holding rates, the diagonal of `Λ`.
    pub holding_rates: Vec<f64>,
    /// Substochastic jump matrix.
    pub jump: Matrix,
    /// `E(i) = s_i / u_i`, so that `G = E^{-1} g_sim E`.
    pub similarity_scaling: Vec<f64>,
    pub similarity_green: Matrix,
}

impl MarkovFactorization {
    /// Generator `Λ(P - I)` of the recovered chain.
    pub fn generator(&self) -> Matrix {
        let n = self.jump.n();
        self.jump.sub(&Matrix::identity(n)).scale_rows(&self.holding_rates)
    }

    /// `D_L g D_R`.
    pub fn reconstruct(&self) -> Matrix {
        self.green
            .scale_rows(&self.left_scaling)
            .scale_cols(&self.right_scaling)
    }

    /// Asserts the structural invariants; returns the first violation.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.green.n();
        if self.holding_rates.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidInput("holding rates must be positive".into()));
        }
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let p = self.jump[(i, j)];
                if p < -tol {
                    return Err(Error::InvalidInput(format!("P[{i},{j}] = {p} is negative")));
                }
                row += p;
            }
            if row > 1.0 + tol {
                return Err(Error::InvalidInput(format!("row {i} of P sums to {row} > 1")));
            }
        }
        // g^{-1} = Λ(I - P)
        let lhs = matrix::inverse(&self.green)?;
        let rhs = self.generator().scale(-1.0);
        let err = lhs.max_abs_diff(&rhs) / lhs.max_abs().max(1.0);
        if err > tol {
            return Err(Error::InvalidInput(format!("g^-1 differs from Λ(I-P) by {err:e}")));
        }
        Ok(())
    }
}

/// Factorizes an infinitely divisible kernel through a Markov Green function.
pub fn markov_factorization(g: &Kernel) -> Result<MarkovFactorization> {
    let signature = signature_search(g)?.ok_or(Error::NotInfinitelyDivisible)?;
    let n = g.n();
    let s = signature.as_f64();
    let b = signature.conjugate(g);
    let a = matrix::inverse(&b)?;
    // u = A^{-1} 1 = B 1 > 0 since A^{-1} = B >= 0 is nonsingular.
    let u = b.mul_vec(&vec![1.0; n]);
    if let Some(i) = u.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "scaling u[{i}] = {} is not positive",
            u[i]
        )));
    }
    let m = a.scale_cols(&u);
    let holding_rates: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    let inv_rates: Vec<f64> = holding_rates.iter().map(|l| 1.0 / l).collect();
    let jump = Matrix::identity(n).sub(&m.scale_rows(&inv_rates));
    let mut green = b.scale_rows(&u.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    // Exact zeros on the diagonal of P and where roundoff leaves a tiny negative.
    let mut jump = jump;
    for i in 0..n {
        for j in 0..n {
            if i == j || (jump[(i, j)] < 0.0 && jump[(i, j)] > -M_MATRIX_TOL) {
                jump[(i, j)] = 0.0;
            }
        }
    }
    if let Some(l) = g.labels() {
        green = green.with_labels(l.to_vec())?;
    }
    let left_scaling: Vec<f64> = s.iter().zip(&u).map(|(s, u)| s * u).collect();
    let similarity_scaling: Vec<f64> = s.iter().zip(&u).map(|(s, u)| s / u).collect();
    // g_sim = D^{-1} B D
    let similarity_green = b
        .scale_rows(&u.iter().map(|v| 1.0 / v).collect::<Vec<_>>())
        .scale_cols(&u);
    Ok(MarkovFactorization {
        signature,
        left_scaling,
        green,
        right_scaling: s,
        holding_rates,
        jump,
        similarity_scaling,
        similarity_green,
    })
}

/// Positive off-diagonal entries of `G^{-1}`: the obstruction to an
/// M-matrix under the trivial signature.
pub fn obstructing_entries(g: &Kernel) -> Result<Vec<(usize, usize, f64)>> {
    let inv = matrix::inverse(g)?;
    let n = g.n();
    let tol = M_MATRIX_TOL * inv.max_abs();
    Ok((0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && inv[(i, j)] > tol)
        .map(|(i, j)| (i, j, inv[(i, j)]))
        .collect())
}
