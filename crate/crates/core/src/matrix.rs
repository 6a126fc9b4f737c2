//! Small dense real linear algebra.
//!
//! Everything here works on square row-major `f64` matrices of modest size
//! (a few hundred at most). Tolerances are relative to the matrix scale and
//! live in [`Tolerances`] so callers can tighten or loosen them.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance knobs shared by the factorizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Pivots below `singular * ||M||_inf` mark the matrix singular.
    pub singular: f64,
    /// Cholesky pivots below `-psd * max|diag|` mark the matrix not PSD.
    pub psd: f64,
    /// Largest dimension accepted by the eigensolver.
    pub max_eigen_dim: usize,
    /// Iteration cap for the Schur/QR sweep (0 means unlimited).
    pub max_qr_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            singular: 1e-12,
            psd: 1e-10,
            max_eigen_dim: 64,
            max_qr_iterations: 10_000,
        }
    }
}

/// Square real matrix with optional site labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
    labels: Option<Vec<String>>,
}

/// A kernel is a matrix indexed by sites (G, K, g, J of the theory).
pub type Kernel = Matrix;

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
            labels: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Constant matrix with every entry equal to `c`.
    pub fn constant(n: usize, c: f64) -> Self {
        Matrix {
            n,
            data: vec![c; n * n],
            labels: None,
        }
    }

    /// Builds a matrix from row-major data; `data.len()` must be `n * n`.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        let m = Matrix { n, data, labels: None };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::new(n, data)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Matrix { n, data, labels: None }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of site `i`, falling back to its index.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    /// Resolves a site given either by label or by numeric index.
    pub fn site_index(&self, name: &str) -> Result<usize> {
        if let Some(labels) = &self.labels {
            if let Some(i) = labels.iter().position(|l| l == name) {
                return Ok(i);
            }
        }
        match name.parse::<usize>() {
            Ok(i) if i < self.n => Ok(i),
            _ => Err(Error::InvalidInput(format!("unknown site '{name}'"))),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(Error::NonFinite {
                row: p / self.n.max(1),
                col: p % self.n.max(1),
            }),
            None => Ok(()),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::from_fn(self.n, |i, j| self[(j, i)]);
        t.labels = self.labels.clone();
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out.labels = self.labels.clone();
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.n, v.len(), "mul_vec dimension mismatch");
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `v^t M`.
    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.n, v.len(), "vec_mul dimension mismatch");
        (0..self.n)
            .map(|j| (0..self.n).map(|i| v[i] * self[(i, j)]).sum())
            .collect()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "add dimension mismatch");
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "sub dimension mismatch");
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, c: f64) -> Matrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|a| *a *= c);
        out
    }

    /// Adds `c` to every entry.
    pub fn shift(&self, c: f64) -> Matrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|a| *a += c);
        out
    }

    /// `diag(d) * M`.
    pub fn scale_rows(&self, d: &[f64]) -> Matrix {
        assert_eq!(self.n, d.len());
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                out.data[i * self.n + j] *= d[i];
            }
        }
        out
    }

    /// `M * diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> Matrix {
        assert_eq!(self.n, d.len());
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                out.data[i * self.n + j] *= d[j];
            }
        }
        out
    }

    /// `I + M`.
    pub fn plus_identity(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.n {
            out.data[i * self.n + i] += 1.0;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self.max_abs().max(1.0);
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale))
    }

    /// `P M P^t` where `perm[i]` is the old index placed at position `i`.
    pub fn permute(&self, perm: &[usize]) -> Matrix {
        assert_eq!(perm.len(), self.n);
        let mut out = Matrix::from_fn(self.n, |i, j| self[(perm[i], perm[j])]);
        if let Some(l) = &self.labels {
            out.labels = Some(perm.iter().map(|&p| l[p].clone()).collect());
        }
        out
    }

    /// Principal submatrix on `idx` (in the given order; repeats allowed).
    pub fn select(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::from_fn(idx.len(), |i, j| self[(idx[i], idx[j])]);
        if let Some(l) = &self.labels {
            out.labels = Some(idx.iter().map(|&p| l[p].clone()).collect());
        }
        out
    }

    /// Embeds `self` (indexed by `idx`) into an `n x n` zero matrix.
    pub fn embed(&self, n: usize, idx: &[usize]) -> Matrix {
        assert_eq!(idx.len(), self.n);
        let mut out = Matrix::zeros(n);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[(i, j)] = self[(a, b)];
            }
        }
        out
    }

    pub fn set_row(&mut self, i: usize, row: &[f64]) {
        assert_eq!(row.len(), self.n);
        self.data[i * self.n..(i + 1) * self.n].copy_from_slice(row);
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// On-disk matrix layout: `{"n": 3, "labels": [...], "rows": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl TryFrom<MatrixFile> for Matrix {
    type Error = Error;
    fn try_from(f: MatrixFile) -> Result<Matrix> {
        if f.rows.len() != f.n {
            return Err(Error::DimensionMismatch {
                expected: f.n,
                got: f.rows.len(),
            });
        }
        let m = Matrix::from_rows(&f.rows)?;
        match f.labels {
            Some(l) => m.with_labels(l),
            None => Ok(m),
        }
    }
}

impl From<&Matrix> for MatrixFile {
    fn from(m: &Matrix) -> MatrixFile {
        MatrixFile {
            n: m.n,
            labels: m.labels.clone(),
            rows: m.rows(),
        }
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Matrix, D::Error> {
        let f = MatrixFile::deserialize(d)?;
        Matrix::try_from(f).map_err(serde::de::Error::custom)
    }
}

impl Matrix {
    pub fn from_json(s: &str) -> Result<Matrix> {
        let f: MatrixFile = serde_json::from_str(s)?;
        Matrix::try_from(f)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MatrixFile::from(self))?)
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// Factorizes `m`, failing with `SingularMatrix` on a tiny pivot.
    pub fn new(m: &Matrix) -> Result<Lu> {
        Lu::with_tolerances(m, &Tolerances::default())
    }

    pub fn with_tolerances(m: &Matrix, tol: &Tolerances) -> Result<Lu> {
        match Lu::factor(m, tol)? {
            (lu, None) => Ok(lu),
            (_, Some(pivot)) => Err(Error::SingularMatrix { pivot }),
        }
    }

    /// Runs elimination to completion; reports the first sub-tolerance pivot.
    fn factor(m: &Matrix, tol: &Tolerances) -> Result<(Lu, Option<f64>)> {
        m.check_finite()?;
        let n = m.n;
        let mut a = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let threshold = tol.singular * m.norm_inf();
        let mut small = None;
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, a[i * n + k].abs()))
                    .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pmax <= threshold || pmax == 0.0 {
                small.get_or_insert(pmax);
                continue;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        Ok((Lu { n, lu: a, perm, sign }, small))
    }

    pub fn det(&self) -> f64 {
        (0..self.n).fold(self.sign, |d, i| d * self.lu[i * self.n + i])
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.n;
        let mut inv = Matrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Determinant via LU; numerically singular matrices give exactly 0.
pub fn det(m: &Matrix) -> Result<f64> {
    det_with(m, &Tolerances::default())
}

pub fn det_with(m: &Matrix, tol: &Tolerances) -> Result<f64> {
    if m.n == 0 {
        return Ok(1.0);
    }
    let (lu, small) = Lu::factor(m, tol)?;
    Ok(if small.is_some() { 0.0 } else { lu.det() })
}

pub fn inverse(m: &Matrix) -> Result<Matrix> {
    let mut inv = Lu::new(m)?.inverse();
    inv.labels = m.labels.clone();
    Ok(inv)
}

pub fn solve(m: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(Lu::new(m)?.solve(b))
}

/// All eigenvalues of `m`, in no particular order.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    eigenvalues_with(m, &Tolerances::default())
}

pub fn eigenvalues_with(m: &Matrix, tol: &Tolerances) -> Result<Vec<Complex64>> {
    m.check_finite()?;
    if m.n > tol.max_eigen_dim {
        return Err(Error::DimensionTooLarge {
            n: m.n,
            cap: tol.max_eigen_dim,
        });
    }
    if m.n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.to_nalgebra(), f64::EPSILON, tol.max_qr_iterations).ok_or(Error::NoConvergence {
        iterations: tol.max_qr_iterations,
    })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Lower-triangular `L` with `L L^t = M` for symmetric positive semidefinite `M`.
///
/// Zero pivots (within tolerance) are accepted and produce a zero column, so
/// rank-deficient PSD inputs factor without error.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    cholesky_with(m, &Tolerances::default())
}

pub fn cholesky_with(m: &Matrix, tol: &Tolerances) -> Result<Matrix> {
    m.check_finite()?;
    let n = m.n;
    let scale = (0..n)
        .map(|i| m[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let threshold = tol.psd * scale;
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -threshold {
            return Err(Error::NotPsd { index: j, pivot: d });
        }
        if d <= threshold {
            // Degenerate direction: the rest of the column must vanish too.
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > threshold.sqrt() * scale.sqrt() {
                    return Err(Error::NotPsd { index: j, pivot: d });
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}
