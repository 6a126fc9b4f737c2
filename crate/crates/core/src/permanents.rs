//! Exact α-permanents, derived matrices and β-positive-definiteness scans.
//!
//! `det_alpha(M, β) = Σ_σ β^{n-ν(σ)} Π_i M[i, σ(i)]` where `ν(σ)` counts the
//! cycles of σ. The sum is enumerated exactly with Heap's algorithm, so the
//! dimension is capped at [`ENUMERATION_CAP`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest dimension accepted by the permutation enumeration.
pub const ENUMERATION_CAP: usize = 12;

/// Relative tolerance used by the nonnegativity scans.
pub const SCAN_TOLERANCE: f64 = 1e-10;

/// Repetition counts `k_i`, one per row/column of a base matrix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(k: Vec<usize>) -> Self {
        MultiIndex(k)
    }

    pub fn ones(n: usize) -> Self {
        MultiIndex(vec![1; n])
    }

    /// `|k| = Σ k_i`.
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Row indices of the derived matrix, each `i` repeated `k_i` times.
    pub fn expand(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| std::iter::repeat_n(i, k))
            .collect()
    }
}

/// All multi-indices of length `n` and total `order`, lexicographically ascending.
pub fn multi_indices_of_order(n: usize, order: usize) -> Vec<MultiIndex> {
    fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if cur.len() + 1 == n {
            cur.push(left);
            out.push(MultiIndex(cur.clone()));
            cur.pop();
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(n, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    rec(n, order, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Exact α-permanent `det_β(M)` by enumeration over all permutations.
pub fn det_alpha(m: &Matrix, beta: f64) -> Result<f64> {
    m.check_finite()?;
    let n = m.n();
    if n > ENUMERATION_CAP {
        return Err(Error::DimensionTooLarge {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    if n == 0 {
        return Ok(1.0);
    }
    // Power table: beta^(n - cycles), cycles in 1..=n.
    let pow: Vec<f64> = (0..=n).map(|c| beta.powi((n - c.min(n)) as i32)).collect();

    let mut sigma: Vec<usize> = (0..n).collect();
    let mut cycles = n;
    let product = |sigma: &[usize]| -> f64 {
        let mut p = 1.0;
        for (i, &s) in sigma.iter().enumerate() {
            p *= m[(i, s)];
            if p == 0.0 {
                break;
            }
        }
        p
    };
    let mut total = pow[cycles] * product(&sigma);

    // Iterative Heap's algorithm; each step swaps two positions, which
    // either splits one cycle (same cycle) or merges two.
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            if same_cycle(&sigma, i, j) {
                cycles += 1;
            } else {
                cycles -= 1;
            }
            sigma.swap(i, j);
            total += pow[cycles] * product(&sigma);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(total)
}

fn same_cycle(sigma: &[usize], i: usize, j: usize) -> bool {
    let mut x = sigma[i];
    while x != i {
        if x == j {
            return true;
        }
        x = sigma[x];
    }
    false
}

/// The `|k| x |k|` matrix with row/column `i` of `m` repeated `k_i` times.
pub fn derived_matrix(m: &Matrix, k: &MultiIndex) -> Result<Matrix> {
    if k.len() != m.n() {
        return Err(Error::DimensionMismatch {
            expected: m.n(),
            got: k.len(),
        });
    }
    if k.order() == 0 {
        return Err(Error::EmptyIndex);
    }
    if k.order() > ENUMERATION_CAP {
        return Err(Error::DimensionTooLarge {
            n: k.order(),
            cap: ENUMERATION_CAP,
        });
    }
    Ok(m.select(&k.expand()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ScanVerdict {
    /// No negative derived α-permanent up to `max_order`; never a full proof.
    PassUpToOrder {
        max_order: usize,
        checked: usize,
    },
    Fail {
        witness: MultiIndex,
        value: f64,
    },
}

impl ScanVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ScanVerdict::PassUpToOrder { .. })
    }
}

/// Checks `det_β(M(k)) >= -tol` for every `1 <= |k| <= max_order`.
///
/// Multi-indices are visited by order, then lexicographically; the reported
/// witness is the first failure in that order regardless of threading.
pub fn beta_pd_scan(m: &Matrix, beta: f64, max_order: usize) -> Result<ScanVerdict> {
    if max_order > ENUMERATION_CAP {
        return Err(Error::DimensionTooLarge {
            n: max_order,
            cap: ENUMERATION_CAP,
        });
    }
    m.check_finite()?;
    let scale = m.max_abs();
    let mut checked = 0;
    for order in 1..=max_order {
        let indices = multi_indices_of_order(m.n(), order);
        let threshold = -SCAN_TOLERANCE * scale.powi(order as i32);
        let failure = indices
            .par_iter()
            .map(|k| -> Result<Option<(MultiIndex, f64)>> {
                let v = det_alpha(&derived_matrix(m, k)?, beta)?;
                Ok((v < threshold).then(|| (k.clone(), v)))
            })
            .find_first(|r| !matches!(r, Ok(None)));
        match failure {
            Some(Ok(Some((witness, value)))) => return Ok(ScanVerdict::Fail { witness, value }),
            Some(Err(e)) => return Err(e),
            _ => {}
        }
        checked += indices.len();
    }
    Ok(ScanVerdict::PassUpToOrder { max_order, checked })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_expansion() {
        let (a, b, c, d) = (1.5, -0.7, 2.0, 0.3);
        let m = Matrix::from_rows(&[vec![a, b], vec![c, d]]).unwrap();
        for beta in [-1.0, 0.0, 0.5, 1.0, 3.0] {
            let v = det_alpha(&m, beta).unwrap();
            assert!((v - (a * d + beta * b * c)).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_and_empty() {
        assert_eq!(det_alpha(&Matrix::identity(6), 2.5).unwrap(), 1.0);
        assert_eq!(det_alpha(&Matrix::zeros(0), 2.5).unwrap(), 1.0);
    }

    #[test]
    fn all_ones_counts_cycle_types() {
        // det_β(J_n) = Π_{j<n} (1 + jβ).
        let m = Matrix::constant(5, 1.0);
        let beta = 0.7;
        let expect: f64 = (0..5).map(|j| 1.0 + j as f64 * beta).product();
        assert!((det_alpha(&m, beta).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn enumeration_cap() {
        let m = Matrix::identity(ENUMERATION_CAP + 1);
        assert!(matches!(det_alpha(&m, 1.0), Err(Error::DimensionTooLarge { .. })));
    }

    #[test]
    fn derived_matrix_cases() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(derived_matrix(&m, &MultiIndex::ones(2)).unwrap(), m);
        let d = derived_matrix(&m, &MultiIndex::new(vec![2, 0])).unwrap();
        assert_eq!(d, Matrix::constant(2, 1.0));
        let d = derived_matrix(&m, &MultiIndex::new(vec![2, 1])).unwrap();
        let expect = Matrix::from_rows(&[vec![1.0, 1.0, 2.0], vec![1.0, 1.0, 2.0], vec![3.0, 3.0, 4.0]]).unwrap();
        assert_eq!(d, expect);
        assert!(matches!(
            derived_matrix(&m, &MultiIndex::new(vec![0, 0])),
            Err(Error::EmptyIndex)
        ));
        assert!(derived_matrix(&m, &MultiIndex::new(vec![1])).is_err());
    }

    #[test]
    fn multi_index_order_is_lexicographic() {
        let ks = multi_indices_of_order(3, 2);
        let raw: Vec<Vec<usize>> = ks.into_iter().map(|k| k.0).collect();
        assert_eq!(
            raw,
            vec![
                vec![0, 0, 2],
                vec![0, 1, 1],
                vec![0, 2, 0],
                vec![1, 0, 1],
                vec![1, 1, 0],
                vec![2, 0, 0]
            ]
        );
    }

    #[test]
    fn scan_trivial_passes() {
        let z = Matrix::zeros(3);
        assert!(beta_pd_scan(&z, 0.5, 4).unwrap().passed());
        for beta in [0.1, 1.0, 2.0, 7.0] {
            let v = beta_pd_scan(&Matrix::identity(3), beta, 4).unwrap();
            assert!(v.passed(), "{v:?}");
        }
    }

    #[test]
    fn scan_finds_smallest_witness() {
        // At β = -1 the scan is a determinant scan: order 1 is fine and the
        // first failure is det(M) = -3 at k = (1, 1).
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        match beta_pd_scan(&m, -1.0, 3).unwrap() {
            ScanVerdict::Fail { witness, value } => {
                assert_eq!(witness, MultiIndex::new(vec![1, 1]));
                assert!((value + 3.0).abs() < 1e-12);
            }
            v => panic!("expected failure, got {v:?}"),
        }
    }
}
