#![allow(dead_code)]

use permanental::markovchain::{ChainKind, ChainSpec};
use permanental::montecarlo::{path_rng, PathRng};
use permanental::Matrix;
use rand::Rng;

pub fn rng(seed: u64, index: u64) -> PathRng {
    path_rng(seed, index)
}

/// Entries uniform in `[-1, 1)`.
pub fn random_matrix(n: usize, rng: &mut PathRng) -> Matrix {
    Matrix::from_fn(n, |_, _| 2.0 * rng.random::<f64>() - 1.0)
}

/// `B Bᵗ / n + 0.05 I` with `B` uniform in `[-1, 1)`.
pub fn random_psd(n: usize, rng: &mut PathRng) -> Matrix {
    let b = random_matrix(n, rng);
    b.matmul(&b.transpose())
        .scale(1.0 / n as f64)
        .add(&Matrix::identity(n).scale(0.05))
}

/// Random transient generator: sparse positive jump rates plus killing.
pub fn random_transient_chain(n: usize, rng: &mut PathRng) -> ChainSpec {
    let mut q = Matrix::zeros(n);
    for i in 0..n {
        let mut out = 0.0;
        for j in 0..n {
            if i != j && rng.random::<f64>() < 0.7 {
                let r = 0.2 + 1.8 * rng.random::<f64>();
                q[(i, j)] = r;
                out += r;
            }
        }
        let kill = 0.1 + rng.random::<f64>();
        q[(i, i)] = -(out + kill);
    }
    ChainSpec::from_generator(q, ChainKind::Transient).expect("killing at every state")
}

pub fn rel_err(reference: f64, value: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(f64::MIN_POSITIVE)
}

/// Permanent by Ryser's inclusion-exclusion formula.
pub fn ryser_permanent(m: &Matrix) -> f64 {
    let n = m.n();
    let mut total = 0.0;
    for set in 1u32..(1 << n) {
        let mut prod = 1.0;
        for i in 0..n {
            let s: f64 = (0..n).filter(|&j| set & (1 << j) != 0).map(|j| m[(i, j)]).sum();
            prod *= s;
        }
        let sign = if (n - set.count_ones() as usize) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        total += sign * prod;
    }
    total
}

/// Determinant by Laplace expansion along the first row.
pub fn cofactor_det(m: &Matrix) -> f64 {
    let n = m.n();
    if n == 0 {
        return 1.0;
    }
    if n == 1 {
        return m[(0, 0)];
    }
    let mut total = 0.0;
    for j in 0..n {
        let rows: Vec<usize> = (1..n).collect();
        let cols: Vec<usize> = (0..n).filter(|&c| c != j).collect();
        let minor = Matrix::from_fn(n - 1, |r, c| m[(rows[r], cols[c])]);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * m[(0, j)] * cofactor_det(&minor);
    }
    total
}

fn cycles(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut count = 0;
    for s in 0..perm.len() {
        if !seen[s] {
            count += 1;
            let mut x = s;
            while !seen[x] {
                seen[x] = true;
                x = perm[x];
            }
        }
    }
    count
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// `Σ_σ β^{n - ν(σ)} Π m(i, σ(i))` by explicit enumeration, `ν` the cycle count.
pub fn brute_det_beta(m: &Matrix, beta: f64) -> f64 {
    all_permutations(m.n())
        .iter()
        .map(|p| beta.powi((m.n() - cycles(p)) as i32) * p.iter().enumerate().map(|(i, &j)| m[(i, j)]).product::<f64>())
        .sum()
}
