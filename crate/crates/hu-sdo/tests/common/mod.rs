#![allow(dead_code)]

use hu_sdo::linalg::{DenseSymmetric, SparseSymmetric};
use hu_sdo::optimize::CostMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric matrix with uniform entries in [-1, 1].
pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    m = (&m + m.transpose()) * 0.5;
    m
}

/// Random symmetric matrix rescaled to spectral norm `norm`.
pub fn random_with_norm(n: usize, norm: f64, rng: &mut ChaCha8Rng) -> DenseSymmetric {
    let m = random_symmetric(n, rng);
    let ev = m.clone().symmetric_eigenvalues();
    let s = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    DenseSymmetric::new(m * (norm / s)).unwrap()
}

/// Random unit-trace PSD matrix `GGᵀ/tr`.
pub fn random_state(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> DenseSymmetric {
    let g = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    let m = &g * g.transpose();
    let t = m.trace();
    DenseSymmetric::new(m / t).unwrap()
}

/// Sparse random cost with roughly `density` of the upper triangle filled.
pub fn random_sparse(n: usize, density: f64, rng: &mut ChaCha8Rng) -> SparseSymmetric {
    let mut e = Vec::new();
    for i in 0..n {
        for j in i..n {
            if rng.random::<f64>() < density {
                e.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
    }
    if e.is_empty() {
        e.push((0, n.min(2) - 1, 1.0));
    }
    SparseSymmetric::new(n, e).unwrap()
}

pub fn random_cost(n: usize, density: f64, rng: &mut ChaCha8Rng) -> CostMatrix {
    CostMatrix::new(random_sparse(n, density, rng))
}

pub fn dense(m: &SparseSymmetric) -> DMatrix<f64> {
    let n = m.dim();
    let mut d = DMatrix::zeros(n, n);
    for &(i, j, v) in m.entries() {
        d[(i, j)] = v;
        d[(j, i)] = v;
    }
    d
}

/// Trace norm of a symmetric difference, from its eigenvalues.
pub fn trace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = a - b;
    let d = (&d + d.transpose()) * 0.5;
    d.symmetric_eigenvalues().iter().map(|v| v.abs()).sum()
}

/// Gibbs state written out directly from an eigendecomposition, without
/// going through the library.
pub fn reference_gibbs(h: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = h.clone().symmetric_eigen();
    let lo = eig.eigenvalues.min();
    let mut v = eig.eigenvectors.clone();
    let mut z = 0.0;
    for (k, l) in eig.eigenvalues.iter().enumerate() {
        let w = (lo - l).exp();
        z += w;
        v.column_mut(k).scale_mut(w);
    }
    v * eig.eigenvectors.transpose() / z
}

/// Random PSD matrix with unit diagonal: the Gram matrix of random unit
/// vectors.
pub fn random_unit_diagonal(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut g = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    for mut row in g.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
    let mut x = &g * g.transpose();
    for i in 0..n {
        x[(i, i)] = 1.0;
    }
    x
}

/// `tr(C̃X)/n` for a unit-diagonal `X`: a normalized objective level that is
/// known to be achievable.
pub fn achievable_gamma(c: &CostMatrix, x: &DMatrix<f64>) -> f64 {
    let d = dense(&c.normalized());
    d.dot(x) / c.dim() as f64
}
