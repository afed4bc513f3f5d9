//! Symmetric matrix storage, Hadamard masks and Gibbs states.
//!
//! Two routes to `exp(-H)/tr exp(-H)` live here: a full symmetric
//! eigendecomposition, and a truncated Taylor series evaluated on a scaled
//! copy of `H` followed by repeated squaring.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated when wrapping a dense matrix.
const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric matrix in coordinate form; only the upper triangle is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
    row_sparsity: usize,
}

impl SparseSymmetric {
    /// Builds the matrix from `(row, col, value)` triples. Lower-triangle
    /// triples are mirrored into the upper triangle, exact zeros are dropped
    /// and a repeated position is an error.
    pub fn new(dim: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let mut upper = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            if r >= dim || c >= dim {
                return Err(Error::InvalidInput(format!(
                    "entry ({r}, {c}) outside a {dim}x{dim} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse entry"));
            }
            if v != 0.0 {
                upper.push((r.min(c), r.max(c), v));
            }
        }
        upper.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        if let Some(w) = upper.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidInput(format!(
                "duplicate entry at ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut counts = vec![0usize; dim];
        for &(r, c, _) in &upper {
            counts[r] += 1;
            if r != c {
                counts[c] += 1;
            }
        }
        let row_sparsity = counts.into_iter().max().unwrap_or(0);
        Ok(Self {
            dim,
            entries: upper,
            row_sparsity,
        })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored upper-triangle entries, sorted by position.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Largest number of nonzeros in any row of the symmetrized matrix.
    pub fn row_sparsity(&self) -> usize {
        self.row_sparsity
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn trace(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.0 == e.1)
            .map(|e| e.2)
            .sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(r, c, v) in &self.entries {
            if r == c {
                d[r] = v;
            }
        }
        d
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let entries: Vec<_> = self
            .entries
            .iter()
            .map(|&(r, c, v)| (r, c, v * factor))
            .filter(|e| e.2 != 0.0)
            .collect();
        let mut out = self.clone();
        out.entries = entries;
        out
    }

    /// Same entries embedded in a larger zero matrix.
    pub fn padded(&self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: dim,
            });
        }
        Self::new(dim, self.entries.clone())
    }

    pub fn to_dense(&self) -> DenseSymmetric {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        DenseSymmetric(m)
    }

    /// `tr(self · b)` touching only stored entries.
    pub fn trace_product_dense(&self, b: &DenseSymmetric) -> Result<f64> {
        check_dim(self.dim, b.dim())?;
        Ok(self.trace_product_raw(&b.0))
    }

    pub(crate) fn trace_product_raw(&self, b: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| if r == c { v * b[(r, r)] } else { 2.0 * v * b[(r, c)] })
            .sum()
    }

    /// `tr((Q∘self) · b)` for the mask with diagonal `q`.
    pub(crate) fn masked_trace_product_raw(&self, q: &[f64], b: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| {
                if r == c {
                    q[r] * v * b[(r, r)]
                } else {
                    2.0 * v * b[(r, c)]
                }
            })
            .sum()
    }
}

/// Square of every entry of the symmetrized matrix, summed, then rooted.
pub fn frobenius_norm(m: &SparseSymmetric) -> f64 {
    m.entries
        .iter()
        .map(|&(r, c, v)| if r == c { v * v } else { 2.0 * v * v })
        .sum::<f64>()
        .sqrt()
}

/// Dense symmetric matrix. Construction symmetrizes exactly, so `data[i][j]`
/// and `data[j][i]` are bitwise equal afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric(DMatrix<f64>);

impl DenseSymmetric {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense matrix"));
        }
        let scale = m.amax();
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Wraps `(m + mᵀ)/2` without checking.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        symmetrize_in_place(&mut m);
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self(DMatrix::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Schatten-1 norm.
    pub fn trace_norm(&self) -> f64 {
        self.eigenvalues().iter().map(|v| v.abs()).sum()
    }

    /// Leading `n`×`n` block.
    pub fn top_left(&self, n: usize) -> Self {
        Self(self.0.view((0, 0), (n, n)).into_owned())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * factor)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self(&self.0 - &other.0))
    }

    /// `self + c·I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        Self(m)
    }
}

pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// The mask `Q = (eeᵀ − I) + diag(q)`.
pub fn mask_matrix(q_diag: &[f64]) -> DenseSymmetric {
    let n = q_diag.len();
    DenseSymmetric(DMatrix::from_fn(n, n, |i, j| if i == j { q_diag[i] } else { 1.0 }))
}

/// `Q∘A`: off-diagonal entries are untouched, the diagonal is multiplied by `q`.
pub fn hadamard_apply(q_diag: &[f64], a: &DenseSymmetric) -> Result<DenseSymmetric> {
    check_dim(a.dim(), q_diag.len())?;
    if let Some(q) = q_diag.iter().find(|q| !matches!(**q, -1.0 | 0.0 | 1.0)) {
        return Err(Error::InvalidInput(format!("mask diagonal entry {q} not in {{-1, 0, 1}}")));
    }
    let mut m = a.0.clone();
    for (i, q) in q_diag.iter().enumerate() {
        m[(i, i)] *= q;
    }
    Ok(DenseSymmetric(m))
}

/// `Σ_ij a_ij b_ij`, which is `tr(ab)` for symmetric arguments.
pub fn trace_product(a: &DenseSymmetric, b: &DenseSymmetric) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(a.0.dot(&b.0))
}

/// A unit-trace positive semidefinite matrix together with the trace-norm
/// error budget it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    matrix: DenseSymmetric,
    trace_norm_error_bound: f64,
}

impl GibbsState {
    /// `I/n`.
    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            matrix: DenseSymmetric(DMatrix::identity(n, n) / n as f64),
            trace_norm_error_bound: 0.0,
        }
    }

    pub(crate) fn from_raw(m: DMatrix<f64>, trace_norm_error_bound: f64) -> Self {
        Self {
            matrix: DenseSymmetric::symmetrized(m),
            trace_norm_error_bound,
        }
    }

    pub fn matrix(&self) -> &DenseSymmetric {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseSymmetric {
        self.matrix
    }

    pub fn trace_norm_error_bound(&self) -> f64 {
        self.trace_norm_error_bound
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// Degree of the truncated exponential for a given norm bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorPlan {
    pub degree_ell: usize,
    pub norm_bound: f64,
    pub target_error: f64,
}

/// Smallest even `ℓ ≥ 2` with
/// `(ℓ+1)(log₂(ℓ+1) − 1) ≥ 2·norm_bound + log₂ dim + log₂(1/target_error)`.
pub fn taylor_plan(norm_bound: f64, dim: usize, target_error: f64) -> TaylorPlan {
    let rhs = 2.0 * norm_bound.max(0.0) + (dim.max(1) as f64).log2() - target_error.log2();
    let mut ell = 2usize;
    loop {
        let l1 = (ell + 1) as f64;
        if l1 * (l1.log2() - 1.0) >= rhs {
            break;
        }
        ell += 2;
    }
    TaylorPlan {
        degree_ell: ell,
        norm_bound,
        target_error,
    }
}

/// Gibbs state through a full eigendecomposition.
pub fn gibbs_exact(h: &DenseSymmetric) -> Result<GibbsState> {
    let (rho, _) = gibbs_spectral(h.matrix())?;
    Ok(GibbsState::from_raw(rho, 0.0))
}

/// Eigendecomposition route returning the state and `λ_min(h)`.
pub(crate) fn gibbs_spectral(h: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hamiltonian"));
    }
    let n = h.nrows();
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0).ok_or(Error::Eigen)?;
    let lambda_min = eig.eigenvalues.min();
    let weights: Vec<f64> = eig.eigenvalues.iter().map(|l| (lambda_min - l).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut scaled = eig.eigenvectors.clone();
    for (k, w) in weights.iter().enumerate() {
        scaled.column_mut(k).scale_mut(w / z);
    }
    let mut rho = scaled * eig.eigenvectors.transpose();
    symmetrize_in_place(&mut rho);
    debug_assert_eq!(rho.nrows(), n);
    Ok((rho, lambda_min))
}

/// Gibbs state of a diagonal Hamiltonian given by its diagonal.
pub(crate) fn gibbs_diagonal(h: &[f64]) -> DMatrix<f64> {
    let lo = h.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = h.iter().map(|v| (lo - v).exp()).collect();
    let z: f64 = w.iter().sum();
    let n = h.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { w[i] / z } else { 0.0 })
}

/// Gibbs state from the truncated Taylor series.
///
/// `norm_bound` must dominate `‖h‖`. The diagonal mean is removed first,
/// the result is scaled down by `2^s` until its norm is at most one, the
/// degree comes from [`taylor_plan`] at a tightened tolerance, and `s`
/// squarings undo the scaling. Every squaring is followed by a trace
/// renormalization so nothing overflows.
pub fn gibbs_from_hamiltonian(
    h: &DenseSymmetric,
    norm_bound: f64,
    target_error: f64,
) -> Result<GibbsState> {
    let m = h.matrix();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hamiltonian"));
    }
    if !(target_error > 0.0 && target_error < 1.0) {
        return Err(Error::InvalidInput(format!(
            "target error {target_error} outside (0, 1)"
        )));
    }
    let n = m.nrows();
    let mean = m.trace() / n as f64;
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] -= mean;
    }
    let gershgorin = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let bound = (norm_bound.max(0.0) + mean.abs()).min(gershgorin);

    let mut squarings = 0u32;
    while bound / 2f64.powi(squarings as i32) > 1.0 {
        squarings += 1;
    }
    let scale = 2f64.powi(squarings as i32);
    // Relative errors double with every squaring.
    let local_target = target_error / 2f64.powi(squarings as i32 + 4);
    let plan = taylor_plan(bound / scale, n, local_target);

    let b = a / (-scale);
    let id = DMatrix::<f64>::identity(n, n);
    let mut t = id.clone();
    for k in (1..=plan.degree_ell).rev() {
        t = &b * &t / k as f64 + &id;
        symmetrize_in_place(&mut t);
    }
    let mut tr = t.trace();
    if !(tr > 0.0) {
        return Err(Error::NonPositiveTrace(tr));
    }
    t /= tr;
    for _ in 0..squarings {
        t = &t * &t;
        symmetrize_in_place(&mut t);
        tr = t.trace();
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::NonPositiveTrace(tr));
        }
        t /= tr;
    }
    Ok(GibbsState::from_raw(t, target_error))
}

/// Chooses the route by dimension: eigendecomposition up to `exact_crossover`,
/// Taylor above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsOptions {
    pub exact_crossover: usize,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        Self { exact_crossover: 256 }
    }
}

pub fn gibbs(
    h: &DenseSymmetric,
    norm_bound: f64,
    target_error: f64,
    opts: GibbsOptions,
) -> Result<GibbsState> {
    if h.dim() <= opts.exact_crossover {
        gibbs_exact(h)
    } else {
        gibbs_from_hamiltonian(h, norm_bound, target_error)
    }
}
