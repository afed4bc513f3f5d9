//! Optimization by bisection on the objective level, and rounding of the
//! refined state to an exactly feasible point of the relaxation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{DenseSymmetric, SparseSymmetric};
use crate::refine::{self, RefineConfig, Refinement, RefinementState};

/// The cost matrix `C` with its Frobenius norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    raw: SparseSymmetric,
    fro_norm: f64,
}

impl CostMatrix {
    pub fn new(raw: SparseSymmetric) -> Self {
        let fro_norm = raw.frobenius_norm();
        Self { raw, fro_norm }
    }

    pub fn raw(&self) -> &SparseSymmetric {
        &self.raw
    }

    pub fn fro_norm(&self) -> f64 {
        self.fro_norm
    }

    pub fn dim(&self) -> usize {
        self.raw.dim()
    }

    pub fn is_zero(&self) -> bool {
        self.fro_norm == 0.0
    }

    /// `C̃ = C/‖C‖_F`; the zero matrix stays zero.
    pub fn normalized(&self) -> SparseSymmetric {
        if self.is_zero() {
            self.raw.clone()
        } else {
            self.raw.scaled(1.0 / self.fro_norm)
        }
    }

    /// Factor between the normalized objective `tr(C̃ρ)` and the objective
    /// `tr(CX)` at `X = nρ`.
    pub fn original_scale(&self) -> f64 {
        self.dim() as f64 * self.fro_norm
    }

    /// `xᵀCx`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.raw
            .entries()
            .iter()
            .map(|&(i, j, v)| if i == j { v * x[i] * x[i] } else { 2.0 * v * x[i] * x[j] })
            .sum()
    }

    /// `Σ_{i<j} C_ij(1 − x_i x_j)/2`.
    pub fn cut_value(&self, x: &[f64]) -> f64 {
        self.raw
            .entries()
            .iter()
            .filter(|e| e.0 != e.1)
            .map(|&(i, j, v)| v * (1.0 - x[i] * x[j]) / 2.0)
            .sum()
    }
}

/// One bisection step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub gamma: f64,
    pub accepted: bool,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub gamma_star: f64,
    pub refinement: Refinement,
    pub probes: Vec<Probe>,
}

/// Largest bisection probe count for a given tolerance.
pub fn probe_limit(c: &CostMatrix, epsilon: f64) -> usize {
    let scale = c.original_scale().max(f64::MIN_POSITIVE);
    (2.0 * scale / epsilon).log2().ceil().max(0.0) as usize + 1
}

/// Bisection on `γ ∈ [−1, 1]` down to width `ε/(n‖C‖_F)`. Probes run the
/// refinement with `ζ = width/4`; an infeasible verdict from any inner solve
/// lowers the upper end. The returned refinement is a full-precision solve
/// at the final lower end; if that end is out of reach at full precision the
/// solve backs off below it in doubling steps. Every base solve continues from the
/// Hamiltonian of the last accepted probe.
pub fn binary_search_gamma(c: &CostMatrix, epsilon: f64, cfg: &RefineConfig) -> Result<SearchOutcome> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    cfg.validate()?;
    if c.is_zero() {
        return Ok(SearchOutcome {
            gamma_star: 0.0,
            refinement: refine::refine_solve(c, 0.0, cfg)?,
            probes: Vec::new(),
        });
    }
    let tol = epsilon / c.original_scale();
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut probes = Vec::new();
    let mut warm = None;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let probe_cfg = RefineConfig {
            zeta: ((hi - lo) / 4.0).min(cfg.xi / 2.0).max(cfg.zeta),
            ..*cfg
        };
        match refine::refine_solve_warm(c, mid, &probe_cfg, warm.as_ref()) {
            Ok(r) => {
                probes.push(Probe { gamma: mid, accepted: true, inner_iterations: r.inner_iterations() });
                lo = mid;
                warm = Some(r.base_hamiltonian);
            }
            Err(Error::Infeasible { .. }) => {
                probes.push(Probe { gamma: mid, accepted: false, inner_iterations: 0 });
                hi = mid;
            }
            Err(e) => return Err(e),
        }
    }
    // Coarse probes skip the objective reserve, so the full-precision solve
    // can fail just below the optimum; back off in doubling steps.
    let mut gamma = lo;
    let mut back = tol;
    loop {
        match refine::refine_solve_warm(c, gamma, cfg, warm.as_ref()) {
            Ok(refinement) => return Ok(SearchOutcome { gamma_star: gamma, refinement, probes }),
            Err(Error::Infeasible { .. }) if gamma > -1.0 => {
                gamma = (lo - back).max(-1.0);
                back *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
}

/// An exactly feasible point of the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundedSolution {
    /// Unit trace, diagonal exactly `1/n`.
    pub rho_star: DenseSymmetric,
    /// `nρ*`: unit diagonal, positive semidefinite.
    pub x_matrix: DenseSymmetric,
    /// `tr(C·nρ*)`.
    pub objective: f64,
    /// Coordinates with `|nρ̃_ii − 1| > √ζ`.
    pub bad_set_size: usize,
}

/// Replaces the diagonal of `ρ̃` by `1/n` and mixes in `(√ζ/n)·I` so the
/// result is positive semidefinite, then rescales the trace.
pub fn round_to_feasible(state: &RefinementState, zeta: f64, c: &CostMatrix) -> Result<RoundedSolution> {
    let rho = &state.rho_tilde;
    let n = rho.dim();
    if c.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: c.dim() });
    }
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::InvalidInput(format!("zeta = {zeta} outside (0, 1)")));
    }
    let nf = n as f64;
    let root = zeta.sqrt();
    let bad_set_size = rho
        .diagonal()
        .iter()
        .filter(|d| (nf * *d - 1.0).abs() > root)
        .count();
    let limit = nf * root;
    if bad_set_size as f64 > limit {
        return Err(Error::NotPrecise { bad: bad_set_size, limit });
    }

    let mut w = rho.matrix().clone();
    for i in 0..n {
        w[(i, i)] = 1.0 / nf;
    }
    let mut star = w;
    for i in 0..n {
        star[(i, i)] += root / nf;
    }
    star /= 1.0 + root;
    for i in 0..n {
        star[(i, i)] = 1.0 / nf;
    }
    let rho_star = DenseSymmetric::symmetrized(star);
    let mut x = rho_star.matrix() * nf;
    for i in 0..n {
        x[(i, i)] = 1.0;
    }
    let x_matrix = DenseSymmetric::symmetrized(x);
    let objective = c.raw().trace_product_dense(&x_matrix)?;
    Ok(RoundedSolution { rho_star, x_matrix, objective, bad_set_size })
}

/// Random-hyperplane rounding: factor `X = VᵀV`, draw Gaussian `g`, take
/// `x = sign(Vᵀg)`. Trial `t` uses seed `seed + t`. Returns the best `xᵀCx`.
pub fn hyperplane_round(x_matrix: &DenseSymmetric, c: &CostMatrix, trials: usize, seed: u64) -> Result<(Vec<f64>, f64)> {
    let n = x_matrix.dim();
    if c.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: c.dim() });
    }
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    let eig = SymmetricEigen::try_new(x_matrix.matrix().clone(), f64::EPSILON, 0).ok_or(Error::Eigen)?;
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = eig.eigenvalues.min();
    if floor < -1e-6 * top.max(1.0) {
        return Err(Error::InvalidInput(format!("matrix is not positive semidefinite (λ_min = {floor:e})")));
    }
    // Rows of `v` are scaled eigenvectors, so column i is the vector of vertex i.
    let mut v = eig.eigenvectors.transpose();
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        v.row_mut(k).scale_mut(lambda.max(0.0).sqrt());
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
        let g = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let proj = v.tr_mul(&g);
        let x: Vec<f64> = proj.iter().map(|p| if *p >= 0.0 { 1.0 } else { -1.0 }).collect();
        let value = c.quadratic_form(&x);
        if best.as_ref().is_none_or(|b| value > b.1) {
            best = Some((x, value));
        }
    }
    Ok(best.expect("trials > 0"))
}

/// Dense `C` for callers that need it.
pub fn dense_cost(c: &CostMatrix) -> DMatrix<f64> {
    c.raw().to_dense().into_matrix()
}
