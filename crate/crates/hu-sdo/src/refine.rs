//! Iterative refinement around Hamiltonian Updates.
//!
//! The base solve (k = 0) runs HU on the unit-diagonal problem. Every later
//! round scales the current residuals up by `η`, solves the refining problem
//! at the same fixed inner precision, folds the correction back with
//! `ρ̂ = ρ̃ + (1/η)·Q∘ρ`, and restores positive semidefiniteness with a
//! spectrum shift `ρ̃ = (ρ̂ + δI)/(1 + nδ)`.
//!
//! Two things go beyond the bare recursion:
//!
//! * The base solve banks objective slack. A refining correction has a
//!   diagonal of size `‖ε‖₁`, so its off-diagonal part and hence its
//!   objective gain is of that order too. The shift, by contrast, can cost
//!   about `2‖ε‖₁·|γ̃|` of objective. Once the objective residual dominates,
//!   the refining problem asks for `tr((Q∘C̃)ρ) ≥ 1` from a state of
//!   diagonal mass below one, which no state meets. The base solve
//!   therefore targets `γ` plus the predicted future shift losses, and the
//!   later rounds only have to repair the diagonal.
//! * `δ` is raised to `−λ_min(ρ̂)` when the closed-form shift is too small to
//!   make `ρ̂ + δI` positive semidefinite.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feasibility::{self, FeasibilityInstance, HamiltonianDescription, HuOptions, Status};
use crate::linalg::{self, DenseSymmetric, SparseSymmetric};
use crate::optimize::CostMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    /// Inner precision constant; the inner solves use `(ξ/4)²`.
    pub xi: f64,
    /// Requested precision of the refined solution.
    pub zeta: f64,
    pub max_outer: usize,
    /// Tolerance on the original scale that `zeta` was derived from.
    pub epsilon_user: f64,
    pub hu: HuOptions,
}

impl RefineConfig {
    /// `ζ = (ε/(n‖C‖_F))⁴`.
    pub fn new(xi: f64, epsilon_user: f64, cost: &CostMatrix) -> Result<Self> {
        let scale = cost.dim() as f64 * cost.fro_norm();
        let zeta = if scale > 0.0 { (epsilon_user / scale).powi(4) } else { epsilon_user.powi(4) };
        let cfg = Self {
            xi,
            zeta,
            max_outer: 64,
            epsilon_user,
            hu: HuOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_zeta(xi: f64, zeta: f64) -> Result<Self> {
        let cfg = Self {
            xi,
            zeta,
            max_outer: 64,
            epsilon_user: zeta.powf(0.25),
            hu: HuOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi < 0.5) {
            return Err(Error::Config(format!("xi = {} must lie in (0, 1/2)", self.xi)));
        }
        if !(self.zeta > 0.0 && self.zeta < self.xi) {
            return Err(Error::Config(format!(
                "zeta = {:e} must lie in (0, xi)",
                self.zeta
            )));
        }
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer must be positive".into()));
        }
        Ok(())
    }

    /// `(ξ/4)²`.
    pub fn inner_precision(&self) -> f64 {
        (self.xi / 4.0).powi(2)
    }

    /// The precision actually pursued: `ζ`, but never below what double
    /// precision can resolve on an `n`×`n` unit-trace matrix.
    pub fn effective_zeta(&self, n: usize) -> f64 {
        self.zeta.max(zeta_floor(n))
    }
}

/// Smallest diagonal residual the refinement tries to reach at dimension `n`.
pub fn zeta_floor(n: usize) -> f64 {
    64.0 * n as f64 * f64::EPSILON
}

/// Compressed description of one round's contribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementTuple {
    pub eta: f64,
    pub y: [f64; 2],
    pub q_diag: Vec<f64>,
    /// One entry longer than `q_diag` when the round was padded with a
    /// slack coordinate.
    pub d_diag: Vec<f64>,
    pub delta: f64,
}

impl RefinementTuple {
    pub fn dim(&self) -> usize {
        self.q_diag.len()
    }

    pub fn is_padded(&self) -> bool {
        self.d_diag.len() > self.q_diag.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementState {
    pub rho_tilde: DenseSymmetric,
    /// `ε_i = ρ̃_ii − 1/n`.
    pub resid: Vec<f64>,
    pub gamma_tilde: f64,
    pub eta: f64,
    pub q_diag: Vec<f64>,
    pub delta: f64,
    pub outer_k: usize,
}

impl RefinementState {
    pub fn resid_l1(&self) -> f64 {
        self.resid.iter().map(|e| e.abs()).sum()
    }
}

/// Diagnostics for one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub k: usize,
    pub eta: f64,
    pub delta: f64,
    pub resid_l1: f64,
    pub objective_residual: f64,
    pub gamma_tilde: f64,
    pub inner_iterations: usize,
    pub y_l1: f64,
    /// `λ_min(ρ̂)` before the shift; absent for the base solve.
    pub lambda_min_hat: Option<f64>,
    /// Whether `δ` had to exceed its closed form.
    pub shift_raised: bool,
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub tuples: Vec<RefinementTuple>,
    pub state: RefinementState,
    pub records: Vec<OuterRecord>,
    /// Objective target the base solve ended up using.
    pub base_target: f64,
    /// Hamiltonian of the base solve, reusable as a warm start.
    pub base_hamiltonian: HamiltonianDescription,
}

impl Refinement {
    pub fn inner_iterations(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }

    pub fn outer_iterations(&self) -> usize {
        self.state.outer_k
    }
}

/// How many times the base solve may raise its target.
const MAX_RESERVE_ROUNDS: usize = 8;

pub fn refine_solve(cost: &CostMatrix, gamma: f64, cfg: &RefineConfig) -> Result<Refinement> {
    refine_solve_warm(cost, gamma, cfg, None)
}

/// As [`refine_solve`], with the base solve continuing from `warm`, which
/// must be a base Hamiltonian for the same cost matrix.
pub fn refine_solve_warm(
    cost: &CostMatrix,
    gamma: f64,
    cfg: &RefineConfig,
    warm: Option<&HamiltonianDescription>,
) -> Result<Refinement> {
    cfg.validate()?;
    if !gamma.is_finite() || gamma.abs() > 1.0 {
        return Err(Error::InvalidInput(format!("gamma = {gamma} outside [-1, 1]")));
    }
    let n = cost.dim();
    let nf = n as f64;
    let c = cost.normalized();
    let p = cfg.inner_precision();
    let zeta = cfg.effective_zeta(n);
    let stats = CostStats::new(&c);

    // I/n already reaches every γ ≤ tr(C̃)/n.
    if gamma <= c.trace() / nf {
        let resid = vec![0.0; n];
        let rho = DenseSymmetric::identity(n).scaled(1.0 / nf);
        let gamma_tilde = c.trace_product_dense(&rho)?;
        return Ok(Refinement {
            tuples: vec![RefinementTuple {
                eta: 1.0,
                y: [0.0, 0.0],
                q_diag: vec![1.0; n],
                d_diag: vec![0.0; n],
                delta: 0.0,
            }],
            records: vec![OuterRecord {
                k: 0,
                eta: 1.0,
                delta: 0.0,
                resid_l1: 0.0,
                objective_residual: gamma - gamma_tilde,
                gamma_tilde,
                inner_iterations: 1,
                y_l1: 0.0,
                lambda_min_hat: None,
                shift_raised: false,
            }],
            state: RefinementState {
                rho_tilde: rho,
                resid,
                gamma_tilde,
                eta: 1.0,
                q_diag: vec![1.0; n],
                delta: 0.0,
                outer_k: 0,
            },
            base_target: gamma,
            base_hamiltonian: HamiltonianDescription::zero(n),
        });
    }

    // Base solve, raising the target until the banked slack covers the
    // predicted losses of the later rounds.
    let mut target = (gamma + 0.75 * p).min(1.0);
    let mut warm = warm.cloned();
    let mut base_iterations = 0;
    let mut rounds = 0;
    let mut prev = None;
    let base = loop {
        let inst = FeasibilityInstance::unit_diagonal(c.clone(), target, p)?;
        let out = feasibility::solve_feasibility_with(&inst, &cfg.hu, warm.as_ref())?;
        base_iterations += out.iterations_used;
        if out.status == Status::Infeasible {
            // A raised target can overshoot the optimum; keep the last
            // accepted solve, or drop the margin on the first one.
            if let Some(last) = prev.take() {
                break last;
            }
            if target > gamma {
                target = gamma;
                continue;
            }
            return Err(Error::Infeasible {
                gamma_target: target,
                certificate: out.certificate.expect("infeasible outcome carries a certificate"),
            });
        }
        let rho = out.state.clone().expect("accepted outcome carries a state").into_matrix();
        let gamma_tilde = c.trace_product_dense(&rho)?;
        let resid: Vec<f64> = rho.diagonal().iter().map(|d| d - 1.0 / nf).collect();
        // No refining round follows when the base solve is already
        // ζ-precise, so there is nothing to bank for.
        let done = (gamma - gamma_tilde).max(l1(&resid)) <= zeta;
        let need = objective_reserve(&rho, &resid, gamma_tilde, p, &stats);
        rounds += 1;
        let next = (gamma + need + 0.75 * p).min(1.0);
        if done || gamma_tilde - gamma >= need || rounds >= MAX_RESERVE_ROUNDS || next <= target {
            break (out, rho, gamma_tilde, resid);
        }
        target = next;
        warm = Some(out.hamiltonian.clone());
        prev = Some((out, rho, gamma_tilde, resid));
    };
    let (out0, rho0, gamma0, resid0) = base;

    let base_hamiltonian = out0.hamiltonian.clone();
    let mut tuples = vec![RefinementTuple {
        eta: 1.0,
        y: out0.hamiltonian.y,
        q_diag: vec![1.0; n],
        d_diag: out0.hamiltonian.d_diag.clone(),
        delta: 0.0,
    }];
    let mut records = vec![OuterRecord {
        k: 0,
        eta: 1.0,
        delta: 0.0,
        resid_l1: l1(&resid0),
        objective_residual: gamma - gamma0,
        gamma_tilde: gamma0,
        inner_iterations: base_iterations,
        y_l1: out0.hamiltonian.y_l1(),
        lambda_min_hat: None,
        shift_raised: false,
    }];
    let mut state = RefinementState {
        rho_tilde: rho0,
        resid: resid0,
        gamma_tilde: gamma0,
        eta: 1.0,
        q_diag: vec![1.0; n],
        delta: 0.0,
        outer_k: 0,
    };

    loop {
        let objective_residual = gamma - state.gamma_tilde;
        let resid_l1 = state.resid_l1();
        let scale = objective_residual.max(resid_l1);
        if scale <= zeta {
            break;
        }
        if state.outer_k >= cfg.max_outer {
            return Err(Error::NonConvergence(cfg.max_outer));
        }
        let k = state.outer_k + 1;
        let eta = 1.0 / scale;
        let q: Vec<f64> = state.resid.iter().map(|e| sign(-e)).collect();
        let mut t: Vec<f64> = state.resid.iter().map(|e| eta * e.abs()).collect();
        let mass: f64 = t.iter().sum();
        let gamma_target = (eta * objective_residual).clamp(-1.0, 1.0);

        let padded = mass < 1.0 - 1e-12;
        let inst = if padded {
            let mut qp = q.clone();
            qp.push(0.0);
            t.push(1.0 - mass);
            FeasibilityInstance::new(c.padded(n + 1)?, qp, t, gamma_target, p)?
        } else {
            for ti in &mut t {
                *ti /= mass;
            }
            FeasibilityInstance::new(c.clone(), q.clone(), t, gamma_target, p)?
        };
        let out = feasibility::solve_feasibility(&inst).and_then(|o| {
            if o.status == Status::Infeasible {
                Err(Error::Infeasible {
                    gamma_target,
                    certificate: o.certificate.expect("infeasible outcome carries a certificate"),
                })
            } else {
                Ok(o)
            }
        })?;
        let rho = out.state.as_ref().expect("accepted outcome carries a state").matrix().top_left(n);
        let masked_gain = c.masked_trace_product_raw(&q, rho.matrix());
        let correction = linalg::hadamard_apply(&q, &rho)?.scaled(1.0 / eta);
        let rho_hat = state.rho_tilde.add(&correction)?;

        let closed_form = 2.0 / nf * (resid_l1 + p / eta);
        let lambda_min_hat = rho_hat.min_eigenvalue();
        let (delta, shift_raised) = if -lambda_min_hat > closed_form {
            (-lambda_min_hat, true)
        } else {
            (closed_form, false)
        };
        let rho_tilde = rho_hat.shifted(delta).scaled(1.0 / (1.0 + nf * delta));

        let gamma_incremental =
            (state.gamma_tilde + masked_gain / eta + delta * c.trace()) / (1.0 + nf * delta);
        let gamma_tilde = c.trace_product_dense(&rho_tilde)?;
        debug_assert!(
            (gamma_incremental - gamma_tilde).abs() <= 1e-9,
            "objective bookkeeping drifted: {gamma_incremental} vs {gamma_tilde}"
        );
        let resid: Vec<f64> = rho_tilde.diagonal().iter().map(|d| d - 1.0 / nf).collect();

        tuples.push(RefinementTuple {
            eta,
            y: out.hamiltonian.y,
            q_diag: q.clone(),
            d_diag: out.hamiltonian.d_diag.clone(),
            delta,
        });
        records.push(OuterRecord {
            k,
            eta,
            delta,
            resid_l1: l1(&resid),
            objective_residual: gamma - gamma_tilde,
            gamma_tilde,
            inner_iterations: out.iterations_used,
            y_l1: out.hamiltonian.y_l1(),
            lambda_min_hat: Some(lambda_min_hat),
            shift_raised,
        });
        state = RefinementState {
            rho_tilde,
            resid,
            gamma_tilde,
            eta,
            q_diag: q,
            delta,
            outer_k: k,
        };
    }

    Ok(Refinement {
        tuples,
        state,
        records,
        base_target: target,
        base_hamiltonian,
    })
}

struct CostStats {
    max_abs_diag: f64,
    mean_diag: f64,
}

impl CostStats {
    fn new(c: &SparseSymmetric) -> Self {
        let d = c.diagonal();
        Self {
            max_abs_diag: d.iter().fold(0.0, |m, v| m.max(v.abs())),
            mean_diag: d.iter().sum::<f64>() / d.len() as f64,
        }
    }
}

/// Objective the later rounds are expected to give up, given the base
/// solution. The first correction is close to `−diag(ε)`, which predicts the
/// first shift; later rounds shrink geometrically and are covered by the
/// safety factor.
fn objective_reserve(
    rho: &DenseSymmetric,
    resid: &[f64],
    gamma_tilde: f64,
    p: f64,
    stats: &CostStats,
) -> f64 {
    let l1 = l1(resid);
    if l1 == 0.0 {
        return 0.0;
    }
    let n = resid.len() as f64;
    let corrected = rho
        .sub(&DenseSymmetric::from_diagonal(resid))
        .expect("same dimension");
    let shift = (2.0 / n * (1.0 + p) * l1).max(-corrected.min_eigenvalue() + 0.75 * p * l1);
    let shift_loss = n * shift * (gamma_tilde.abs() + stats.mean_diag.abs());
    let correction_loss = stats.max_abs_diag * l1;
    1.5 * (shift_loss + correction_loss) + 2.0 * p * l1
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|e| e.abs()).sum()
}

/// `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Weight of each round's masked Gibbs term and the accumulated identity
/// coefficient: unrolling the shift recursion gives
/// `ρ̃ = Σ_k w_k·Q_k∘ρ_k + Δ·I` with `w_k = (1/η_k)·Π_{j≥k} 1/(1+nδ_j)` and
/// `Δ = Σ_k δ_k·Π_{j≥k} 1/(1+nδ_j)`.
pub fn solution_weights(tuples: &[RefinementTuple]) -> (Vec<f64>, f64) {
    let mut weights = vec![0.0; tuples.len()];
    let mut identity = 0.0;
    let mut tail = 1.0;
    for (k, t) in tuples.iter().enumerate().rev() {
        let n = t.dim() as f64;
        tail /= 1.0 + n * t.delta;
        weights[k] = tail / t.eta;
        identity += t.delta * tail;
    }
    (weights, identity)
}

/// Rewrites the tuples so that every shift is zero: each round's `η` absorbs
/// the later renormalizations and one synthetic tuple
/// `(η = 1/(nΔ), y = 0, q = e, d = 0, δ = 0)` carries the identity part.
/// On the result the per-term formula `1/(η(1+nδ))·(Q∘ρ + δI)` is exact.
pub fn fold_shifts(tuples: &[RefinementTuple]) -> Vec<RefinementTuple> {
    let (weights, identity) = solution_weights(tuples);
    let mut out: Vec<RefinementTuple> = tuples
        .iter()
        .zip(&weights)
        .map(|(t, w)| RefinementTuple {
            eta: 1.0 / w,
            delta: 0.0,
            ..t.clone()
        })
        .collect();
    if identity > 0.0 {
        if let Some(first) = tuples.first() {
            let n = first.dim();
            out.push(RefinementTuple {
                eta: 1.0 / (n as f64 * identity),
                y: [0.0, 0.0],
                q_diag: vec![1.0; n],
                d_diag: vec![0.0; n],
                delta: 0.0,
            });
        }
    }
    out
}

/// The Gibbs state of one tuple, restricted to the first `n` coordinates.
pub fn tuple_gibbs(tuple: &RefinementTuple, c_tilde: &SparseSymmetric, opts: &HuOptions) -> Result<DenseSymmetric> {
    let n = tuple.dim();
    if c_tilde.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: c_tilde.dim() });
    }
    let full = tuple.d_diag.len();
    if full != n && full != n + 1 {
        return Err(Error::DimensionMismatch { expected: n, found: full });
    }
    let mut q = tuple.q_diag.clone();
    q.resize(full, 0.0);
    let mut h = c_tilde.padded(full)?.to_dense().into_matrix();
    for i in 0..full {
        h[(i, i)] *= q[i];
    }
    h *= tuple.y[0];
    for i in 0..full {
        h[(i, i)] += tuple.y[1] * tuple.d_diag[i];
    }
    let rho = if h.iter().enumerate().all(|(idx, v)| *v == 0.0 || idx % (full + 1) == 0) {
        let d: Vec<f64> = (0..full).map(|i| h[(i, i)]).collect();
        linalg::gibbs_diagonal(&d)
    } else if full <= opts.gibbs.exact_crossover {
        linalg::gibbs_spectral(&h)?.0
    } else {
        let bound = tuple.y[0].abs() + tuple.y[1].abs();
        let hs = DenseSymmetric::symmetrized(h);
        linalg::gibbs_from_hamiltonian(&hs, bound, 1e-12)?.into_matrix().into_matrix()
    };
    Ok(DenseSymmetric::symmetrized(rho.view((0, 0), (n, n)).into_owned()))
}

/// `Q∘ρ` for one tuple.
fn masked_tuple_state(tuple: &RefinementTuple, c_tilde: &SparseSymmetric, opts: &HuOptions) -> Result<DenseSymmetric> {
    let rho = tuple_gibbs(tuple, c_tilde, opts)?;
    linalg::hadamard_apply(&tuple.q_diag, &rho)
}

/// Dense solution `Σ_k 1/(η_k(1+nδ_k))·(Q_k∘ρ_k + δ_k I)` over the
/// shift-folded tuples.
pub fn assemble_solution(tuples: &[RefinementTuple], c_tilde: &SparseSymmetric) -> Result<DenseSymmetric> {
    if tuples.is_empty() {
        return Err(Error::InvalidInput("no tuples to assemble".into()));
    }
    let n = c_tilde.dim();
    let opts = HuOptions::default();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for t in fold_shifts(tuples) {
        if t.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: t.dim() });
        }
        let w = 1.0 / (t.eta * (1.0 + n as f64 * t.delta));
        let term = masked_tuple_state(&t, c_tilde, &opts)?;
        acc += term.matrix() * w;
        for i in 0..n {
            acc[(i, i)] += w * t.delta;
        }
    }
    Ok(DenseSymmetric::symmetrized(acc))
}

/// Something that can be traced against a masked Gibbs state.
pub trait TraceOperand {
    fn dim(&self) -> usize;
    fn trace(&self) -> f64;
    /// `tr((Q∘A)ρ)`.
    fn masked_trace(&self, q_diag: &[f64], rho: &DMatrix<f64>) -> f64;
}

impl TraceOperand for SparseSymmetric {
    fn dim(&self) -> usize {
        SparseSymmetric::dim(self)
    }

    fn trace(&self) -> f64 {
        SparseSymmetric::trace(self)
    }

    fn masked_trace(&self, q_diag: &[f64], rho: &DMatrix<f64>) -> f64 {
        self.masked_trace_product_raw(q_diag, rho)
    }
}

impl TraceOperand for DenseSymmetric {
    fn dim(&self) -> usize {
        DenseSymmetric::dim(self)
    }

    fn trace(&self) -> f64 {
        DenseSymmetric::trace(self)
    }

    fn masked_trace(&self, q_diag: &[f64], rho: &DMatrix<f64>) -> f64 {
        let a = self.matrix();
        let mut s = a.dot(rho);
        for (i, q) in q_diag.iter().enumerate() {
            s += (q - 1.0) * a[(i, i)] * rho[(i, i)];
        }
        s
    }
}

/// `tr(A·ρ̃)` for the solution described by `tuples`, one Gibbs state at a
/// time, using `tr(A(Q∘ρ)) = tr((Q∘A)ρ)`.
pub fn trace_with_solution<A: TraceOperand + ?Sized>(
    a: &A,
    tuples: &[RefinementTuple],
    c_tilde: &SparseSymmetric,
) -> Result<f64> {
    let n = c_tilde.dim();
    if a.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.dim() });
    }
    if tuples.is_empty() {
        return Err(Error::InvalidInput("no tuples to evaluate".into()));
    }
    let opts = HuOptions::default();
    let (weights, identity) = solution_weights(tuples);
    let mut total = identity * a.trace();
    for (t, w) in tuples.iter().zip(weights) {
        let rho = tuple_gibbs(t, c_tilde, &opts)?;
        total += w * a.masked_trace(&t.q_diag, rho.matrix());
    }
    Ok(total)
}
