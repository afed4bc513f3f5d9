//! Hamiltonian Updates for the two-constraint feasibility problem
//!
//! find ρ ⪰ 0, tr ρ = 1, with tr((Q∘C̃)ρ) ≥ γ_target and diag(ρ) = target.
//!
//! Each iteration checks the objective oracle, then the diagonal oracle, and
//! on the first violation adds `precision/16` times the separating direction
//! to the Hamiltonian. The oracles are exact, so the `3·precision/4`
//! acceptance thresholds leave the whole Taylor budget as margin.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Certificate, Error, Result};
use crate::linalg::{self, GibbsState, SparseSymmetric};

/// One feasibility problem handed to [`solve_feasibility`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityInstance {
    c_tilde: SparseSymmetric,
    q_diag: Vec<f64>,
    target_diag: Vec<f64>,
    gamma_target: f64,
    precision: f64,
}

impl FeasibilityInstance {
    pub fn new(
        c_tilde: SparseSymmetric,
        q_diag: Vec<f64>,
        target_diag: Vec<f64>,
        gamma_target: f64,
        precision: f64,
    ) -> Result<Self> {
        let n = c_tilde.dim();
        for len in [q_diag.len(), target_diag.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        if let Some(q) = q_diag.iter().find(|q| !matches!(**q, -1.0 | 0.0 | 1.0)) {
            return Err(Error::InvalidInput(format!("mask entry {q} not in {{-1, 0, 1}}")));
        }
        if target_diag.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidInput("target diagonal must be finite and nonnegative".into()));
        }
        let total: f64 = target_diag.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("target diagonal sums to {total} > 1")));
        }
        if !gamma_target.is_finite() || gamma_target.abs() > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("objective target {gamma_target} outside [-1, 1]")));
        }
        if !(precision > 0.0 && precision < 1.0) {
            return Err(Error::InvalidInput(format!("precision {precision} outside (0, 1)")));
        }
        Ok(Self {
            c_tilde,
            q_diag,
            target_diag,
            gamma_target,
            precision,
        })
    }

    /// Plain diagonal problem: `Q = eeᵀ`, target `I/n`.
    pub fn unit_diagonal(c_tilde: SparseSymmetric, gamma_target: f64, precision: f64) -> Result<Self> {
        let n = c_tilde.dim();
        Self::new(c_tilde, vec![1.0; n], vec![1.0 / n as f64; n], gamma_target, precision)
    }

    pub fn dim(&self) -> usize {
        self.c_tilde.dim()
    }

    pub fn c_tilde(&self) -> &SparseSymmetric {
        &self.c_tilde
    }

    pub fn q_diag(&self) -> &[f64] {
        &self.q_diag
    }

    pub fn target_diag(&self) -> &[f64] {
        &self.target_diag
    }

    pub fn gamma_target(&self) -> f64 {
        self.gamma_target
    }

    pub fn precision(&self) -> f64 {
        self.precision
    }

    /// Dense `Q∘C̃`.
    pub fn masked_cost(&self) -> DMatrix<f64> {
        let mut m = self.c_tilde.to_dense().into_matrix();
        for (i, q) in self.q_diag.iter().enumerate() {
            m[(i, i)] *= q;
        }
        m
    }
}

/// `T = ⌈64·log₂(n)·precision⁻²⌉ + 1`, saturating at `usize::MAX`.
pub fn iteration_budget(n: usize, precision: f64) -> usize {
    ((64.0 * (n as f64).log2() / (precision * precision)).ceil() as usize).saturating_add(1)
}

/// Largest `‖y‖₁` reachable within the budget.
pub fn y_norm_bound(n: usize, precision: f64) -> f64 {
    iteration_budget(n, precision) as f64 * precision / 16.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum Separation {
    /// `P = −(Q∘C̃)`.
    Objective,
    /// `P = diag(d)` with `d ∈ {−1, 0, 1}ⁿ`.
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Accept,
    Separate(Separation),
}

/// `tr((Q∘C̃)ρ)`.
pub fn objective_value(inst: &FeasibilityInstance, rho: &GibbsState) -> f64 {
    inst.c_tilde.masked_trace_product_raw(&inst.q_diag, rho.matrix().matrix())
}

/// `Σ_i |ρ_ii − target_i|`.
pub fn diagonal_deviation(inst: &FeasibilityInstance, rho: &GibbsState) -> f64 {
    deviation(&rho.matrix().diagonal(), &inst.target_diag)
}

fn deviation(diag: &[f64], target: &[f64]) -> f64 {
    diag.iter().zip(target).map(|(p, t)| (p - t).abs()).sum()
}

fn sign_pattern(diag: &[f64], target: &[f64]) -> Vec<f64> {
    diag.iter()
        .zip(target)
        .map(|(p, t)| {
            if p > t {
                1.0
            } else if p < t {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}

pub fn oracle_objective(inst: &FeasibilityInstance, rho: &GibbsState) -> Verdict {
    if objective_value(inst, rho) >= inst.gamma_target - 0.75 * inst.precision {
        Verdict::Accept
    } else {
        Verdict::Separate(Separation::Objective)
    }
}

pub fn oracle_diagonal(inst: &FeasibilityInstance, rho: &GibbsState) -> Verdict {
    let diag = rho.matrix().diagonal();
    if deviation(&diag, &inst.target_diag) <= 0.75 * inst.precision {
        Verdict::Accept
    } else {
        Verdict::Separate(Separation::Diagonal(sign_pattern(&diag, &inst.target_diag)))
    }
}

/// `H = y₁(Q∘C̃) + y₂·diag(d)`, with `d` the average of the diagonal
/// directions applied so far (entries in `[−1, 1]`).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HamiltonianDescription {
    pub y: [f64; 2],
    pub d_diag: Vec<f64>,
    pub objective_steps: usize,
    pub diagonal_steps: usize,
}

impl HamiltonianDescription {
    pub fn zero(n: usize) -> Self {
        Self {
            y: [0.0, 0.0],
            d_diag: vec![0.0; n],
            objective_steps: 0,
            diagonal_steps: 0,
        }
    }

    pub fn y_l1(&self) -> f64 {
        self.y[0].abs() + self.y[1].abs()
    }

    /// `y₂·d`, the diagonal part of `H`.
    pub fn diagonal_part(&self) -> Vec<f64> {
        self.d_diag.iter().map(|d| self.y[1] * d).collect()
    }

    /// Dense `H` given the dense mask-weighted cost `Q∘C̃`.
    pub fn hamiltonian(&self, masked_cost: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = masked_cost * self.y[0];
        for (i, v) in self.diagonal_part().into_iter().enumerate() {
            h[(i, i)] += v;
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Accepted,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct FeasibilityOutcome {
    pub status: Status,
    pub state: Option<GibbsState>,
    pub hamiltonian: HamiltonianDescription,
    pub diag_estimate: Vec<f64>,
    pub objective_estimate: f64,
    pub iterations_used: usize,
    pub certificate: Option<Certificate>,
}

/// Knobs that do not change what counts as a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuOptions {
    pub gibbs: linalg::GibbsOptions,
    /// Stop early when a Lagrangian bound proves the exact feasible set empty.
    pub dual_check: bool,
    /// On the Taylor route the bound needs its own eigensolve; do it this often.
    pub dual_check_interval: usize,
    /// Optional cap below the theoretical budget.
    pub max_iterations: Option<usize>,
}

impl Default for HuOptions {
    fn default() -> Self {
        Self {
            gibbs: linalg::GibbsOptions::default(),
            dual_check: true,
            dual_check_interval: 32,
            max_iterations: None,
        }
    }
}

pub fn solve_feasibility(inst: &FeasibilityInstance) -> Result<FeasibilityOutcome> {
    solve_feasibility_with(inst, &HuOptions::default(), None)
}

/// Runs Hamiltonian Updates, optionally continuing from an earlier
/// Hamiltonian instead of `H = 0`.
pub fn solve_feasibility_with(
    inst: &FeasibilityInstance,
    opts: &HuOptions,
    warm: Option<&HamiltonianDescription>,
) -> Result<FeasibilityOutcome> {
    let n = inst.dim();
    let p = inst.precision;
    let step = p / 16.0;
    let threshold = 0.75 * p;
    let masked = inst.masked_cost();
    let cost_is_diagonal = inst.c_tilde.entries().iter().all(|e| e.0 == e.1);
    let target = &inst.target_diag;
    let target_mass: f64 = target.iter().sum();

    let mut desc = match warm {
        Some(w) => {
            if w.d_diag.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: w.d_diag.len() });
            }
            w.clone()
        }
        None => HamiltonianDescription::zero(n),
    };
    // H = -a·(Q∘C̃) + diag(h); `a` and `h` are kept exactly and folded into
    // the description on exit.
    let mut a = -desc.y[0];
    let mut h = desc.diagonal_part();
    let mut y2 = desc.y[1];

    let budget = iteration_budget(n, p);
    let cap = opts.max_iterations.map_or(budget, |m| m.min(budget));

    let finish = |desc: &mut HamiltonianDescription, a: f64, h: &[f64], y2: f64| {
        desc.y = [-a, y2];
        desc.d_diag = if y2 > 0.0 { h.iter().map(|v| v / y2).collect() } else { vec![0.0; n] };
    };

    if opts.dual_check {
        // u = 0 in the Lagrangian bound: tr(MX) ≤ λ_max(M)·Σt.
        let lmax = masked.clone().symmetric_eigenvalues().max();
        let mut bound = lmax * target_mass;
        if inst.gamma_target <= bound + dual_tolerance(bound) && n <= DUAL_SOLVE_MAX_DIM {
            bound = bound.min(lagrangian_bound(&masked, target));
        }
        if inst.gamma_target > bound + dual_tolerance(bound) {
            finish(&mut desc, a, &h, y2);
            return Ok(infeasible(desc, 0, Certificate::DualBound { bound }));
        }
    }

    for t in 1..=cap {
        let y_l1 = a + y2;
        let (rho, lambda_min) = if a == 0.0 || cost_is_diagonal {
            let hd: Vec<f64> = (0..n).map(|i| h[i] - a * masked[(i, i)]).collect();
            let lo = hd.iter().copied().fold(f64::INFINITY, f64::min);
            (linalg::gibbs_diagonal(&hd), Some(lo))
        } else {
            let mut hm = &masked * (-a);
            for i in 0..n {
                hm[(i, i)] += h[i];
            }
            if n <= opts.gibbs.exact_crossover {
                let (rho, lmin) = linalg::gibbs_spectral(&hm)?;
                (rho, Some(lmin))
            } else {
                let hs = linalg::DenseSymmetric::symmetrized(hm.clone());
                let state = linalg::gibbs_from_hamiltonian(&hs, y_l1, p / 4.0)?;
                let lmin = if opts.dual_check && t % opts.dual_check_interval.max(1) == 0 {
                    Some(hm.symmetric_eigenvalues().min())
                } else {
                    None
                };
                (state.into_matrix().into_matrix(), lmin)
            }
        };

        if opts.dual_check && a > 0.0 {
            if let Some(lmin) = lambda_min {
                // u = h/a: tr(MX) ≤ λ_max(M − diag u)·Σt + u·t, and
                // M − diag(u) = −H/a.
                let ut: f64 = h.iter().zip(target).map(|(hi, ti)| hi * ti).sum::<f64>() / a;
                let bound = -lmin / a * target_mass + ut;
                if inst.gamma_target > bound + dual_tolerance(bound) {
                    finish(&mut desc, a, &h, y2);
                    return Ok(infeasible(desc, t, Certificate::DualBound { bound }));
                }
            }
        }

        let objective = inst.c_tilde.masked_trace_product_raw(&inst.q_diag, &rho);
        if objective < inst.gamma_target - threshold {
            a += step;
            desc.objective_steps += 1;
            continue;
        }
        let diag: Vec<f64> = (0..n).map(|i| rho[(i, i)]).collect();
        if deviation(&diag, target) > threshold {
            for (hi, s) in h.iter_mut().zip(sign_pattern(&diag, target)) {
                *hi += step * s;
            }
            y2 += step;
            desc.diagonal_steps += 1;
            continue;
        }
        finish(&mut desc, a, &h, y2);
        return Ok(FeasibilityOutcome {
            status: Status::Accepted,
            state: Some(GibbsState::from_raw(rho, p / 4.0)),
            hamiltonian: desc,
            diag_estimate: diag,
            objective_estimate: objective,
            iterations_used: t,
            certificate: None,
        });
    }
    finish(&mut desc, a, &h, y2);
    Ok(infeasible(desc, cap, Certificate::Budget { iterations: cap }))
}

/// Largest dimension for the up-front dual solve.
const DUAL_SOLVE_MAX_DIM: usize = 256;

/// Upper bound on `max tr(MX)` over `X ⪰ 0` with `diag X = t`, from
/// `tr(MX) ≤ λ_max(M − diag u)·Σt + uᵀt` at a `u` found by BFGS on the
/// log-sum-exp smoothing, tightened over a few temperatures. Every `u` gives
/// a valid bound; the smallest exact value seen is returned.
fn lagrangian_bound(m: &DMatrix<f64>, t: &[f64]) -> f64 {
    let n = t.len();
    let mass: f64 = t.iter().sum();
    let tv = DVector::from_column_slice(t);
    let mut best = f64::INFINITY;
    let mut u = DVector::<f64>::zeros(n);

    // Smoothed value and gradient; records the exact bound on the way.
    let eval = |u: &DVector<f64>, beta: f64, best: &mut f64| -> Option<(f64, DVector<f64>)> {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] -= u[i];
        }
        let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)?;
        let top = eig.eigenvalues.max();
        let ut = u.dot(&tv);
        *best = best.min(top * mass + ut);
        let w: Vec<f64> = eig.eigenvalues.iter().map(|l| (beta * (l - top)).exp()).collect();
        let z: f64 = w.iter().sum();
        let value = mass * (top + z.ln() / beta) + ut;
        let mut grad = tv.clone();
        for (k, wk) in w.iter().enumerate() {
            let c = mass * wk / z;
            if c == 0.0 {
                continue;
            }
            for i in 0..n {
                let v = eig.eigenvectors[(i, k)];
                grad[i] -= c * v * v;
            }
        }
        Some((value, grad))
    };

    for beta in [1e1, 1e2, 1e3, 1e4, 1e5] {
        let Some((mut f, mut g)) = eval(&u, beta, &mut best) else {
            return best;
        };
        let mut hinv = DMatrix::<f64>::identity(n, n) / beta;
        for _ in 0..DUAL_BFGS_STEPS {
            if g.amax() < 1e-12 {
                break;
            }
            let mut d = -(&hinv * &g);
            let mut slope = g.dot(&d);
            if slope >= 0.0 {
                hinv = DMatrix::identity(n, n) / beta;
                d = -&g / beta;
                slope = g.dot(&d);
            }
            let mut step = 1.0;
            let mut next = None;
            for _ in 0..40 {
                let trial = &u + &d * step;
                if let Some((ft, gt)) = eval(&trial, beta, &mut best) {
                    if ft <= f + 1e-4 * step * slope {
                        next = Some((trial, ft, gt));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((un, fnew, gn)) = next else {
                break;
            };
            let sv = &un - &u;
            let yv = &gn - &g;
            let sy = sv.dot(&yv);
            if sy > 1e-300 {
                let rho = 1.0 / sy;
                let id = DMatrix::<f64>::identity(n, n);
                let left = &id - &sv * yv.transpose() * rho;
                let right = &id - &yv * sv.transpose() * rho;
                hinv = &left * &hinv * &right + &sv * sv.transpose() * rho;
            }
            let progress = f - fnew;
            u = un;
            f = fnew;
            g = gn;
            if progress <= 1e-15 * (1.0 + f.abs()) {
                break;
            }
        }
    }
    best
}

const DUAL_BFGS_STEPS: usize = 60;

fn dual_tolerance(bound: f64) -> f64 {
    1e-10 * (1.0 + bound.abs())
}

fn infeasible(desc: HamiltonianDescription, iterations: usize, certificate: Certificate) -> FeasibilityOutcome {
    let n = desc.d_diag.len();
    FeasibilityOutcome {
        status: Status::Infeasible,
        state: None,
        hamiltonian: desc,
        diag_estimate: vec![0.0; n],
        objective_estimate: f64::NAN,
        iterations_used: iterations,
        certificate: Some(certificate),
    }
}
