mod common;

use hu_sdo::feasibility::{y_norm_bound, HuOptions};
use hu_sdo::linalg::{DenseSymmetric, SparseSymmetric};
use hu_sdo::optimize::CostMatrix;
use hu_sdo::oracles::SdoInstance;
use hu_sdo::refine::{
    assemble_solution, fold_shifts, refine_solve, solution_weights, trace_with_solution, tuple_gibbs, RefineConfig,
    Refinement, RefinementTuple,
};
use hu_sdo::Error;
use proptest::prelude::*;

use common::*;

const XI: f64 = 0.1;

fn pair() -> CostMatrix {
    SdoInstance::PairCoupling.cost()
}

fn cfg(zeta: f64) -> RefineConfig {
    RefineConfig::with_zeta(XI, zeta).unwrap()
}

/// `max{γ − γ̃, ‖ε‖₁}` per recorded round.
fn scales(r: &Refinement) -> Vec<f64> {
    r.records.iter().map(|rec| rec.objective_residual.max(rec.resid_l1)).collect()
}

fn check_envelope(r: &Refinement, zeta: f64) {
    for (k, s) in scales(r).iter().enumerate() {
        assert!(*s <= 2.0 * XI.powi(k as i32 + 1), "round {k}: scale {s:e}");
    }
    for rec in &r.records {
        assert!(rec.eta >= 1.0 / (2.0 * XI.powi(rec.k as i32)) * (1.0 - 1e-12), "round {}: η = {}", rec.k, rec.eta);
    }
    let k_max = 2.0 + (2.0 / zeta).ln() / (1.0 / XI).ln();
    assert!(r.outer_iterations() as f64 <= k_max);
    assert_eq!(r.tuples.len(), r.outer_iterations() + 1);
    assert_eq!(r.records.len(), r.tuples.len());
}

#[test]
fn config_validation() {
    let c = pair();
    assert!(RefineConfig::with_zeta(0.5, 1e-8).is_err());
    assert!(RefineConfig::with_zeta(0.0, 1e-8).is_err());
    assert!(RefineConfig::with_zeta(0.1, 0.1).is_err());
    assert!(RefineConfig::with_zeta(0.1, 0.0).is_err());
    let mut ok = cfg(1e-8);
    ok.max_outer = 0;
    assert!(matches!(ok.validate(), Err(Error::Config(_))));

    let derived = RefineConfig::new(0.1, 1e-3, &c).unwrap();
    let scale = 2.0 * 2f64.sqrt();
    assert!((derived.zeta - (1e-3 / scale).powi(4)).abs() <= 1e-30);
    assert_eq!(derived.epsilon_user, 1e-3);
    assert_eq!(derived.inner_precision(), 0.025f64.powi(2));
    assert!(derived.effective_zeta(2) >= derived.zeta);
}

#[test]
fn gamma_out_of_range_is_rejected() {
    assert!(matches!(refine_solve(&pair(), 1.5, &cfg(1e-8)), Err(Error::InvalidInput(_))));
    assert!(matches!(refine_solve(&pair(), f64::NAN, &cfg(1e-8)), Err(Error::InvalidInput(_))));
}

#[test]
fn trivial_gamma_returns_maximally_mixed() {
    let mut r = rng(1);
    let c = random_cost(5, 0.5, &mut r);
    let out = refine_solve(&c, -1.0, &cfg(1e-8)).unwrap();
    assert!(out.outer_iterations() <= 1);
    let eye = DenseSymmetric::identity(5).scaled(0.2);
    assert!(trace_distance(out.state.rho_tilde.matrix(), eye.matrix()) < 1e-9);
    assert!(out.state.gamma_tilde >= -1.0);
}

#[test]
fn unreachable_gamma_is_infeasible() {
    let res = refine_solve(&pair(), 0.9, &cfg(1e-8));
    assert!(matches!(res, Err(Error::Infeasible { .. })), "{res:?}");
}

#[test]
fn pair_coupling_meets_envelope() {
    let zeta = 1e-8;
    let gamma = 1.0 / 2f64.sqrt() - 2e-3;
    let out = refine_solve(&pair(), gamma, &cfg(zeta)).unwrap();
    check_envelope(&out, zeta);
    assert!(out.outer_iterations() <= 9);
    assert!(out.state.resid_l1() <= zeta);
    assert!(out.state.gamma_tilde >= gamma - zeta);
    assert!(out.state.rho_tilde.min_eigenvalue() >= -1e-10);
}

#[test]
fn pre_shift_eigenvalue_floor() {
    let zeta = 1e-10;
    let mut r = rng(7);
    for _ in 0..3 {
        let c = random_cost(6, 0.6, &mut r);
        let x = random_unit_diagonal(6, 2, &mut r);
        let gamma = achievable_gamma(&c, &x) - 0.02;
        let out = refine_solve(&c, gamma, &cfg(zeta)).unwrap();
        for rec in &out.records[1..] {
            let floor = -XI.powi(rec.k as i32 + 1) / 6.0;
            assert!(rec.lambda_min_hat.unwrap() >= floor, "round {}: {:e}", rec.k, rec.lambda_min_hat.unwrap());
        }
        assert!(out.state.rho_tilde.min_eigenvalue() >= -1e-10);
    }
}

#[test]
fn single_trivial_tuple_assembles_to_maximally_mixed() {
    let c = SdoInstance::CompleteGraphPos(4).cost().normalized();
    let t = RefinementTuple {
        eta: 1.0,
        y: [0.0, 0.0],
        q_diag: vec![1.0; 4],
        d_diag: vec![0.0; 4],
        delta: 0.0,
    };
    let rho = assemble_solution(&[t.clone()], &c).unwrap();
    assert!(trace_distance(rho.matrix(), DenseSymmetric::identity(4).scaled(0.25).matrix()) < 1e-14);
    let tr = trace_with_solution(&DenseSymmetric::identity(4), &[t], &c).unwrap();
    assert!((tr - 1.0).abs() < 1e-14);
}

#[test]
fn assembly_rejects_bad_input() {
    let c = pair().normalized();
    assert!(assemble_solution(&[], &c).is_err());
    let t = RefinementTuple {
        eta: 1.0,
        y: [0.0, 0.0],
        q_diag: vec![1.0; 3],
        d_diag: vec![0.0; 3],
        delta: 0.0,
    };
    assert!(matches!(assemble_solution(&[t.clone()], &c), Err(Error::DimensionMismatch { .. })));
    assert!(tuple_gibbs(&t, &c, &HuOptions::default()).is_err());
    let a = DenseSymmetric::identity(3);
    assert!(trace_with_solution(&a, &[t], &c).is_err());
}

/// Hand-rolled replay of the shift recursion, independent of the library's
/// weight bookkeeping.
fn replay(tuples: &[RefinementTuple], c: &SparseSymmetric) -> nalgebra::DMatrix<f64> {
    let n = c.dim();
    let nf = n as f64;
    let opts = HuOptions::default();
    let mut acc = nalgebra::DMatrix::<f64>::zeros(n, n);
    for t in tuples {
        let rho = tuple_gibbs(t, c, &opts).unwrap();
        let mut term = rho.matrix().clone();
        for i in 0..n {
            term[(i, i)] *= t.q_diag[i];
        }
        acc += term / t.eta;
        for i in 0..n {
            acc[(i, i)] += t.delta;
        }
        acc /= 1.0 + nf * t.delta;
    }
    acc
}

fn solved(seed: u64, n: usize, zeta: f64) -> (CostMatrix, Refinement) {
    let mut r = rng(seed);
    let c = random_cost(n, 0.6, &mut r);
    let x = random_unit_diagonal(n, 2, &mut r);
    let gamma = achievable_gamma(&c, &x) - 0.02;
    let out = refine_solve(&c, gamma, &cfg(zeta)).unwrap();
    (c, out)
}

#[test]
fn assembly_matches_incremental_state() {
    let mut longest = 0;
    for seed in 0..4 {
        let (c, out) = solved(seed, 5, 1e-9);
        longest = longest.max(out.tuples.len());
        let ct = c.normalized();
        let assembled = assemble_solution(&out.tuples, &ct).unwrap();
        assert!(trace_distance(assembled.matrix(), out.state.rho_tilde.matrix()) <= 1e-8);
        assert!(trace_distance(&replay(&out.tuples, &ct), out.state.rho_tilde.matrix()) <= 1e-8);
        let total_shift: f64 = out.tuples.iter().map(|t| 5.0 * t.delta).sum();
        let tr = assembled.trace();
        assert!(tr >= 1.0 - out.state.resid_l1() - 1e-12 && tr <= 1.0 + total_shift);
    }
    assert!(longest >= 2, "no instance needed a refining round");
}

#[test]
fn fold_shifts_preserves_solution() {
    let (c, out) = solved(11, 6, 1e-9);
    let ct = c.normalized();
    let folded = fold_shifts(&out.tuples);
    assert!(folded.iter().all(|t| t.delta == 0.0));
    let had_shift = out.tuples.iter().any(|t| t.delta > 0.0);
    assert_eq!(folded.len(), out.tuples.len() + usize::from(had_shift));
    let (w, _) = solution_weights(&out.tuples);
    for (t, wk) in folded.iter().zip(&w) {
        assert!((1.0 / t.eta - wk).abs() <= 1e-15 * wk.abs().max(1.0));
    }
    let (_, identity) = solution_weights(&folded);
    assert_eq!(identity, 0.0);
    assert!(trace_distance(&replay(&folded, &ct), &replay(&out.tuples, &ct)) <= 1e-12);
}

#[test]
fn trace_evaluation_matches_reported_values() {
    let (c, out) = solved(3, 6, 1e-9);
    let ct = c.normalized();
    let gamma = trace_with_solution(&ct, &out.tuples, &ct).unwrap();
    assert!((gamma - out.state.gamma_tilde).abs() <= 1e-8);
    let tr = trace_with_solution(&DenseSymmetric::identity(6), &out.tuples, &ct).unwrap();
    assert!((tr - out.state.rho_tilde.trace()).abs() <= 1e-8);
}

#[test]
fn tuple_hamiltonians_respect_the_norm_bound() {
    let (_, out) = solved(5, 6, 1e-9);
    let p = cfg(1e-9).inner_precision();
    for t in &out.tuples {
        assert!(t.eta > 0.0 && t.delta >= 0.0);
        let bound = y_norm_bound(t.d_diag.len(), p);
        assert!(t.y[0].abs() + t.y[1].abs() <= bound + 1e-9);
    }
}

#[test]
fn exhausted_outer_budget_is_nonconvergence() {
    let (c, out) = (0..8)
        .map(|seed| solved(seed, 5, 1e-9))
        .find(|(_, o)| o.outer_iterations() >= 2)
        .expect("an instance with at least two refining rounds");
    let mut cf = cfg(1e-9);
    cf.max_outer = 1;
    let res = refine_solve(&c, out.records[0].gamma_tilde + out.records[0].objective_residual, &cf);
    assert!(matches!(res, Err(Error::NonConvergence(1))), "{res:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn prop_random_instances_converge_within_envelope(seed in 0u64..1000, n in 3usize..7) {
        let zeta = 1e-9;
        let (c, out) = solved(seed, n, zeta);
        check_envelope(&out, zeta);
        prop_assert!(out.state.resid_l1() <= zeta);
        prop_assert!(out.state.rho_tilde.min_eigenvalue() >= -1e-10);

        let ct = c.normalized();
        let mut r = rng(seed ^ 0xa5);
        for _ in 0..5 {
            let a = random_sparse(n, 0.4, &mut r);
            let streamed = trace_with_solution(&a, &out.tuples, &ct).unwrap();
            let assembled = assemble_solution(&out.tuples, &ct).unwrap();
            let direct = dense(&a).dot(assembled.matrix());
            prop_assert!((streamed - direct).abs() <= 1e-8);
        }
    }
}
