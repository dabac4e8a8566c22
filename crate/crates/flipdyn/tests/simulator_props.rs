mod common;

use common::scalar_bench;
use flipdyn::ndim_solver::MatrixScenario;
use flipdyn::scalar_solver::{self, ScalarScenario, ScalarSolution, ScalarStageParams};
use flipdyn::calibration::{dual_bisection, CalibrationOptions};
use flipdyn::simulator::{
    deviation_test, monte_carlo, rollout, scalar_expected_cost, Deviation, Player, RngFamily,
    SimulationOptions,
};
use flipdyn::FlipState;
use nalgebra::DVector;
use proptest::prelude::*;

fn mixed_scalar() -> (MatrixScenario, ScalarSolution) {
    let sc = scalar_bench(0.85, 0.39, 1.56);
    let sol = scalar_solver::solve(&sc).unwrap();
    assert!(sol.all_mixed());
    (MatrixScenario::from(&sc), sol)
}

fn opts(n_runs: usize, master_seed: u64) -> SimulationOptions {
    SimulationOptions { n_runs, master_seed, rng: RngFamily::ChaCha8 }
}

/// Case form of the flip update: simultaneous moves cancel, a lone move wins.
fn flip_by_cases(alpha: u8, pi0: u8, pi1: u8) -> u8 {
    match (pi0, pi1) {
        (1, 1) | (0, 0) => alpha,
        (1, 0) => 0,
        _ => 1,
    }
}

#[test]
fn flip_update_truth_table() {
    for alpha in FlipState::ALL {
        for pi0 in [false, true] {
            for pi1 in [false, true] {
                let want = flip_by_cases(alpha.index() as u8, pi0 as u8, pi1 as u8);
                assert_eq!(alpha.transition(pi0, pi1).index() as u8, want);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rollout_structure(seed in any::<u64>(), run in 0u64..1000, x1 in 0.1f64..3.0, alpha1 in 0usize..2) {
        let (sc, sol) = mixed_scalar();
        let alpha1 = FlipState::from_index(alpha1).unwrap();
        let x1 = DVector::from_vec(vec![x1]);
        let r = rollout(&sc, &sol, &x1, alpha1, None, RngFamily::ChaCha12, seed, run).unwrap();
        let total = r.stage_costs.iter().sum::<f64>() + r.terminal_cost;
        prop_assert!((r.total_cost - total).abs() <= 1e-12);
        prop_assert_eq!(r.flip_states[0], alpha1);
        for k in 0..sc.horizon {
            let next = r.flip_states[k + 1];
            prop_assert_eq!(next, r.flip_states[k].transition(r.defender_actions[k], r.adversary_actions[k]));
            // exactly one player's input enters the dynamics
            let x = &r.states[k];
            let drift = &sc.e[k] * x;
            let want = match next {
                FlipState::Defender => drift + &sc.b[k] * &r.defender_controls[k],
                FlipState::Adversary => drift + &sc.h[k] * &r.adversary_controls[k],
            };
            prop_assert_eq!(&r.states[k + 1], &want);
        }
    }
}

#[test]
fn zero_cost_scenario_costs_nothing() {
    let p = ScalarStageParams { e: 0.9, b: 0.1, h: 0.1, g0: 0.0, g1: 0.0, d: 0.0, a: 0.0, m: 1.0, n: 1.0 };
    let s = ScalarScenario::time_invariant(10, p, 0.0, 0.0);
    let sol = scalar_solver::solve(&s).unwrap();
    let sc = MatrixScenario::from(&s);
    let x1 = DVector::from_vec(vec![1.0]);
    let summary = monte_carlo(&sc, &sol, &x1, FlipState::Defender, &opts(200, 1)).unwrap();
    assert_eq!(summary.mean_cost, 0.0);
    assert_eq!(summary.predicted_value, 0.0);
}

#[test]
fn monte_carlo_agrees_with_values_in_both_flip_states() {
    let (sc, sol) = mixed_scalar();
    let x1 = DVector::from_vec(vec![1.0]);
    for alpha1 in FlipState::ALL {
        let s = monte_carlo(&sc, &sol, &x1, alpha1, &opts(10_000, 2024)).unwrap();
        assert_eq!(s.predicted_value, sol.value(1, alpha1));
        assert!(s.z_score.abs() < 4.0, "alpha1 = {alpha1}: {s:?}");
    }
}

#[test]
fn unilateral_deviations_do_not_pay() {
    let (sc, sol) = mixed_scalar();
    let x1 = DVector::from_vec(vec![1.0]);
    let o = opts(10_000, 7);
    let def = Deviation { player: Player::Defender, probability: 1.0 };
    let r = deviation_test(&sc, &sol, &x1, FlipState::Defender, def, &o).unwrap();
    assert!(r.shift >= -2.0 * r.std_error, "{r:?}");
    let adv = Deviation { player: Player::Adversary, probability: 0.0 };
    let r = deviation_test(&sc, &sol, &x1, FlipState::Defender, adv, &o).unwrap();
    assert!(r.shift <= 2.0 * r.std_error, "{r:?}");
}

#[test]
fn runs_are_reproducible_per_index() {
    let (sc, sol) = mixed_scalar();
    let x1 = DVector::from_vec(vec![1.0]);
    let a = rollout(&sc, &sol, &x1, FlipState::Defender, None, RngFamily::ChaCha20, 11, 37).unwrap();
    let b = rollout(&sc, &sol, &x1, FlipState::Defender, None, RngFamily::ChaCha20, 11, 37).unwrap();
    assert_eq!(a, b);
    let c = rollout(&sc, &sol, &x1, FlipState::Defender, None, RngFamily::ChaCha20, 11, 38).unwrap();
    assert_ne!(a.defender_actions.iter().chain(&a.adversary_actions).collect::<Vec<_>>(),
               c.defender_actions.iter().chain(&c.adversary_actions).collect::<Vec<_>>());
}

prop_compose! {
    fn all_mixed_scalar()(
        horizon in 2usize..=12,
        e in 0.7f64..1.05,
        dt in 0.05f64..0.3,
        d in 0.1f64..0.8,
        a in 0.1f64..0.8,
        m in 0.2f64..1.5,
    ) -> Option<(ScalarScenario, ScalarSolution)> {
        let p = ScalarStageParams { e, b: dt, h: dt, g0: 1.0, g1: 1.0, d, a, m, n: 1.0 };
        let base = ScalarScenario::time_invariant(horizon, p, 1.0, 1.0);
        let r = dual_bisection(&base, &CalibrationOptions::default()).ok()?;
        let sc = base.with_control_cost(r.n_star).with_state_cost(r.g1_star?);
        let sol = scalar_solver::solve(&sc).ok()?;
        sol.all_mixed().then_some((sc, sol))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_deviations_leave_exact_expected_cost_unchanged(
        game in all_mixed_scalar(),
        probability in 0.0f64..=1.0,
        adversary in any::<bool>(),
    ) {
        prop_assume!(game.is_some());
        let (sc, sol) = game.unwrap();
        let player = if adversary { Player::Adversary } else { Player::Defender };
        let dev = scalar_expected_cost(&sc, &sol, Some(Deviation { player, probability })).unwrap();
        // rounding grows with the largest continuation term near the second-order limit
        let largest = sol.steps.iter().map(|s| s.check_p.abs()).fold(0.0, f64::max);
        for (v, p) in dev.iter().zip([sol.p0[0], sol.p1[0]]) {
            let tol = 1e-9 * p.abs().max(1.0) + 1e-14 * largest;
            prop_assert!((v - p).abs() <= tol, "{} vs {}", v, p);
        }
    }
}
