//! Monte-Carlo rollouts of the coupled flip and state dynamics under a solved
//! game.
//!
//! Each run draws its randomness from a ChaCha stream keyed by the master seed
//! with the stream index set to the run index, so runs are independent of
//! scheduling. Two uniforms are drawn per step whatever the strategies are,
//! which keeps paired runs aligned in `deviation_test`.
//!
//! Control costs are charged to the owner of the current flip state while the
//! applied input follows the next flip state, matching the recursion the
//! solvers optimize.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha12Rng, ChaCha20Rng, ChaCha8Rng};
use rayon::prelude::*;

use crate::error::{FlipDynError, Result};
use crate::matrix_game::FlipState;
use crate::ndim_solver::{MatrixScenario, MatrixSolution};
use crate::scalar_solver::{ScalarScenario, ScalarSolution};

/// Policies and values of a solved game, as needed by the rollouts.
pub trait SolvedGame: Sync {
    fn horizon(&self) -> usize;

    /// (K_k, W_k).
    fn gains(&self, k: usize) -> (DMatrix<f64>, DMatrix<f64>);

    /// Takeover probabilities (defender, adversary) at (k, α, x).
    fn takeover_probabilities(&self, k: usize, alpha: FlipState, x: &DVector<f64>) -> Result<[f64; 2]>;

    /// Saddle-point value at (k, α, x) for k = 1..=L+1.
    fn value(&self, k: usize, alpha: FlipState, x: &DVector<f64>) -> f64;
}

impl SolvedGame for ScalarSolution {
    fn horizon(&self) -> usize {
        ScalarSolution::horizon(self)
    }

    fn gains(&self, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = self.step(k);
        (DMatrix::from_element(1, 1, s.k_gain), DMatrix::from_element(1, 1, s.w_gain))
    }

    fn takeover_probabilities(&self, k: usize, alpha: FlipState, _x: &DVector<f64>) -> Result<[f64; 2]> {
        let s = self.step(k);
        Ok([s.beta[alpha.index()], s.gamma[alpha.index()]])
    }

    fn value(&self, k: usize, alpha: FlipState, x: &DVector<f64>) -> f64 {
        ScalarSolution::value(self, k, alpha) * x.dot(x)
    }
}

impl SolvedGame for MatrixSolution {
    fn horizon(&self) -> usize {
        MatrixSolution::horizon(self)
    }

    fn gains(&self, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = self.step(k);
        (s.k_gain.clone(), s.w_gain.clone())
    }

    /// At x = 0 every cost vanishes and both players stay idle.
    fn takeover_probabilities(&self, k: usize, alpha: FlipState, x: &DVector<f64>) -> Result<[f64; 2]> {
        if x.iter().all(|v| *v == 0.0) {
            return Ok([0.0, 0.0]);
        }
        let s = self.strategy_at(k, alpha, x)?;
        Ok([s.defender_takeover(), s.adversary_takeover()])
    }

    fn value(&self, k: usize, alpha: FlipState, x: &DVector<f64>) -> f64 {
        x.dot(&(self.value_matrix(k, alpha) * x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RngFamily {
    #[default]
    ChaCha8,
    ChaCha12,
    ChaCha20,
}

impl RngFamily {
    pub fn name(self) -> &'static str {
        match self {
            RngFamily::ChaCha8 => "chacha8",
            RngFamily::ChaCha12 => "chacha12",
            RngFamily::ChaCha20 => "chacha20",
        }
    }
}

impl fmt::Display for RngFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RngFamily {
    type Err = FlipDynError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chacha8" => Ok(RngFamily::ChaCha8),
            "chacha12" => Ok(RngFamily::ChaCha12),
            "chacha20" => Ok(RngFamily::ChaCha20),
            other => Err(FlipDynError::InvalidInput(format!("unknown rng family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    Defender,
    Adversary,
}

/// One player replaced by a constant takeover probability at every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub player: Player,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    /// x_1..x_{L+1}.
    pub states: Vec<DVector<f64>>,
    /// α_1..α_{L+1}.
    pub flip_states: Vec<FlipState>,
    pub defender_actions: Vec<bool>,
    pub adversary_actions: Vec<bool>,
    /// Takeover probabilities the actions were sampled from.
    pub defender_probabilities: Vec<f64>,
    pub adversary_probabilities: Vec<f64>,
    pub defender_controls: Vec<DVector<f64>>,
    pub adversary_controls: Vec<DVector<f64>>,
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub total_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSummary {
    pub mean_cost: f64,
    pub std_error: f64,
    pub runs: usize,
    pub predicted_value: f64,
    /// NaN when std_error is 0.
    pub z_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationReport {
    pub baseline_mean: f64,
    pub deviated_mean: f64,
    /// Mean of the paired differences (deviated − baseline).
    pub shift: f64,
    pub std_error: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub n_runs: usize,
    pub master_seed: u64,
    pub rng: RngFamily,
}

fn quad(q: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(q * x))
}

fn check_inputs(scenario: &MatrixScenario, game: &impl SolvedGame, x1: &DVector<f64>) -> Result<()> {
    if game.horizon() != scenario.horizon {
        return Err(FlipDynError::InvalidInput(format!(
            "solution horizon {} differs from scenario horizon {}",
            game.horizon(),
            scenario.horizon
        )));
    }
    if x1.len() != scenario.dim() {
        return Err(FlipDynError::InvalidInput(format!(
            "x1 has dimension {}, expected {}",
            x1.len(),
            scenario.dim()
        )));
    }
    if x1.iter().all(|v| *v == 0.0) {
        return Err(FlipDynError::InvalidInput("x1 must be nonzero".into()));
    }
    Ok(())
}

/// Single trajectory driven by `rng`.
pub fn rollout_with_rng<R: Rng>(
    scenario: &MatrixScenario,
    game: &impl SolvedGame,
    x1: &DVector<f64>,
    alpha1: FlipState,
    deviation: Option<Deviation>,
    rng: &mut R,
) -> Result<RolloutRecord> {
    check_inputs(scenario, game, x1)?;
    if let Some(dev) = deviation {
        if !(0.0..=1.0).contains(&dev.probability) {
            return Err(FlipDynError::InvalidInput(format!(
                "deviation probability {} outside [0, 1]",
                dev.probability
            )));
        }
    }
    let l = scenario.horizon;
    let mut rec = RolloutRecord {
        states: Vec::with_capacity(l + 1),
        flip_states: Vec::with_capacity(l + 1),
        defender_actions: Vec::with_capacity(l),
        adversary_actions: Vec::with_capacity(l),
        defender_probabilities: Vec::with_capacity(l),
        adversary_probabilities: Vec::with_capacity(l),
        defender_controls: Vec::with_capacity(l),
        adversary_controls: Vec::with_capacity(l),
        stage_costs: Vec::with_capacity(l),
        terminal_cost: 0.0,
        total_cost: 0.0,
    };
    let mut x = x1.clone();
    let mut alpha = alpha1;
    for k in 1..=l {
        let i = k - 1;
        let [mut p_def, mut p_adv] = game.takeover_probabilities(k, alpha, &x)?;
        match deviation {
            Some(Deviation { player: Player::Defender, probability }) => p_def = probability,
            Some(Deviation { player: Player::Adversary, probability }) => p_adv = probability,
            None => {}
        }
        let (r0, r1): (f64, f64) = (rng.random(), rng.random());
        let pi0 = r0 < p_def;
        let pi1 = r1 < p_adv;
        let next_alpha = alpha.transition(pi0, pi1);

        let (kg, wg) = game.gains(k);
        let u = &kg * &x;
        let w = &wg * &x;
        let xx = x.dot(&x);
        let mut cost = match alpha {
            FlipState::Defender => quad(&scenario.g0[i], &x) + quad(&scenario.m[i], &u),
            FlipState::Adversary => quad(&scenario.g1[i], &x) - quad(&scenario.n[i], &w),
        };
        if pi0 {
            cost += scenario.d[i] * xx;
        }
        if pi1 {
            cost -= scenario.a[i] * xx;
        }
        let x_next = match next_alpha {
            FlipState::Defender => &scenario.e[i] * &x + &scenario.b[i] * &u,
            FlipState::Adversary => &scenario.e[i] * &x + &scenario.h[i] * &w,
        };

        rec.states.push(x);
        rec.flip_states.push(alpha);
        rec.defender_actions.push(pi0);
        rec.adversary_actions.push(pi1);
        rec.defender_probabilities.push(p_def);
        rec.adversary_probabilities.push(p_adv);
        rec.defender_controls.push(u);
        rec.adversary_controls.push(w);
        rec.stage_costs.push(cost);
        x = x_next;
        alpha = next_alpha;
    }
    rec.terminal_cost = match alpha {
        FlipState::Defender => quad(&scenario.g0_terminal, &x),
        FlipState::Adversary => quad(&scenario.g1_terminal, &x),
    };
    rec.states.push(x);
    rec.flip_states.push(alpha);
    rec.total_cost = rec.stage_costs.iter().sum::<f64>() + rec.terminal_cost;
    Ok(rec)
}

fn stream_rng<R: SeedableRng + StreamRng>(master_seed: u64, run: u64) -> R {
    let mut rng = R::seed_from_u64(master_seed);
    rng.select_stream(run);
    rng
}

trait StreamRng {
    fn select_stream(&mut self, stream: u64);
}

macro_rules! stream_rng_impl {
    ($($t:ty),*) => {$(
        impl StreamRng for $t {
            fn select_stream(&mut self, stream: u64) {
                self.set_stream(stream);
            }
        }
    )*};
}
stream_rng_impl!(ChaCha8Rng, ChaCha12Rng, ChaCha20Rng);

/// Trajectory for run index `run` under `master_seed`.
pub fn rollout(
    scenario: &MatrixScenario,
    game: &impl SolvedGame,
    x1: &DVector<f64>,
    alpha1: FlipState,
    deviation: Option<Deviation>,
    rng: RngFamily,
    master_seed: u64,
    run: u64,
) -> Result<RolloutRecord> {
    match rng {
        RngFamily::ChaCha8 => rollout_with_rng(
            scenario,
            game,
            x1,
            alpha1,
            deviation,
            &mut stream_rng::<ChaCha8Rng>(master_seed, run),
        ),
        RngFamily::ChaCha12 => rollout_with_rng(
            scenario,
            game,
            x1,
            alpha1,
            deviation,
            &mut stream_rng::<ChaCha12Rng>(master_seed, run),
        ),
        RngFamily::ChaCha20 => rollout_with_rng(
            scenario,
            game,
            x1,
            alpha1,
            deviation,
            &mut stream_rng::<ChaCha20Rng>(master_seed, run),
        ),
    }
}

/// All rollouts, in run order.
pub fn rollouts(
    scenario: &MatrixScenario,
    game: &impl SolvedGame,
    x1: &DVector<f64>,
    alpha1: FlipState,
    deviation: Option<Deviation>,
    options: &SimulationOptions,
) -> Result<Vec<RolloutRecord>> {
    if options.n_runs == 0 {
        return Err(FlipDynError::InvalidInput("n_runs must be at least 1".into()));
    }
    (0..options.n_runs as u64)
        .into_par_iter()
        .map(|run| rollout(scenario, game, x1, alpha1, deviation, options.rng, options.master_seed, run))
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Mean and standard error of the mean; std_error is 0 for one sample.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mut total = Kahan::default();
    values.iter().for_each(|&v| total.add(v));
    let mean = total.sum / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let mut sq = Kahan::default();
    values.iter().for_each(|&v| sq.add((v - mean) * (v - mean)));
    let var = sq.sum / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn summarize(costs: &[f64], predicted_value: f64) -> MonteCarloSummary {
    let (mean_cost, std_error) = mean_and_std_error(costs);
    let z_score = if std_error > 0.0 { (mean_cost - predicted_value) / std_error } else { f64::NAN };
    MonteCarloSummary { mean_cost, std_error, runs: costs.len(), predicted_value, z_score }
}

pub fn monte_carlo(
    scenario: &MatrixScenario,
    game: &impl SolvedGame,
    x1: &DVector<f64>,
    alpha1: FlipState,
    options: &SimulationOptions,
) -> Result<MonteCarloSummary> {
    let costs: Vec<f64> = rollouts(scenario, game, x1, alpha1, None, options)?
        .into_iter()
        .map(|r| r.total_cost)
        .collect();
    Ok(summarize(&costs, game.value(1, alpha1, x1)))
}

/// Paired comparison of equilibrium play against a constant deviation, using
/// the same random streams for both arms.
pub fn deviation_test(
    scenario: &MatrixScenario,
    game: &impl SolvedGame,
    x1: &DVector<f64>,
    alpha1: FlipState,
    deviation: Deviation,
    options: &SimulationOptions,
) -> Result<DeviationReport> {
    let base = rollouts(scenario, game, x1, alpha1, None, options)?;
    let dev = rollouts(scenario, game, x1, alpha1, Some(deviation), options)?;
    let diffs: Vec<f64> = base.iter().zip(&dev).map(|(b, d)| d.total_cost - b.total_cost).collect();
    let base_costs: Vec<f64> = base.iter().map(|r| r.total_cost).collect();
    let dev_costs: Vec<f64> = dev.iter().map(|r| r.total_cost).collect();
    let (shift, std_error) = mean_and_std_error(&diffs);
    Ok(DeviationReport {
        baseline_mean: mean_and_std_error(&base_costs).0,
        deviated_mean: mean_and_std_error(&dev_costs).0,
        shift,
        std_error,
        runs: diffs.len(),
    })
}

/// Exact expected total cost of a scalar game per unit x₁², for each initial
/// flip state, under the solution's gains and takeover probabilities with an
/// optional constant deviation. Computed by backward expectation, so it is
/// free of sampling error.
pub fn scalar_expected_cost(
    scenario: &ScalarScenario,
    solution: &ScalarSolution,
    deviation: Option<Deviation>,
) -> Result<[f64; 2]> {
    if solution.horizon() != scenario.horizon {
        return Err(FlipDynError::InvalidInput(format!(
            "solution horizon {} differs from scenario horizon {}",
            solution.horizon(),
            scenario.horizon
        )));
    }
    let mut next = [scenario.g0_terminal, scenario.g1_terminal];
    for k in (1..=scenario.horizon).rev() {
        let i = k - 1;
        let s = solution.step(k);
        let bc = scenario.e[i] + scenario.b[i] * s.k_gain;
        let wc = scenario.e[i] + scenario.h[i] * s.w_gain;
        let carried = [next[0] * bc * bc, next[1] * wc * wc];
        let mut here = [0.0; 2];
        for alpha in FlipState::ALL {
            let j = alpha.index();
            let (mut p_def, mut p_adv) = (s.beta[j], s.gamma[j]);
            match deviation {
                Some(Deviation { player: Player::Defender, probability }) => p_def = probability,
                Some(Deviation { player: Player::Adversary, probability }) => p_adv = probability,
                None => {}
            }
            let mut v = match alpha {
                FlipState::Defender => scenario.g0[i] + s.k_gain * s.k_gain * scenario.m[i],
                FlipState::Adversary => scenario.g1[i] - s.w_gain * s.w_gain * scenario.n[i],
            };
            v += p_def * scenario.d[i] - p_adv * scenario.a[i];
            for (pi0, w0) in [(false, 1.0 - p_def), (true, p_def)] {
                for (pi1, w1) in [(false, 1.0 - p_adv), (true, p_adv)] {
                    v += w0 * w1 * carried[alpha.transition(pi0, pi1).index()];
                }
            }
            here[j] = v;
        }
        next = here;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_solver::{self, ScalarStageParams};

    fn scalar_game() -> (MatrixScenario, ScalarSolution) {
        let p = ScalarStageParams { e: 0.85, b: 0.1, h: 0.1, g0: 1.0, g1: 1.56, d: 0.45, a: 0.25, m: 0.65, n: 0.39 };
        let s = ScalarScenario::time_invariant(20, p, 1.0, 1.56);
        let sol = scalar_solver::solve(&s).unwrap();
        (MatrixScenario::from(&s), sol)
    }

    fn opts(n_runs: usize, master_seed: u64) -> SimulationOptions {
        SimulationOptions { n_runs, master_seed, rng: RngFamily::ChaCha8 }
    }

    #[test]
    fn expected_cost_without_deviation_is_the_value() {
        let p = ScalarStageParams { e: 0.85, b: 0.1, h: 0.1, g0: 1.0, g1: 1.56, d: 0.45, a: 0.25, m: 0.65, n: 0.39 };
        let s = ScalarScenario::time_invariant(20, p, 1.0, 1.56);
        let sol = scalar_solver::solve(&s).unwrap();
        let [v0, v1] = scalar_expected_cost(&s, &sol, None).unwrap();
        assert!((v0 - sol.p0[0]).abs() <= 1e-12 * sol.p0[0].abs());
        assert!((v1 - sol.p1[0]).abs() <= 1e-12 * sol.p1[0].abs());
    }

    #[test]
    fn total_is_stage_sum_plus_terminal() {
        let (sc, sol) = scalar_game();
        let x1 = DVector::from_vec(vec![1.0]);
        for run in 0..20 {
            let r = rollout(&sc, &sol, &x1, FlipState::Defender, None, RngFamily::ChaCha8, 9, run).unwrap();
            let want = r.stage_costs.iter().sum::<f64>() + r.terminal_cost;
            assert!((r.total_cost - want).abs() <= 1e-12);
            assert_eq!(r.states.len(), 21);
            assert_eq!(r.flip_states.len(), 21);
            for k in 0..20 {
                let next = r.flip_states[k].transition(r.defender_actions[k], r.adversary_actions[k]);
                assert_eq!(next, r.flip_states[k + 1]);
            }
        }
    }

    #[test]
    fn idle_players_follow_defender_loop() {
        let (sc, sol) = scalar_game();
        let x1 = DVector::from_vec(vec![1.3]);
        let idle = Some(Deviation { player: Player::Adversary, probability: 0.0 });
        let r = rollout(&sc, &sol, &x1, FlipState::Defender, idle, RngFamily::ChaCha8, 1, 0).unwrap();
        // from α = 0 only an adversary takeover changes the flip state
        assert!(r.flip_states.iter().all(|a| *a == FlipState::Defender));
        let mut x = 1.3;
        for (k, s) in r.states.iter().enumerate() {
            assert!((s[0] - x).abs() < 1e-12);
            if k < 20 {
                x *= 0.85 + 0.1 * sol.steps[k].k_gain;
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (sc, sol) = scalar_game();
        let x1 = DVector::from_vec(vec![1.0]);
        let a = monte_carlo(&sc, &sol, &x1, FlipState::Defender, &opts(500, 42)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| monte_carlo(&sc, &sol, &x1, FlipState::Defender, &opts(500, 42)).unwrap());
        assert_eq!(a.mean_cost.to_bits(), b.mean_cost.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn single_run_has_no_z_score() {
        let (sc, sol) = scalar_game();
        let x1 = DVector::from_vec(vec![1.0]);
        let s = monte_carlo(&sc, &sol, &x1, FlipState::Defender, &opts(1, 3)).unwrap();
        assert_eq!(s.runs, 1);
        assert_eq!(s.std_error, 0.0);
        assert!(s.z_score.is_nan());
    }

    #[test]
    fn zero_deviation_from_equilibrium_is_exactly_zero() {
        // one step, so the equilibrium strategy is itself a constant
        let x1 = DVector::from_vec(vec![1.0]);
        let p = ScalarStageParams { e: 0.85, b: 0.1, h: 0.1, g0: 1.0, g1: 1.56, d: 0.45, a: 0.25, m: 0.65, n: 0.39 };
        let s1 = ScalarScenario::time_invariant(1, p, 1.0, 1.56);
        let sol1 = scalar_solver::solve(&s1).unwrap();
        let sc1 = MatrixScenario::from(&s1);
        let dev = Deviation { player: Player::Defender, probability: sol1.step(1).beta[0] };
        let r = deviation_test(&sc1, &sol1, &x1, FlipState::Defender, dev, &opts(200, 5)).unwrap();
        assert_eq!(r.shift, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (sc, sol) = scalar_game();
        let zero = DVector::from_vec(vec![0.0]);
        assert!(rollout(&sc, &sol, &zero, FlipState::Defender, None, RngFamily::ChaCha8, 0, 0).is_err());
        let x1 = DVector::from_vec(vec![1.0]);
        let bad = Some(Deviation { player: Player::Adversary, probability: 1.5 });
        assert!(rollout(&sc, &sol, &x1, FlipState::Defender, bad, RngFamily::ChaCha8, 0, 0).is_err());
        assert!(monte_carlo(&sc, &sol, &x1, FlipState::Defender, &opts(0, 0)).is_err());
        assert_eq!("chacha20".parse::<RngFamily>().unwrap(), RngFamily::ChaCha20);
        assert!("mt".parse::<RngFamily>().is_err());
    }

    #[test]
    fn kahan_statistics() {
        let (m, se) = mean_and_std_error(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((se - sd / 2.0).abs() < 1e-15);
    }
}
