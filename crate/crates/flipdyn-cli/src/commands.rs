use std::path::{Path, PathBuf};

use flipdyn::calibration::{
    dual_bisection, min_adversary_control_cost, min_adversary_state_cost, per_step_control_costs,
    Calibratable,
    CalibrationOptions, CalibrationResult, Configuration, NdimProblem,
};
use flipdyn::lq_control::sym_eigenvalues;
use flipdyn::ndim_solver::{self, MatrixScenario, MatrixSolution};
use flipdyn::scalar_solver::{self, ScalarScenario, ScalarSolution};
use flipdyn::simulator::{rollouts, summarize, SimulationOptions, SolvedGame};
use flipdyn::FlipState;
use nalgebra::DVector;

use crate::config::{Scenario, ScenarioConfig};
use crate::error::CliError;
use crate::output::{float, opt_float, write_csv};
use crate::Target;

/// Rollouts averaged for strategy_trace.csv in `reproduce`.
pub const TRACE_RUNS: usize = 100;

#[derive(Debug, Clone)]
pub struct Context {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl Context {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

/// A solved scenario of either kind.
#[derive(Debug, Clone)]
pub enum Solved {
    Scalar(ScalarScenario, ScalarSolution),
    Ndim(MatrixScenario, MatrixSolution),
}

pub fn solve_config(cfg: &ScenarioConfig) -> Result<Solved, CliError> {
    solve_scenario(cfg, cfg.scenario()?)
}

fn solve_scenario(cfg: &ScenarioConfig, scenario: Scenario) -> Result<Solved, CliError> {
    Ok(match scenario {
        Scenario::Scalar(sc) => {
            let sol = scalar_solver::solve(&sc)?;
            Solved::Scalar(sc, sol)
        }
        Scenario::Ndim(sc) => {
            let sol = ndim_solver::solve_with(&sc, &cfg.ndim_options())?;
            Solved::Ndim(sc, sol)
        }
    })
}

/// The config's scenario with N (and optionally the G¹ scale) replaced.
pub fn calibrated_scenario(cfg: &ScenarioConfig, n: f64, g1: Option<f64>) -> Result<Scenario, CliError> {
    Ok(match cfg.scenario()? {
        Scenario::Scalar(sc) => {
            let sc = sc.with_control_cost(n);
            Scenario::Scalar(g1.map_or(sc.clone(), |g| sc.with_state_cost(g)))
        }
        Scenario::Ndim(sc) => {
            let sc = sc.with_control_cost(n);
            Scenario::Ndim(g1.map_or(sc.clone(), |g| sc.with_state_cost(g)))
        }
    })
}

fn run_target<P: Calibratable>(
    problem: &P,
    target: Target,
    opts: &CalibrationOptions,
) -> Result<Vec<CalibrationResult>, CliError> {
    Ok(match target {
        Target::N => vec![
            min_adversary_control_cost(problem, Configuration::Baseline, opts)?,
            min_adversary_control_cost(problem, Configuration::MixedEnforced, opts)?,
        ],
        Target::G1 => vec![min_adversary_state_cost(problem, opts)?],
        Target::Dual => vec![dual_bisection(problem, opts)?],
    })
}

pub fn calibrate_config(cfg: &ScenarioConfig, target: Target) -> Result<Vec<CalibrationResult>, CliError> {
    let opts = cfg.calibration_options();
    match cfg.scenario()? {
        Scenario::Scalar(sc) => run_target(&sc, target, &opts),
        Scenario::Ndim(scenario) => {
            run_target(&NdimProblem { scenario, options: cfg.ndim_options() }, target, &opts)
        }
    }
}

pub fn write_values(path: &Path, solved: &Solved) -> Result<(), CliError> {
    let regimes = |r: &[flipdyn::StageRegime; 2]| [r[0].label().to_string(), r[1].label().to_string()];
    let na = || "NA".to_string();
    match solved {
        Solved::Scalar(_, sol) => {
            let rows = (1..=sol.horizon() + 1).map(|k| {
                let mut row = vec![k.to_string(), float(sol.p0[k - 1]), float(sol.p1[k - 1])];
                match sol.steps.get(k - 1) {
                    Some(s) => {
                        row.push(opt_float(s.eta));
                        row.extend(regimes(&s.regime));
                    }
                    None => row.extend([na(), na(), na()]),
                }
                row
            });
            write_csv(path, &["k", "p0", "p1", "eta", "regime_alpha0", "regime_alpha1"], rows)
        }
        Solved::Ndim(sc, sol) => {
            let n = sc.dim();
            let mut header = vec!["k".to_string()];
            for which in ["p0", "p1"] {
                header.extend((1..=n).map(|i| format!("{which}_lambda{i}")));
            }
            header.extend(["eta_lower", "eta_upper", "regime_alpha0", "regime_alpha1"].map(String::from));
            let rows = (1..=sol.horizon() + 1).map(|k| {
                let mut row = vec![k.to_string()];
                for p in [&sol.p0[k - 1], &sol.p1[k - 1]] {
                    row.extend(sym_eigenvalues(p).iter().rev().map(|v| float(*v)));
                }
                match sol.steps.get(k - 1) {
                    Some(s) => {
                        row.push(opt_float(s.eta_lower));
                        row.push(opt_float(s.eta_upper));
                        row.extend(regimes(&s.regime));
                    }
                    None => row.extend([na(), na(), na(), na()]),
                }
                row
            });
            write_csv(path, &header, rows)
        }
    }
}

pub fn write_strategies(path: &Path, solved: &Solved, x1: &DVector<f64>) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let horizon = match solved {
        Solved::Scalar(_, sol) => sol.horizon(),
        Solved::Ndim(_, sol) => sol.horizon(),
    };
    for k in 1..=horizon {
        for alpha in FlipState::ALL {
            let [def, adv] = match solved {
                Solved::Scalar(_, sol) => sol.takeover_probabilities(k, alpha, x1)?,
                Solved::Ndim(_, sol) => sol.takeover_probabilities(k, alpha, x1)?,
            };
            rows.push(vec![k.to_string(), alpha.to_string(), float(def), float(adv)]);
        }
    }
    write_csv(path, &["k", "alpha", "defender_takeover", "adversary_takeover"], rows)
}

fn write_calibration(dir: &Path, results: &[CalibrationResult]) -> Result<(), CliError> {
    let trace = results.iter().flat_map(|r| {
        r.trace.iter().map(move |t| {
            vec![
                r.configuration.to_string(),
                t.phase.clone(),
                t.iteration.to_string(),
                float(t.lo),
                float(t.hi),
                float(t.probe),
                t.accepted.to_string(),
            ]
        })
    });
    write_csv(
        &dir.join("calibration.csv"),
        &["configuration", "phase", "iteration", "lo", "hi", "probe", "accepted"],
        trace,
    )?;
    let summary = results.iter().map(|r| {
        vec![
            r.configuration.to_string(),
            float(r.n_star),
            opt_float(r.g1_star),
            r.converged.to_string(),
            r.iterations.to_string(),
            r.monotonicity_verified.to_string(),
        ]
    });
    write_csv(
        &dir.join("calibration_result.csv"),
        &["configuration", "n_star", "g1_star", "converged", "iterations", "monotonicity_verified"],
        summary,
    )
}

fn describe(r: &CalibrationResult) -> String {
    let mut s = format!("{}:", r.configuration);
    if !r.n_star.is_nan() {
        s += &format!(" N* = {:.6}", r.n_star);
    }
    if let Some(g) = r.g1_star {
        s += &format!(" G1* = {g:.6}");
    }
    s += &format!(" ({} iterations", r.iterations);
    if !r.converged {
        s += ", not converged";
    }
    if !r.monotonicity_verified {
        s += ", monotonicity not verified";
    }
    s + ")"
}

fn x1_for(cfg: &ScenarioConfig, solved: &Solved) -> Result<DVector<f64>, CliError> {
    let dim = match solved {
        Solved::Scalar(..) => 1,
        Solved::Ndim(sc, _) => sc.dim(),
    };
    cfg.x1(dim)
}

fn simulation_options(ctx: &Context, cfg: &ScenarioConfig, runs: Option<usize>) -> Result<SimulationOptions, CliError> {
    let mut opts = cfg.simulation_options()?;
    if let Some(seed) = ctx.seed {
        opts.master_seed = seed;
    }
    if let Some(n) = runs {
        opts.n_runs = n;
    }
    Ok(opts)
}

/// Rollout costs and per-k average takeover probabilities.
pub fn simulate_solved(
    solved: &Solved,
    x1: &DVector<f64>,
    alpha1: FlipState,
    opts: &SimulationOptions,
) -> Result<(Vec<f64>, f64, Vec<[f64; 2]>), CliError> {
    let (records, predicted) = match solved {
        Solved::Scalar(sc, sol) => {
            let msc = MatrixScenario::from(sc);
            (rollouts(&msc, sol, x1, alpha1, None, opts)?, SolvedGame::value(sol, 1, alpha1, x1))
        }
        Solved::Ndim(sc, sol) => (rollouts(sc, sol, x1, alpha1, None, opts)?, SolvedGame::value(sol, 1, alpha1, x1)),
    };
    let horizon = records[0].defender_probabilities.len();
    let runs = records.len() as f64;
    let trace = (0..horizon)
        .map(|i| {
            let def: f64 = records.iter().map(|r| r.defender_probabilities[i]).sum();
            let adv: f64 = records.iter().map(|r| r.adversary_probabilities[i]).sum();
            [def / runs, adv / runs]
        })
        .collect();
    Ok((records.iter().map(|r| r.total_cost).collect(), predicted, trace))
}

fn write_trace(path: &Path, trace: &[[f64; 2]]) -> Result<(), CliError> {
    let rows = trace
        .iter()
        .enumerate()
        .map(|(i, [d, a])| vec![(i + 1).to_string(), float(*d), float(*a)]);
    write_csv(path, &["k", "defender_takeover", "adversary_takeover"], rows)
}

pub fn solve(ctx: &Context, source: &str) -> Result<(), CliError> {
    let cfg = ScenarioConfig::load(source)?;
    let solved = solve_config(&cfg)?;
    let x1 = x1_for(&cfg, &solved)?;
    write_values(&ctx.out.join("values.csv"), &solved)?;
    write_strategies(&ctx.out.join("strategies.csv"), &solved, &x1)?;
    let mixed = match &solved {
        Solved::Scalar(_, sol) => sol.steps.iter().filter(|s| s.is_mixed()).count(),
        Solved::Ndim(_, sol) => sol.steps.iter().filter(|s| s.is_mixed()).count(),
    };
    ctx.say(format!("solved {source}: {mixed} of {} steps mixed; wrote {}", cfg.horizon, ctx.out.display()));
    Ok(())
}

pub fn per_step_config(cfg: &ScenarioConfig) -> Result<Vec<f64>, CliError> {
    let opts = cfg.calibration_options();
    Ok(match cfg.scenario()? {
        Scenario::Scalar(sc) => per_step_control_costs(&sc, &opts)?,
        Scenario::Ndim(scenario) => {
            per_step_control_costs(&NdimProblem { scenario, options: cfg.ndim_options() }, &opts)?
        }
    })
}

pub fn calibrate(ctx: &Context, source: &str, target: Target, per_step: bool) -> Result<(), CliError> {
    let cfg = ScenarioConfig::load(source)?;
    let results = calibrate_config(&cfg, target)?;
    write_calibration(&ctx.out, &results)?;
    for r in &results {
        ctx.say(describe(r));
    }
    if per_step {
        let costs = per_step_config(&cfg)?;
        write_csv(
            &ctx.out.join("per_step_costs.csv"),
            &["k", "n_star"],
            costs.iter().enumerate().map(|(i, n)| vec![(i + 1).to_string(), float(*n)]),
        )?;
        ctx.say(format!("per-step N* written for {} steps", costs.len()));
    }
    Ok(())
}

pub fn simulate(ctx: &Context, source: &str, runs: Option<usize>) -> Result<(), CliError> {
    let cfg = ScenarioConfig::load(source)?;
    let solved = solve_config(&cfg)?;
    let x1 = x1_for(&cfg, &solved)?;
    let opts = simulation_options(ctx, &cfg, runs)?;
    let (costs, predicted, trace) = simulate_solved(&solved, &x1, cfg.alpha1()?, &opts)?;
    let s = summarize(&costs, predicted);
    write_csv(
        &ctx.out.join("rollups.csv"),
        &["run", "total_cost"],
        costs.iter().enumerate().map(|(i, c)| vec![i.to_string(), float(*c)]),
    )?;
    // std_error 0 from a single run is reported as NA
    let se = if s.runs < 2 { f64::NAN } else { s.std_error };
    write_csv(
        &ctx.out.join("summary.csv"),
        &["runs", "mean_cost", "std_error", "predicted_value", "z_score"],
        [vec![s.runs.to_string(), float(s.mean_cost), float(se), float(s.predicted_value), float(s.z_score)]],
    )?;
    write_trace(&ctx.out.join("strategy_trace.csv"), &trace)?;
    ctx.say(format!(
        "{} runs: mean {:.6}, predicted {:.6}, z {}",
        s.runs,
        s.mean_cost,
        s.predicted_value,
        if s.z_score.is_nan() { "NA".to_string() } else { format!("{:.3}", s.z_score) }
    ));
    Ok(())
}

/// Bundled configs behind each figure.
pub fn figure_cases(figure: u8) -> [&'static str; 2] {
    match figure {
        1 => ["scalar_e085", "scalar_e100"],
        _ => ["ndim_e085", "ndim_e100"],
    }
}

/// Calibrates N in both configurations, solves each calibrated scenario and
/// writes the CSVs under `<out>/figures/fig<N>/<case>/`.
pub fn reproduce(ctx: &Context, figure: u8) -> Result<(), CliError> {
    let fig_dir = ctx.out.join("figures").join(format!("fig{figure}"));
    for case in figure_cases(figure) {
        let cfg = ScenarioConfig::load(case)?;
        let dir = fig_dir.join(case);
        let results = calibrate_config(&cfg, Target::N)?;
        write_calibration(&dir, &results)?;
        for r in &results {
            ctx.say(format!("{case} {}", describe(r)));
            let solved = solve_scenario(&cfg, calibrated_scenario(&cfg, r.n_star, r.g1_star)?)?;
            let x1 = x1_for(&cfg, &solved)?;
            let sub = dir.join(r.configuration.to_string());
            write_values(&sub.join("values.csv"), &solved)?;
            write_strategies(&sub.join("strategies.csv"), &solved, &x1)?;
            let opts = SimulationOptions { n_runs: TRACE_RUNS, ..simulation_options(ctx, &cfg, None)? };
            let (_, _, trace) = simulate_solved(&solved, &x1, cfg.alpha1()?, &opts)?;
            write_trace(&sub.join("strategy_trace.csv"), &trace)?;
        }
    }
    ctx.say(format!("wrote {}", fig_dir.display()));
    Ok(())
}
