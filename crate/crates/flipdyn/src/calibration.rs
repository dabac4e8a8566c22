//! Bisection searches for the minimal adversary control cost N* and the
//! minimal adversary state cost G¹*.
//!
//! Three pass predicates drive the searches:
//!
//! * feasible: the backward pass completes;
//! * mixed-ok: no computed step leaves the mixed regime (a pass that stops on
//!   infeasibility after mixed steps still counts);
//! * mixed-complete: the pass completes and every step is mixed.
//!
//! mixed-ok is monotone in the G¹ scale, which the inner search relies on.

use std::fmt;

use crate::error::{FlipDynError, Result};
use crate::lq_control::max_eigenvalue;
use crate::ndim_solver::{self, MatrixScenario, NdimOptions};
use crate::scalar_solver::{self, ScalarScenario};

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const MAX_DOUBLINGS: usize = 60;
/// The G¹ search runs this much finer than the requested tolerance. Near N*
/// the window of G¹ values that are both mixed and feasible is narrower than
/// the tolerance, and a coarse G¹ would make the outer predicate noisy.
pub const INNER_REFINEMENT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Configuration {
    /// The scenario as given.
    Baseline,
    /// G¹ raised to its minimal mixed-regime value for each trial N.
    MixedEnforced,
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Configuration::Baseline => "baseline",
            Configuration::MixedEnforced => "mixed_enforced",
        })
    }
}

/// How a backward pass ended.
#[derive(Debug, Clone, PartialEq)]
pub enum PassOutcome {
    Complete,
    Infeasible { k: usize },
    Indeterminate { k: usize },
    Failed(FlipDynError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassStatus {
    /// Every computed step was mixed.
    pub mixed_prefix: bool,
    pub outcome: PassOutcome,
}

impl PassStatus {
    fn new(mixed_prefix: bool, error: Option<FlipDynError>) -> Self {
        let outcome = match error {
            None => PassOutcome::Complete,
            Some(FlipDynError::FeasibilityViolated { k }) => PassOutcome::Infeasible { k },
            Some(FlipDynError::RegimeIndeterminate { k }) => PassOutcome::Indeterminate { k },
            Some(e) => PassOutcome::Failed(e),
        };
        PassStatus { mixed_prefix, outcome }
    }

    pub fn feasible(&self) -> bool {
        self.outcome == PassOutcome::Complete
    }

    pub fn mixed_ok(&self) -> bool {
        self.mixed_prefix
            && matches!(self.outcome, PassOutcome::Complete | PassOutcome::Infeasible { .. })
    }

    pub fn mixed_complete(&self) -> bool {
        self.mixed_prefix && self.feasible()
    }

    /// Step at which the pass stopped, if it did.
    fn stopped_at(&self) -> Option<usize> {
        match self.outcome {
            PassOutcome::Complete | PassOutcome::Failed(_) => None,
            PassOutcome::Infeasible { k } | PassOutcome::Indeterminate { k } => Some(k),
        }
    }
}

/// A scenario family the searches can scale.
pub trait Calibratable: Sized {
    fn horizon(&self) -> usize;
    fn validate(&self) -> Result<()>;
    fn with_control_cost(&self, n: f64) -> Self;
    fn with_control_costs(&self, n: &[f64]) -> Self;
    fn with_state_cost(&self, g: f64) -> Self;
    fn pass_status(&self) -> PassStatus;
    /// Starting upper bracket for N.
    fn control_cost_hint(&self) -> f64;
    /// Starting upper bracket for the G¹ scale.
    fn state_cost_hint(&self) -> f64;
}

impl Calibratable for ScalarScenario {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn validate(&self) -> Result<()> {
        ScalarScenario::validate(self)
    }

    fn with_control_cost(&self, n: f64) -> Self {
        ScalarScenario::with_control_cost(self, n)
    }

    fn with_control_costs(&self, n: &[f64]) -> Self {
        ScalarScenario { n: n.to_vec(), ..self.clone() }
    }

    fn with_state_cost(&self, g: f64) -> Self {
        ScalarScenario::with_state_cost(self, g)
    }

    fn pass_status(&self) -> PassStatus {
        let pass = scalar_solver::backward_pass(self);
        PassStatus::new(pass.steps.iter().all(|s| s.is_mixed()), pass.error)
    }

    fn control_cost_hint(&self) -> f64 {
        let m = self.m.iter().copied().fold(0.0, f64::max);
        let h = self.h.iter().map(|h| h * h).fold(0.0, f64::max);
        10.0 * m.max(h * self.g1_terminal)
    }

    fn state_cost_hint(&self) -> f64 {
        self.g1_terminal.max(1.0)
    }
}

/// An n-dimensional scenario together with its solver options.
#[derive(Debug, Clone, PartialEq)]
pub struct NdimProblem {
    pub scenario: MatrixScenario,
    pub options: NdimOptions,
}

impl Calibratable for NdimProblem {
    fn horizon(&self) -> usize {
        self.scenario.horizon
    }

    fn validate(&self) -> Result<()> {
        self.scenario.validate()
    }

    fn with_control_cost(&self, n: f64) -> Self {
        NdimProblem { scenario: self.scenario.with_control_cost(n), options: self.options }
    }

    fn with_control_costs(&self, n: &[f64]) -> Self {
        let mut scenario = self.scenario.clone();
        for (nk, &v) in scenario.n.iter_mut().zip(n) {
            *nk = nalgebra::DMatrix::identity(nk.nrows(), nk.ncols()) * v;
        }
        NdimProblem { scenario, options: self.options }
    }

    fn with_state_cost(&self, g: f64) -> Self {
        NdimProblem { scenario: self.scenario.with_state_cost(g), options: self.options }
    }

    fn pass_status(&self) -> PassStatus {
        let pass = ndim_solver::backward_pass(&self.scenario, &self.options);
        PassStatus::new(pass.steps.iter().all(|s| s.is_mixed()), pass.error)
    }

    fn control_cost_hint(&self) -> f64 {
        let s = &self.scenario;
        let top = s
            .h
            .iter()
            .map(|h| max_eigenvalue(&(h.transpose() * &s.g1_terminal * h)))
            .fold(0.0, f64::max);
        (2.0 * top).max(DEFAULT_TOLERANCE)
    }

    fn state_cost_hint(&self) -> f64 {
        max_eigenvalue(&self.scenario.g1_terminal).max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub tolerance: f64,
    /// Fixed upper bracket for N; found by doubling when absent.
    pub control_cost_hi: Option<f64>,
    /// Fixed upper bracket for the G¹ scale; found by doubling when absent.
    pub state_cost_hi: Option<f64>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { tolerance: DEFAULT_TOLERANCE, control_cost_hi: None, state_cost_hi: None }
    }
}

/// One predicate evaluation of a bisection.
#[derive(Debug, Clone, PartialEq)]
pub struct BisectionRecord {
    pub phase: String,
    pub iteration: usize,
    pub lo: f64,
    pub hi: f64,
    pub probe: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// N* (scalar) or ν* with N* = ν*·I.
    pub n_star: f64,
    /// G¹* (scalar) or its scale; absent for Baseline runs.
    pub g1_star: Option<f64>,
    pub converged: bool,
    /// Outer bisection iterations.
    pub iterations: usize,
    pub configuration: Configuration,
    /// Predicate fails at (value − 2·tolerance) and holds at the value.
    pub monotonicity_verified: bool,
    pub trace: Vec<BisectionRecord>,
}

struct Search<'t> {
    phase: String,
    tolerance: f64,
    /// Lower end of the search interval.
    floor: f64,
    trace: &'t mut Vec<BisectionRecord>,
}

struct Found {
    value: f64,
    iterations: usize,
    converged: bool,
}

impl Search<'_> {
    fn record(&mut self, iteration: usize, lo: f64, hi: f64, probe: f64, accepted: bool) {
        self.trace.push(BisectionRecord {
            phase: self.phase.clone(),
            iteration,
            lo,
            hi,
            probe,
            accepted,
        });
    }

    /// Smallest value in [floor, ∞) satisfying `pred`, assumed monotone.
    fn smallest<F>(&mut self, start_hi: f64, fixed_hi: Option<f64>, mut pred: F) -> Result<Found>
    where
        F: FnMut(f64) -> Result<bool>,
    {
        let mut hi = fixed_hi.unwrap_or(start_hi);
        let mut ok = pred(hi)?;
        self.record(0, self.floor, hi, hi, ok);
        let mut doublings = 0;
        while !ok {
            if fixed_hi.is_some() || doublings == MAX_DOUBLINGS {
                return Err(FlipDynError::NoBracket(format!(
                    "{}: predicate fails at the upper bracket {hi}",
                    self.phase
                )));
            }
            hi *= 2.0;
            doublings += 1;
            ok = pred(hi)?;
            self.record(0, self.floor, hi, hi, ok);
        }
        let mut lo = self.floor;
        if pred(lo)? {
            self.record(0, lo, hi, lo, true);
            return Ok(Found { value: lo, iterations: 0, converged: true });
        }
        let mut iterations = 0;
        while hi - lo >= self.tolerance {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                // bracket narrower than float spacing
                break;
            }
            let accepted = pred(mid)?;
            self.record(iterations, lo, hi, mid, accepted);
            if accepted {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Found { value: hi, iterations, converged: hi - lo < self.tolerance })
    }
}

fn verify_monotone<F>(value: f64, tolerance: f64, mut pred: F) -> Result<bool>
where
    F: FnMut(f64) -> Result<bool>,
{
    let below = value - 2.0 * tolerance;
    let fails_below = below < 0.0 || !pred(below)?;
    Ok(fails_below && pred(value)?)
}

fn check_tolerance(options: &CalibrationOptions) -> Result<()> {
    if options.tolerance > 0.0 && options.tolerance.is_finite() {
        Ok(())
    } else {
        Err(FlipDynError::InvalidInput(format!("tolerance must be positive, got {}", options.tolerance)))
    }
}

/// Smallest G¹ scale at which the pass never leaves the mixed regime.
fn state_cost_floor<P: Calibratable>(
    problem: &P,
    options: &CalibrationOptions,
    phase: String,
    trace: &mut Vec<BisectionRecord>,
) -> Result<Found> {
    let tolerance = options.tolerance * INNER_REFINEMENT;
    let mut search = Search { phase, tolerance, floor: 0.0, trace };
    search.smallest(problem.state_cost_hint(), options.state_cost_hi, |g| {
        Ok(problem.with_state_cost(g).pass_status().mixed_ok())
    })
}

/// Minimal constant N, either for the scenario as given or with G¹ enforced
/// to its mixed-regime minimum.
pub fn min_adversary_control_cost<P: Calibratable>(
    problem: &P,
    configuration: Configuration,
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    match configuration {
        Configuration::Baseline => baseline_control_cost(problem, options),
        Configuration::MixedEnforced => dual_bisection(problem, options),
    }
}

fn baseline_control_cost<P: Calibratable>(
    problem: &P,
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    problem.validate()?;
    check_tolerance(options)?;
    let mut trace = Vec::new();
    let pred = |n: f64| Ok(problem.with_control_cost(n).pass_status().feasible());
    let found = Search { phase: "N".into(), tolerance: options.tolerance, floor: 0.0, trace: &mut trace }
        .smallest(problem.control_cost_hint(), options.control_cost_hi, pred)?;
    let monotone = verify_monotone(found.value, options.tolerance, pred)?;
    Ok(CalibrationResult {
        n_star: found.value,
        g1_star: None,
        converged: found.converged,
        iterations: found.iterations,
        configuration: Configuration::Baseline,
        monotonicity_verified: monotone,
        trace,
    })
}

/// Minimal G¹ scale making every step mixed at the scenario's own N.
pub fn min_adversary_state_cost<P: Calibratable>(
    problem: &P,
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    problem.validate()?;
    check_tolerance(options)?;
    let mut trace = Vec::new();
    let found = state_cost_floor(problem, options, "G1".into(), &mut trace)?;
    let status = problem.with_state_cost(found.value).pass_status();
    if !status.mixed_complete() {
        return Err(FlipDynError::NoBracket(format!(
            "G1: the mixed regime at scale {} does not complete ({:?}); N is too small",
            found.value, status.outcome
        )));
    }
    let pred = |g: f64| Ok(problem.with_state_cost(g).pass_status().mixed_ok());
    let monotone = verify_monotone(found.value, options.tolerance, pred)?;
    Ok(CalibrationResult {
        n_star: f64::NAN,
        g1_star: Some(found.value),
        converged: found.converged,
        iterations: found.iterations,
        configuration: Configuration::MixedEnforced,
        monotonicity_verified: monotone,
        trace,
    })
}

/// Joint search: outer bisection on N, inner bisection on the G¹ scale.
///
/// The outer predicate holds at N when the pass at (N, G¹_min(N)) completes
/// with every step mixed.
pub fn dual_bisection<P: Calibratable>(
    problem: &P,
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    problem.validate()?;
    check_tolerance(options)?;
    let mut inner_trace = Vec::new();
    let outer = |n: f64, inner_trace: &mut Vec<BisectionRecord>| -> Result<(bool, f64)> {
        let scaled = problem.with_control_cost(n);
        let g = state_cost_floor(&scaled, options, format!("G1|N={n}"), inner_trace)?.value;
        Ok((scaled.with_state_cost(g).pass_status().mixed_complete(), g))
    };
    let mut trace = Vec::new();
    let found = {
        let mut search = Search { phase: "N".into(), tolerance: options.tolerance, floor: 0.0, trace: &mut trace };
        search.smallest(problem.control_cost_hint(), options.control_cost_hi, |n| {
            Ok(outer(n, &mut inner_trace)?.0)
        })?
    };
    let (ok, g1_star) = outer(found.value, &mut inner_trace)?;
    let monotone = ok && verify_monotone(found.value, options.tolerance, |n| {
        Ok(outer(n, &mut inner_trace)?.0)
    })?;
    trace.extend(inner_trace);
    Ok(CalibrationResult {
        n_star: found.value,
        g1_star: Some(g1_star),
        converged: found.converged,
        iterations: found.iterations,
        configuration: Configuration::MixedEnforced,
        monotonicity_verified: monotone,
        trace,
    })
}

/// Per-step minimal N_k, chosen backward from k = L so that each step is
/// feasible given the costs already fixed at later steps.
pub fn per_step_control_costs<P: Calibratable>(
    problem: &P,
    options: &CalibrationOptions,
) -> Result<Vec<f64>> {
    problem.validate()?;
    check_tolerance(options)?;
    let l = problem.horizon();
    let mut trace = Vec::new();
    let mut hi_start = problem.control_cost_hint();
    // later steps fixed, earlier ones generous so they never stop the pass first
    let mut costs = vec![f64::NAN; l];
    for k in (1..=l).rev() {
        let pred = |nk: f64| -> Result<bool> {
            let mut n = costs.clone();
            n[k - 1] = nk;
            for v in n.iter_mut().take(k - 1) {
                *v = f64::MAX.sqrt();
            }
            let status = problem.with_control_costs(&n).pass_status();
            Ok(status.stopped_at().map_or(true, |at| at < k))
        };
        let found = Search { phase: format!("N_{k}"), tolerance: options.tolerance, floor: options.tolerance, trace: &mut trace }
            .smallest(hi_start, options.control_cost_hi, pred)?;
        costs[k - 1] = found.value;
        hi_start = found.value.max(options.tolerance) * 2.0;
    }
    Ok(costs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_solver::ScalarStageParams;

    fn bench(e: f64) -> ScalarScenario {
        let p = ScalarStageParams { e, b: 0.1, h: 0.1, g0: 1.0, g1: 1.0, d: 0.45, a: 0.25, m: 0.65, n: 1.0 };
        ScalarScenario::time_invariant(20, p, 1.0, 1.0)
    }

    #[test]
    fn baseline_is_feasible_at_result_and_not_below() {
        let sc = bench(0.85);
        let r = min_adversary_control_cost(&sc, Configuration::Baseline, &CalibrationOptions::default()).unwrap();
        assert!(r.converged && r.monotonicity_verified);
        assert!(scalar_solver::solve(&sc.with_control_cost(r.n_star)).is_ok());
        assert!(scalar_solver::solve(&sc.with_control_cost(r.n_star - 2e-3)).is_err());
    }

    #[test]
    fn results_are_deterministic() {
        let sc = bench(0.85);
        let opts = CalibrationOptions::default();
        let a = dual_bisection(&sc, &opts).unwrap();
        let b = dual_bisection(&sc, &opts).unwrap();
        assert_eq!(a.n_star.to_bits(), b.n_star.to_bits());
        assert_eq!(a.g1_star.unwrap().to_bits(), b.g1_star.unwrap().to_bits());
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn zero_takeover_costs_have_no_mixed_bracket() {
        let mut sc = bench(0.85);
        sc.d = vec![0.0; 20];
        sc.a = vec![0.0; 20];
        let r = dual_bisection(&sc, &CalibrationOptions::default());
        assert!(matches!(r, Err(FlipDynError::NoBracket(_))));
    }

    #[test]
    fn state_cost_search_does_not_exceed_a_mixed_scale() {
        let opts = CalibrationOptions::default();
        let dual = dual_bisection(&bench(0.85), &opts).unwrap();
        let (n, g) = (dual.n_star, dual.g1_star.unwrap());
        let sc = bench(0.85).with_control_cost(n).with_state_cost(g);
        assert!(scalar_solver::solve(&sc).unwrap().all_mixed());
        let r = min_adversary_state_cost(&sc, &opts).unwrap();
        assert!(r.monotonicity_verified);
        assert!(r.g1_star.unwrap() <= g + opts.tolerance);
        assert!(scalar_solver::solve(&sc.with_state_cost(r.g1_star.unwrap())).unwrap().all_mixed());
    }

    #[test]
    fn fixed_bracket_that_fails_reports_no_bracket() {
        let opts = CalibrationOptions { control_cost_hi: Some(0.01), ..Default::default() };
        let r = min_adversary_control_cost(&bench(0.85), Configuration::Baseline, &opts);
        assert!(matches!(r, Err(FlipDynError::NoBracket(_))));
    }

    #[test]
    fn per_step_costs_are_feasible() {
        let sc = bench(0.85);
        let opts = CalibrationOptions::default();
        let n = per_step_control_costs(&sc, &opts).unwrap();
        assert!(n.iter().all(|&v| v >= opts.tolerance));
        assert!(scalar_solver::solve(&sc.with_control_costs(&n)).is_ok());
    }
}
