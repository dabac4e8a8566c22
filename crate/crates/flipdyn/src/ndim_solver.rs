//! Backward recursion for n-dimensional systems.
//!
//! The value gap xᵀ𝐏x is generally not a multiple of xᵀx, so no single η
//! makes the gains exact. Each step instead brackets the gap with a pair
//! (η̲, η̄) from its extreme eigenvalues and propagates the resulting bounds
//! P̄⁰, P̄¹. When 𝐏 happens to be isotropic the exact recursion is used.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, FlipDynError, Result};
use crate::lq_control::{
    eta_upper_limit, is_positive_definite, max_eigenvalue, min_eigenvalue, regime_gains,
    smallest_root, solve_eta_bounds_ndim, symmetrize, Branch, MatrixStage, ScalarStage,
    ValueGapMatrix, DEFINITENESS_TOL, ETA_EDGE,
};
use crate::matrix_game::{ne_takeover, FlipState, StageGameSolution, StageRegime};
use crate::scalar_solver::{step_from_stage, ScalarScenario};

/// Relative Frobenius tolerance for treating 𝐏 as a multiple of identity.
pub const ISOTROPY_TOL: f64 = 1e-10;

/// Per-step data of a time-invariant matrix scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStageParams {
    pub e: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub g0: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    pub d: f64,
    pub a: f64,
    pub m: DMatrix<f64>,
    pub n: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixScenario {
    pub horizon: usize,
    pub e: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub h: Vec<DMatrix<f64>>,
    pub g0: Vec<DMatrix<f64>>,
    pub g1: Vec<DMatrix<f64>>,
    pub d: Vec<f64>,
    pub a: Vec<f64>,
    pub m: Vec<DMatrix<f64>>,
    pub n: Vec<DMatrix<f64>>,
    pub g0_terminal: DMatrix<f64>,
    pub g1_terminal: DMatrix<f64>,
}

impl From<&ScalarScenario> for MatrixScenario {
    fn from(s: &ScalarScenario) -> Self {
        let one = |v: &Vec<f64>| v.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect();
        MatrixScenario {
            horizon: s.horizon,
            e: one(&s.e),
            b: one(&s.b),
            h: one(&s.h),
            g0: one(&s.g0),
            g1: one(&s.g1),
            d: s.d.clone(),
            a: s.a.clone(),
            m: one(&s.m),
            n: one(&s.n),
            g0_terminal: DMatrix::from_element(1, 1, s.g0_terminal),
            g1_terminal: DMatrix::from_element(1, 1, s.g1_terminal),
        }
    }
}

fn is_symmetric(x: &DMatrix<f64>) -> bool {
    let scale = x.norm().max(1.0);
    (x - x.transpose()).norm() <= 1e-12 * scale
}

impl MatrixScenario {
    pub fn time_invariant(
        horizon: usize,
        p: MatrixStageParams,
        g0_terminal: DMatrix<f64>,
        g1_terminal: DMatrix<f64>,
    ) -> Self {
        MatrixScenario {
            horizon,
            e: vec![p.e; horizon],
            b: vec![p.b; horizon],
            h: vec![p.h; horizon],
            g0: vec![p.g0; horizon],
            g1: vec![p.g1; horizon],
            d: vec![p.d; horizon],
            a: vec![p.a; horizon],
            m: vec![p.m; horizon],
            n: vec![p.n; horizon],
            g0_terminal,
            g1_terminal,
        }
    }

    pub fn dim(&self) -> usize {
        self.g0_terminal.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.horizon;
        let n = self.dim();
        let invalid = |msg: String| Err(FlipDynError::InvalidInput(msg));
        let lens = [
            ("E", self.e.len()),
            ("B", self.b.len()),
            ("H", self.h.len()),
            ("G0", self.g0.len()),
            ("G1", self.g1.len()),
            ("d", self.d.len()),
            ("a", self.a.len()),
            ("M", self.m.len()),
            ("N", self.n.len()),
        ];
        for (name, len) in lens {
            if len != l {
                return invalid(format!("{name} has {len} entries, expected {l}"));
            }
        }
        for (name, q) in [("G0 terminal", &self.g0_terminal), ("G1 terminal", &self.g1_terminal)] {
            check_psd(name, q, n)?;
        }
        for i in 0..l {
            let k = i + 1;
            if self.e[i].shape() != (n, n) {
                return invalid(format!("E_{k} must be {n}×{n}"));
            }
            if self.b[i].nrows() != n || self.h[i].nrows() != n {
                return invalid(format!("B_{k} and H_{k} must have {n} rows"));
            }
            let (m, p) = (self.b[i].ncols(), self.h[i].ncols());
            for (name, x) in [("E", &self.e[i]), ("B", &self.b[i]), ("H", &self.h[i])] {
                if x.iter().any(|v| !v.is_finite()) {
                    return invalid(format!("{name}_{k} has non-finite entries"));
                }
            }
            check_psd("G0", &self.g0[i], n)?;
            check_psd("G1", &self.g1[i], n)?;
            check_pd("M", &self.m[i], m)?;
            check_pd("N", &self.n[i], p)?;
            for (name, x) in [("d", self.d[i]), ("a", self.a[i])] {
                ensure_finite(name, x)?;
                if x < 0.0 {
                    return invalid(format!("{name}_{k} must be non-negative"));
                }
            }
        }
        Ok(())
    }

    /// Same scenario with N = ν·I at every step.
    pub fn with_control_cost(&self, nu: f64) -> Self {
        let n = self.n.iter().map(|x| DMatrix::identity(x.nrows(), x.ncols()) * nu).collect();
        MatrixScenario { n, ..self.clone() }
    }

    /// Same scenario with G¹ = g·I at every step and at the terminal step.
    pub fn with_state_cost(&self, g: f64) -> Self {
        let dim = self.dim();
        let gi = DMatrix::identity(dim, dim) * g;
        MatrixScenario { g1: vec![gi.clone(); self.horizon], g1_terminal: gi, ..self.clone() }
    }

    pub fn stage<'a>(
        &'a self,
        k: usize,
        p0_next: &'a DMatrix<f64>,
        p1_next: &'a DMatrix<f64>,
    ) -> MatrixStage<'a> {
        let i = k - 1;
        MatrixStage {
            e: &self.e[i],
            b: &self.b[i],
            h: &self.h[i],
            p0_next,
            p1_next,
            m: &self.m[i],
            n: &self.n[i],
            d: self.d[i],
            a: self.a[i],
        }
    }
}

fn check_psd(name: &str, q: &DMatrix<f64>, n: usize) -> Result<()> {
    if q.shape() != (n, n) || q.iter().any(|v| !v.is_finite()) || !is_symmetric(q) {
        return Err(FlipDynError::InvalidInput(format!("{name} must be a finite symmetric {n}×{n} matrix")));
    }
    if min_eigenvalue(q) < -DEFINITENESS_TOL {
        return Err(FlipDynError::InvalidInput(format!("{name} must be positive semidefinite")));
    }
    Ok(())
}

fn check_pd(name: &str, q: &DMatrix<f64>, n: usize) -> Result<()> {
    if q.shape() != (n, n) || q.iter().any(|v| !v.is_finite()) || !is_symmetric(q) {
        return Err(FlipDynError::InvalidInput(format!("{name} must be a finite symmetric {n}×{n} matrix")));
    }
    if !is_positive_definite(q) {
        return Err(FlipDynError::InvalidInput(format!("{name} must be positive definite")));
    }
    Ok(())
}

/// How a value gap that is neither above nor below a takeover cost for all x
/// is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegimeRule {
    /// Abort with `RegimeIndeterminate`.
    #[default]
    Strict,
    /// A condition 𝐏 ≻ c·I counts as met only when it holds for every x;
    /// otherwise it is treated as failed.
    Definite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NdimOptions {
    pub regime_rule: RegimeRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStep {
    pub k: usize,
    pub p0: DMatrix<f64>,
    pub p1: DMatrix<f64>,
    pub eta_lower: Option<f64>,
    pub eta_upper: Option<f64>,
    pub branch: Branch,
    pub regime: [StageRegime; 2],
    pub k_gain: DMatrix<f64>,
    pub w_gain: DMatrix<f64>,
    /// B̌ᵀP̄⁰_{k+1}B̌.
    pub defender_next: DMatrix<f64>,
    /// W̌ᵀP̄¹_{k+1}W̌.
    pub adversary_next: DMatrix<f64>,
    pub gap: ValueGapMatrix,
    pub d: f64,
    pub a: f64,
    /// Produced by the exact common-η recursion rather than the bounds.
    pub exact: bool,
}

impl MatrixStep {
    pub fn is_mixed(&self) -> bool {
        self.branch == Branch::Mixed && self.eta_lower.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSolution {
    /// P̄⁰_k for k = 1..=L+1 at index k-1.
    pub p0: Vec<DMatrix<f64>>,
    pub p1: Vec<DMatrix<f64>>,
    /// Step data for k = 1..=L at index k-1.
    pub steps: Vec<MatrixStep>,
}

impl MatrixSolution {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, k: usize) -> &MatrixStep {
        &self.steps[k - 1]
    }

    pub fn value_matrix(&self, k: usize, alpha: FlipState) -> &DMatrix<f64> {
        match alpha {
            FlipState::Defender => &self.p0[k - 1],
            FlipState::Adversary => &self.p1[k - 1],
        }
    }

    pub fn all_mixed(&self) -> bool {
        self.steps.iter().all(MatrixStep::is_mixed)
    }

    /// Stage strategies at state x, from the quadratic forms of the stored
    /// next-step values.
    pub fn strategy_at(
        &self,
        k: usize,
        alpha: FlipState,
        x: &DVector<f64>,
    ) -> Result<StageGameSolution> {
        strategy_at(self, k, alpha, x)
    }
}

pub fn strategy_at(
    solution: &MatrixSolution,
    k: usize,
    alpha: FlipState,
    x: &DVector<f64>,
) -> Result<StageGameSolution> {
    if k == 0 || k > solution.horizon() {
        return Err(FlipDynError::InvalidInput(format!("k = {k} outside 1..={}", solution.horizon())));
    }
    let step = solution.step(k);
    if x.len() != step.gap.p_gap.nrows() {
        return Err(FlipDynError::InvalidInput("state dimension mismatch".into()));
    }
    let xx = x.dot(x);
    if xx == 0.0 {
        return Err(FlipDynError::InvalidInput("strategies are undefined at x = 0".into()));
    }
    let v0 = x.dot(&(&step.defender_next * x));
    let v1 = x.dot(&(&step.adversary_next * x));
    ne_takeover(alpha, v0, v1, step.d * xx, step.a * xx)
}

/// Steps computed from k = L downward, plus the error that stopped the pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPass {
    pub steps: Vec<MatrixStep>,
    pub error: Option<FlipDynError>,
}

fn feasibility(k: usize, stage: &MatrixStage) -> Result<()> {
    if stage.second_order_holds() {
        Ok(())
    } else {
        Err(FlipDynError::FeasibilityViolated { k })
    }
}

fn is_isotropic(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    let norm = p.norm();
    if norm == 0.0 {
        return true;
    }
    let mean = p.trace() / n as f64;
    let dev = p - DMatrix::identity(n, n) * mean;
    dev.norm() / norm < ISOTROPY_TOL
}

struct StepInputs<'a> {
    k: usize,
    stage: MatrixStage<'a>,
    g0: &'a DMatrix<f64>,
    g1: &'a DMatrix<f64>,
}

/// Values for a branch given gains and the two takeover adjustments.
///
/// `mixed_terms` is (defender, adversary) scalar multiples of identity added
/// in the mixed branch.
fn assemble(
    inp: &StepInputs,
    branch: Branch,
    k_gain: DMatrix<f64>,
    w_gain: DMatrix<f64>,
    mixed_terms: (f64, f64),
    etas: (Option<f64>, Option<f64>),
    exact: bool,
) -> MatrixStep {
    let st = &inp.stage;
    let n = st.dim();
    let eye = DMatrix::<f64>::identity(n, n);
    let (bc, wc) = st.closed_loops(&k_gain, &w_gain);
    let def_next = symmetrize(&(bc.transpose() * st.p0_next * &bc));
    let adv_next = symmetrize(&(wc.transpose() * st.p1_next * &wc));
    let control0 = inp.g0 + k_gain.transpose() * st.m * &k_gain;
    let control1 = inp.g1 - w_gain.transpose() * st.n * &w_gain;
    let (p0, p1) = match branch {
        Branch::Mixed => (
            &control0 + &def_next + &eye * mixed_terms.0,
            &control1 + &adv_next + &eye * mixed_terms.1,
        ),
        Branch::AdversaryTakeover => (&control0 + &adv_next - &eye * st.a, &control1 + &adv_next),
        Branch::DefenderTakeover => (&control0 + &def_next, &control1 + &def_next + &eye * st.d),
        Branch::BothIdle => (&control0 + &def_next, &control1 + &adv_next),
    };
    let gap = ValueGapMatrix { p_gap: symmetrize(&(&adv_next - &def_next)) };
    MatrixStep {
        k: inp.k,
        p0: symmetrize(&p0),
        p1: symmetrize(&p1),
        eta_lower: etas.0,
        eta_upper: etas.1,
        branch,
        regime: branch.regimes(),
        k_gain,
        w_gain,
        defender_next: def_next,
        adversary_next: adv_next,
        gap,
        d: st.d,
        a: st.a,
        exact,
    }
}

fn one_by_one(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

/// Exact step with a single common η. Defined when 𝐏 is isotropic at the
/// root; always available in one dimension.
pub fn exact_step_attempt(
    k: usize,
    p0_next: &DMatrix<f64>,
    p1_next: &DMatrix<f64>,
    scenario: &MatrixScenario,
) -> Result<Option<MatrixStep>> {
    let inp = StepInputs {
        k,
        stage: scenario.stage(k, p0_next, p1_next),
        g0: &scenario.g0[k - 1],
        g1: &scenario.g1[k - 1],
    };
    exact_from_inputs(&inp)
}

fn exact_from_inputs(inp: &StepInputs) -> Result<Option<MatrixStep>> {
    let st = &inp.stage;
    let (n, m, p) = (st.dim(), st.b.ncols(), st.h.ncols());
    if n == 1 && m == 1 && p == 1 {
        let sc = ScalarStage {
            e: st.e[(0, 0)],
            b: st.b[(0, 0)],
            h: st.h[(0, 0)],
            p0_next: st.p0_next[(0, 0)],
            p1_next: st.p1_next[(0, 0)],
            m: st.m[(0, 0)],
            n: st.n[(0, 0)],
            d: st.d,
            a: st.a,
        };
        let s = step_from_stage(inp.k, &sc, inp.g0[(0, 0)], inp.g1[(0, 0)])?;
        let (v0, v1) = {
            let bc = sc.e + sc.b * s.k_gain;
            let wc = sc.e + sc.h * s.w_gain;
            (bc * bc * sc.p0_next, wc * wc * sc.p1_next)
        };
        return Ok(Some(MatrixStep {
            k: inp.k,
            p0: one_by_one(s.p0),
            p1: one_by_one(s.p1),
            eta_lower: s.eta,
            eta_upper: s.eta,
            branch: s.branch,
            regime: s.regime,
            k_gain: one_by_one(s.k_gain),
            w_gain: one_by_one(s.w_gain),
            defender_next: one_by_one(v0),
            adversary_next: one_by_one(v1),
            gap: ValueGapMatrix { p_gap: one_by_one(s.check_p) },
            d: st.d,
            a: st.a,
            exact: true,
        }));
    }
    let (d, a) = (st.d, st.a);
    if d * a <= 0.0 {
        return Ok(None);
    }
    let s = (a * d).sqrt();
    let residual = |eta: f64| match st.gains(eta, eta) {
        Ok((kg, wg)) => st.gap(&kg, &wg).p_gap.trace() / n as f64 - s / eta,
        Err(_) => f64::NAN,
    };
    let Some(eta) = smallest_root(residual, ETA_EDGE, eta_upper_limit(d, a) - ETA_EDGE) else {
        return Ok(None);
    };
    let (kg, wg) = st.gains(eta, eta)?;
    let gap = st.gap(&kg, &wg).p_gap;
    if !is_isotropic(&gap) {
        return Ok(None);
    }
    let c = gap.trace() / n as f64;
    if !(c > d && c > a) {
        return Ok(None);
    }
    let ad = a * d;
    let step = assemble(inp, Branch::Mixed, kg, wg, (d - ad / c, -a + ad / c), (Some(eta), Some(eta)), true);
    Ok(Some(step))
}

/// Uniform regime of a value gap relative to both takeover costs, or `None`
/// when the rule admits no uniform answer.
pub fn classify_gap(gap: &DMatrix<f64>, d: f64, a: f64, rule: RegimeRule) -> Option<Branch> {
    let n = gap.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let above = |c: f64| -> Option<bool> {
        let shifted = gap - &eye * c;
        if min_eigenvalue(&shifted) > DEFINITENESS_TOL {
            Some(true)
        } else if rule == RegimeRule::Definite || max_eigenvalue(&shifted) <= DEFINITENESS_TOL {
            Some(false)
        } else {
            None
        }
    };
    Some(Branch::from_conditions(above(d)?, above(a)?))
}

/// Approximate step from the bounding pair (η̲, η̄), or a uniform pure regime
/// when no admissible pair exists.
pub fn approx_step(
    k: usize,
    p0_next: &DMatrix<f64>,
    p1_next: &DMatrix<f64>,
    scenario: &MatrixScenario,
    options: &NdimOptions,
) -> Result<MatrixStep> {
    let inp = StepInputs {
        k,
        stage: scenario.stage(k, p0_next, p1_next),
        g0: &scenario.g0[k - 1],
        g1: &scenario.g1[k - 1],
    };
    feasibility(k, &inp.stage)?;
    approx_from_inputs(&inp, options)
}

fn approx_from_inputs(inp: &StepInputs, options: &NdimOptions) -> Result<MatrixStep> {
    let st = &inp.stage;
    if let Some(sol) = solve_eta_bounds_ndim(st)?.mixed() {
        let s = (st.a * st.d).sqrt();
        let terms = (st.d - sol.eta_lower * s, -st.a + sol.eta_upper * s);
        let etas = (Some(sol.eta_lower), Some(sol.eta_upper));
        return Ok(assemble(inp, Branch::Mixed, sol.k, sol.w, terms, etas, false));
    }
    for branch in Branch::PURE_ORDER {
        let (kg, wg) = regime_gains(branch, st, 0.0, 0.0)?;
        let gap = st.gap(&kg, &wg);
        if classify_gap(&gap.p_gap, st.d, st.a, options.regime_rule) == Some(branch) {
            return Ok(assemble(inp, branch, kg, wg, (0.0, 0.0), (None, None), false));
        }
    }
    let (kg, wg) = regime_gains(Branch::BothIdle, st, 0.0, 0.0)?;
    let gap = st.gap(&kg, &wg);
    match classify_gap(&gap.p_gap, st.d, st.a, options.regime_rule) {
        Some(branch) if branch != Branch::Mixed => {
            Ok(assemble(inp, branch, kg, wg, (0.0, 0.0), (None, None), false))
        }
        _ => Err(FlipDynError::RegimeIndeterminate { k: inp.k }),
    }
}

/// Runs the recursion from k = L down to 1, stopping at the first error.
pub fn backward_pass(scenario: &MatrixScenario, options: &NdimOptions) -> MatrixPass {
    let mut steps: Vec<MatrixStep> = Vec::with_capacity(scenario.horizon);
    let mut p0 = scenario.g0_terminal.clone();
    let mut p1 = scenario.g1_terminal.clone();
    for k in (1..=scenario.horizon).rev() {
        let inp = StepInputs {
            k,
            stage: scenario.stage(k, &p0, &p1),
            g0: &scenario.g0[k - 1],
            g1: &scenario.g1[k - 1],
        };
        let result = feasibility(k, &inp.stage).and_then(|_| match exact_from_inputs(&inp)? {
            Some(step) => Ok(step),
            None => approx_from_inputs(&inp, options),
        });
        match result {
            Ok(step) => {
                p0 = step.p0.clone();
                p1 = step.p1.clone();
                steps.push(step);
            }
            Err(error) => return MatrixPass { steps, error: Some(error) },
        }
    }
    MatrixPass { steps, error: None }
}

pub fn solve(scenario: &MatrixScenario) -> Result<MatrixSolution> {
    solve_with(scenario, &NdimOptions::default())
}

pub fn solve_with(scenario: &MatrixScenario, options: &NdimOptions) -> Result<MatrixSolution> {
    scenario.validate()?;
    let pass = backward_pass(scenario, options);
    if let Some(error) = pass.error {
        return Err(error);
    }
    let mut steps = pass.steps;
    steps.reverse();
    let mut p0: Vec<_> = steps.iter().map(|s| s.p0.clone()).collect();
    let mut p1: Vec<_> = steps.iter().map(|s| s.p1.clone()).collect();
    p0.push(scenario.g0_terminal.clone());
    p1.push(scenario.g1_terminal.clone());
    Ok(MatrixSolution { p0, p1, steps })
}


#[cfg(test)]
mod tests {
    use super::test_support::benchmark_2d;
    use super::*;
    use crate::scalar_solver::{self, ScalarStageParams};

    fn bench(e: f64, nu: f64, g1: f64) -> MatrixScenario {
        let p = benchmark_2d(e, nu, g1);
        let (g0t, g1t) = (p.g0.clone(), p.g1.clone());
        MatrixScenario::time_invariant(20, p, g0t, g1t)
    }

    #[test]
    fn one_dimension_defers_to_scalar_recursion() {
        let p = ScalarStageParams { e: 0.85, b: 0.1, h: 0.1, g0: 1.0, g1: 1.56, d: 0.45, a: 0.25, m: 0.65, n: 0.39 };
        let s = ScalarScenario::time_invariant(20, p, 1.0, 1.56);
        let want = scalar_solver::solve(&s).unwrap();
        let got = solve(&MatrixScenario::from(&s)).unwrap();
        for k in 1..=21 {
            assert_eq!(got.p0[k - 1][(0, 0)], want.p0[k - 1]);
            assert_eq!(got.p1[k - 1][(0, 0)], want.p1[k - 1]);
        }
        for k in 1..=20 {
            let x = DVector::from_vec(vec![1.0]);
            let st = got.strategy_at(k, FlipState::Defender, &x).unwrap();
            assert!((st.defender_takeover() - want.step(k).beta[0]).abs() < 1e-12);
            assert!((st.adversary_takeover() - want.step(k).gamma[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn isotropic_system_replicates_scalar_solution() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let p = MatrixStageParams {
            e: &eye * 0.85,
            b: &eye * 0.1,
            h: &eye * 0.1,
            g0: eye.clone(),
            g1: &eye * 1.56,
            d: 0.45,
            a: 0.25,
            m: &eye * 0.65,
            n: &eye * 0.39,
        };
        let sc = MatrixScenario::time_invariant(20, p, eye.clone(), &eye * 1.56);
        let sol = solve(&sc).unwrap();
        let sp = ScalarStageParams { e: 0.85, b: 0.1, h: 0.1, g0: 1.0, g1: 1.56, d: 0.45, a: 0.25, m: 0.65, n: 0.39 };
        let want = scalar_solver::solve(&ScalarScenario::time_invariant(20, sp, 1.0, 1.56)).unwrap();
        for k in 1..=20 {
            assert!(sol.step(k).exact);
            let p0 = &sol.p0[k - 1];
            assert!((p0 - &eye * want.p0[k - 1]).norm() < 1e-9 * want.p0[k - 1]);
            assert!((&sol.p1[k - 1] - &eye * want.p1[k - 1]).norm() < 1e-9 * want.p1[k - 1]);
        }
    }

    #[test]
    fn non_diagonal_benchmark_has_no_exact_step() {
        let sc = bench(0.85, 0.42, 1.67);
        let r = exact_step_attempt(20, &sc.g0_terminal, &sc.g1_terminal, &sc).unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn benchmark_mixed_configuration() {
        let sol = solve(&bench(0.85, 0.42, 1.67)).unwrap();
        assert!(sol.all_mixed());
        for s in &sol.steps {
            let (lo, up) = (s.eta_lower.unwrap(), s.eta_upper.unwrap());
            assert!(0.0 < up && up <= lo && lo < eta_upper_limit(0.45, 0.25));
            assert!((&s.p0 - s.p0.transpose()).norm() < 1e-10);
        }
    }

    #[test]
    fn strategies_are_scale_invariant() {
        let sol = solve(&bench(0.85, 0.42, 1.67)).unwrap();
        let x = DVector::from_vec(vec![0.4, -0.9]);
        for k in [1, 7, 20] {
            for alpha in FlipState::ALL {
                let s = sol.strategy_at(k, alpha, &x).unwrap();
                let t = sol.strategy_at(k, alpha, &(&x * -3.0)).unwrap();
                assert!((s.defender_takeover() - t.defender_takeover()).abs() < 1e-12);
                assert!((s.adversary_takeover() - t.adversary_takeover()).abs() < 1e-12);
            }
        }
        assert!(sol.strategy_at(1, FlipState::Defender, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn classification_rules() {
        let gap = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 1.0]));
        assert_eq!(classify_gap(&gap, 0.45, 0.25, RegimeRule::Strict), None);
        assert_eq!(
            classify_gap(&gap, 0.45, 0.25, RegimeRule::Definite),
            Some(Branch::AdversaryTakeover)
        );
        let gap = DMatrix::identity(2, 2) * 0.5;
        assert_eq!(classify_gap(&gap, 0.45, 0.25, RegimeRule::Strict), Some(Branch::Mixed));
    }

    #[test]
    fn baseline_benchmark_is_indeterminate_under_strict_rule() {
        let r = solve(&bench(0.85, 1.0, 1.35));
        assert!(matches!(r, Err(FlipDynError::RegimeIndeterminate { .. })));
        let opts = NdimOptions { regime_rule: RegimeRule::Definite };
        assert!(solve_with(&bench(0.85, 1.0, 1.35), &opts).is_ok());
    }

    #[test]
    fn validation() {
        let mut sc = bench(0.85, 0.42, 1.67);
        sc.d[0] = -0.1;
        assert!(matches!(solve(&sc), Err(FlipDynError::InvalidInput(_))));
        let mut sc = bench(0.85, 0.42, 1.67);
        sc.n[0] = DMatrix::from_element(1, 1, 0.0);
        assert!(matches!(solve(&sc), Err(FlipDynError::InvalidInput(_))));
    }
}
