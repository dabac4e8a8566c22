//! Exact backward recursion for scalar systems.
//!
//! Values are quadratic, V^α_k(x) = p^α_k x², and the takeover strategies do
//! not depend on x.

use crate::error::{ensure_finite, FlipDynError, Result};
use crate::lq_control::{regime_gains_scalar, solve_eta_scalar, Branch, ScalarStage};
use crate::matrix_game::{ne_takeover, FlipState, StageRegime};

/// Per-step coefficients of a time-invariant scalar scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarStageParams {
    pub e: f64,
    pub b: f64,
    pub h: f64,
    pub g0: f64,
    pub g1: f64,
    pub d: f64,
    pub a: f64,
    pub m: f64,
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarScenario {
    pub horizon: usize,
    pub e: Vec<f64>,
    pub b: Vec<f64>,
    pub h: Vec<f64>,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub d: Vec<f64>,
    pub a: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub g0_terminal: f64,
    pub g1_terminal: f64,
}

impl ScalarScenario {
    pub fn time_invariant(
        horizon: usize,
        p: ScalarStageParams,
        g0_terminal: f64,
        g1_terminal: f64,
    ) -> Self {
        let rep = |x: f64| vec![x; horizon];
        ScalarScenario {
            horizon,
            e: rep(p.e),
            b: rep(p.b),
            h: rep(p.h),
            g0: rep(p.g0),
            g1: rep(p.g1),
            d: rep(p.d),
            a: rep(p.a),
            m: rep(p.m),
            n: rep(p.n),
            g0_terminal,
            g1_terminal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.horizon;
        let seqs: [(&str, &Vec<f64>); 9] = [
            ("E", &self.e),
            ("B", &self.b),
            ("H", &self.h),
            ("G0", &self.g0),
            ("G1", &self.g1),
            ("d", &self.d),
            ("a", &self.a),
            ("M", &self.m),
            ("N", &self.n),
        ];
        for (name, seq) in seqs {
            if seq.len() != l {
                return Err(FlipDynError::InvalidInput(format!(
                    "{name} has {} entries, expected {l}",
                    seq.len()
                )));
            }
            for &x in seq {
                ensure_finite(name, x)?;
            }
        }
        for (name, seq) in [("G0", &self.g0), ("G1", &self.g1), ("d", &self.d), ("a", &self.a)] {
            if seq.iter().any(|&x| x < 0.0) {
                return Err(FlipDynError::InvalidInput(format!("{name} must be non-negative")));
            }
        }
        for (name, seq) in [("M", &self.m), ("N", &self.n)] {
            if seq.iter().any(|&x| x <= 0.0) {
                return Err(FlipDynError::InvalidInput(format!("{name} must be positive")));
            }
        }
        for (name, x) in [("G0 terminal", self.g0_terminal), ("G1 terminal", self.g1_terminal)] {
            ensure_finite(name, x)?;
            if x < 0.0 {
                return Err(FlipDynError::InvalidInput(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Same scenario with N replaced by a constant.
    pub fn with_control_cost(&self, n: f64) -> Self {
        ScalarScenario { n: vec![n; self.horizon], ..self.clone() }
    }

    /// Same scenario with the adversary state cost G¹ (stage and terminal)
    /// replaced by a constant.
    pub fn with_state_cost(&self, g: f64) -> Self {
        ScalarScenario { g1: vec![g; self.horizon], g1_terminal: g, ..self.clone() }
    }

    /// Stage data at step k (1-based) for the given next-step values.
    pub fn stage(&self, k: usize, p0_next: f64, p1_next: f64) -> ScalarStage {
        let i = k - 1;
        ScalarStage {
            e: self.e[i],
            b: self.b[i],
            h: self.h[i],
            p0_next,
            p1_next,
            m: self.m[i],
            n: self.n[i],
            d: self.d[i],
            a: self.a[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarStep {
    pub k: usize,
    pub p0: f64,
    pub p1: f64,
    /// Root of the η residual; present only when the mixed branch came from one.
    pub eta: Option<f64>,
    pub branch: Branch,
    pub regime: [StageRegime; 2],
    /// Defender takeover probability in flip states 0 and 1.
    pub beta: [f64; 2],
    /// Adversary takeover probability in flip states 0 and 1.
    pub gamma: [f64; 2],
    pub k_gain: f64,
    pub w_gain: f64,
    pub check_p: f64,
}

impl ScalarStep {
    /// Mixed at this step through an actual η root.
    pub fn is_mixed(&self) -> bool {
        self.eta.is_some() && self.branch == Branch::Mixed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSolution {
    /// p⁰_k for k = 1..=L+1 at index k-1.
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    /// Step data for k = 1..=L at index k-1.
    pub steps: Vec<ScalarStep>,
}

impl ScalarSolution {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, k: usize) -> &ScalarStep {
        &self.steps[k - 1]
    }

    pub fn value(&self, k: usize, alpha: FlipState) -> f64 {
        match alpha {
            FlipState::Defender => self.p0[k - 1],
            FlipState::Adversary => self.p1[k - 1],
        }
    }

    pub fn all_mixed(&self) -> bool {
        self.steps.iter().all(ScalarStep::is_mixed)
    }
}

/// Steps computed from k = L downward, plus the error that stopped the pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPass {
    pub steps: Vec<ScalarStep>,
    pub error: Option<FlipDynError>,
}

fn select_pure(stage: &ScalarStage) -> (Branch, f64, f64) {
    for branch in Branch::PURE_ORDER {
        let (k, w) = regime_gains_scalar(branch, stage, 0.0);
        if Branch::classify(stage.check_p(k, w), stage.d, stage.a) == branch {
            return (branch, k, w);
        }
    }
    let (k, w) = regime_gains_scalar(Branch::BothIdle, stage, 0.0);
    (Branch::classify(stage.check_p(k, w), stage.d, stage.a), k, w)
}

pub fn backward_step(
    k: usize,
    p0_next: f64,
    p1_next: f64,
    scenario: &ScalarScenario,
) -> Result<ScalarStep> {
    let stage = scenario.stage(k, p0_next, p1_next);
    step_from_stage(k, &stage, scenario.g0[k - 1], scenario.g1[k - 1])
}

/// One backward step from explicit stage data and state costs G⁰_k, G¹_k.
pub fn step_from_stage(k: usize, stage: &ScalarStage, g0: f64, g1: f64) -> Result<ScalarStep> {
    if !stage.second_order_holds() {
        return Err(FlipDynError::FeasibilityViolated { k });
    }
    let (eta, kg, wg) = match solve_eta_scalar(stage).mixed() {
        Some(sol) => (Some(sol.eta), sol.k[(0, 0)], sol.w[(0, 0)]),
        None => {
            let (_, kg, wg) = select_pure(stage);
            (None, kg, wg)
        }
    };
    let bc = stage.e + stage.b * kg;
    let wc = stage.e + stage.h * wg;
    let v0 = bc * bc * stage.p0_next;
    let v1 = wc * wc * stage.p1_next;
    let s0 = ne_takeover(FlipState::Defender, v0, v1, stage.d, stage.a)?;
    let s1 = ne_takeover(FlipState::Adversary, v0, v1, stage.d, stage.a)?;
    Ok(ScalarStep {
        k,
        p0: g0 + kg * kg * stage.m + s0.value,
        p1: g1 - wg * wg * stage.n + s1.value,
        eta,
        branch: Branch::classify(v1 - v0, stage.d, stage.a),
        regime: [s0.regime, s1.regime],
        beta: [s0.defender_takeover(), s1.defender_takeover()],
        gamma: [s0.adversary_takeover(), s1.adversary_takeover()],
        k_gain: kg,
        w_gain: wg,
        check_p: v1 - v0,
    })
}

/// Runs the recursion from k = L down to 1, stopping at the first error.
pub fn backward_pass(scenario: &ScalarScenario) -> ScalarPass {
    let mut steps = Vec::with_capacity(scenario.horizon);
    let (mut p0, mut p1) = (scenario.g0_terminal, scenario.g1_terminal);
    for k in (1..=scenario.horizon).rev() {
        match backward_step(k, p0, p1, scenario) {
            Ok(step) => {
                p0 = step.p0;
                p1 = step.p1;
                steps.push(step);
            }
            Err(error) => return ScalarPass { steps, error: Some(error) },
        }
    }
    ScalarPass { steps, error: None }
}

pub fn solve(scenario: &ScalarScenario) -> Result<ScalarSolution> {
    scenario.validate()?;
    let pass = backward_pass(scenario);
    if let Some(error) = pass.error {
        return Err(error);
    }
    let mut steps = pass.steps;
    steps.reverse();
    let mut p0: Vec<f64> = steps.iter().map(|s| s.p0).collect();
    let mut p1: Vec<f64> = steps.iter().map(|s| s.p1).collect();
    p0.push(scenario.g0_terminal);
    p1.push(scenario.g1_terminal);
    Ok(ScalarSolution { p0, p1, steps })
}
