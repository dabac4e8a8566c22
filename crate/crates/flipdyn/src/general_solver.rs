//! Pointwise evaluation of the game value by full tree expansion under fixed
//! linear feedback policies.
//!
//! Each level branches into the defender closed loop (E + BK)x and the
//! adversary closed loop (E + HW)x, so a call at step k visits up to
//! 2^(L−k+1) states. Used as ground truth for the parametric solvers.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{FlipDynError, Result};
use crate::matrix_game::{ne_takeover, FlipState};
use crate::ndim_solver::{MatrixScenario, MatrixSolution};
use crate::scalar_solver::ScalarSolution;

pub const DEFAULT_MAX_DEPTH: usize = 16;

/// Linear feedback gains u_k = K_k x and w_k = W_k x for k = 1..=L.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPair {
    pub defender_gain_per_step: Vec<DMatrix<f64>>,
    pub adversary_gain_per_step: Vec<DMatrix<f64>>,
}

impl PolicyPair {
    pub fn from_scalar(solution: &ScalarSolution) -> Self {
        let one = |x: f64| DMatrix::from_element(1, 1, x);
        PolicyPair {
            defender_gain_per_step: solution.steps.iter().map(|s| one(s.k_gain)).collect(),
            adversary_gain_per_step: solution.steps.iter().map(|s| one(s.w_gain)).collect(),
        }
    }

    pub fn from_matrix(solution: &MatrixSolution) -> Self {
        PolicyPair {
            defender_gain_per_step: solution.steps.iter().map(|s| s.k_gain.clone()).collect(),
            adversary_gain_per_step: solution.steps.iter().map(|s| s.w_gain.clone()).collect(),
        }
    }
}

/// Values and stage strategies at one (k, x). Strategy arrays are indexed by
/// flip state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub v0: f64,
    pub v1: f64,
    pub y: [[f64; 2]; 2],
    pub z: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeOracle {
    pub max_depth: usize,
}

impl Default for TreeOracle {
    fn default() -> Self {
        TreeOracle { max_depth: DEFAULT_MAX_DEPTH }
    }
}

type Memo = HashMap<(usize, Vec<u64>), PointValue>;

impl TreeOracle {
    pub fn evaluate_point(
        &self,
        scenario: &MatrixScenario,
        policies: &PolicyPair,
        k: usize,
        x: &DVector<f64>,
    ) -> Result<PointValue> {
        let l = scenario.horizon;
        if k == 0 || k > l + 1 {
            return Err(FlipDynError::InvalidInput(format!("k = {k} outside 1..={}", l + 1)));
        }
        if x.len() != scenario.dim() {
            return Err(FlipDynError::InvalidInput(format!(
                "state has dimension {}, expected {}",
                x.len(),
                scenario.dim()
            )));
        }
        if policies.defender_gain_per_step.len() != l || policies.adversary_gain_per_step.len() != l
        {
            return Err(FlipDynError::InvalidInput("policy length differs from horizon".into()));
        }
        let depth = l + 1 - k;
        if depth > self.max_depth {
            return Err(FlipDynError::TreeDepthExceeded { depth, cap: self.max_depth });
        }
        let mut memo = Memo::new();
        expand(scenario, policies, k, x, &mut memo)
    }
}

pub fn evaluate_point(
    scenario: &MatrixScenario,
    policies: &PolicyPair,
    k: usize,
    x: &DVector<f64>,
) -> Result<PointValue> {
    TreeOracle::default().evaluate_point(scenario, policies, k, x)
}

const IDLE: [f64; 2] = [1.0, 0.0];

fn expand(
    scenario: &MatrixScenario,
    policies: &PolicyPair,
    k: usize,
    x: &DVector<f64>,
    memo: &mut Memo,
) -> Result<PointValue> {
    let key = (k, x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    if let Some(hit) = memo.get(&key) {
        return Ok(*hit);
    }
    let value = if k == scenario.horizon + 1 {
        PointValue {
            v0: quad(&scenario.g0_terminal, x),
            v1: quad(&scenario.g1_terminal, x),
            y: [IDLE; 2],
            z: [IDLE; 2],
        }
    } else {
        let i = k - 1;
        let kg = &policies.defender_gain_per_step[i];
        let wg = &policies.adversary_gain_per_step[i];
        let u = kg * x;
        let w = wg * x;
        let x_def = &scenario.e[i] * x + &scenario.b[i] * &u;
        let x_adv = &scenario.e[i] * x + &scenario.h[i] * &w;
        let v0_next = expand(scenario, policies, k + 1, &x_def, memo)?.v0;
        let v1_next = expand(scenario, policies, k + 1, &x_adv, memo)?.v1;
        let xx = x.dot(x);
        let (d, a) = (scenario.d[i] * xx, scenario.a[i] * xx);
        let s0 = ne_takeover(FlipState::Defender, v0_next, v1_next, d, a)?;
        let s1 = ne_takeover(FlipState::Adversary, v0_next, v1_next, d, a)?;
        PointValue {
            v0: quad(&scenario.g0[i], x) + quad(&scenario.m[i], &u) + s0.value,
            v1: quad(&scenario.g1[i], x) - quad(&scenario.n[i], &w) + s1.value,
            y: [s0.defender_strategy, s1.defender_strategy],
            z: [s0.adversary_strategy, s1.adversary_strategy],
        }
    };
    memo.insert(key, value);
    Ok(value)
}

fn quad(q: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(q * x))
}
