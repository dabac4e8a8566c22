//! The 2×2 takeover stage game.
//!
//! Rows are defender actions and columns adversary actions, both ordered
//! (Idle, Takeover). The defender minimizes and the adversary maximizes.

use std::fmt;

use crate::error::{ensure_finite, FlipDynError, Result};

/// Which player currently controls the resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlipState {
    Defender,
    Adversary,
}

impl FlipState {
    pub const ALL: [FlipState; 2] = [FlipState::Defender, FlipState::Adversary];

    pub fn index(self) -> usize {
        match self {
            FlipState::Defender => 0,
            FlipState::Adversary => 1,
        }
    }

    pub fn from_index(alpha: usize) -> Result<Self> {
        match alpha {
            0 => Ok(FlipState::Defender),
            1 => Ok(FlipState::Adversary),
            other => Err(FlipDynError::InvalidInput(format!(
                "flip state must be 0 or 1, got {other}"
            ))),
        }
    }

    /// Next flip state given both players' takeover actions.
    ///
    /// Simultaneous takeovers cancel; a lone takeover hands control to its
    /// author; otherwise control stays put.
    pub fn transition(self, defender_takes: bool, adversary_takes: bool) -> Self {
        let alpha = self.index() as u8;
        let (p0, p1) = (defender_takes as u8, adversary_takes as u8);
        let next = ((1 - p0) * (1 - p1) + p0 * p1) * alpha + (1 - p0) * (p0 + p1);
        if next == 0 {
            FlipState::Defender
        } else {
            FlipState::Adversary
        }
    }
}

impl fmt::Display for FlipState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Equilibrium branch of a stage game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StageRegime {
    MixedNE,
    PureAdvTakeover,
    PureDefTakeover,
    PureBothIdle,
    /// Only reported by [`solve_2x2_oracle`] for a (Takeover, Takeover) saddle.
    PureBothTakeover,
}

impl StageRegime {
    pub fn label(self) -> &'static str {
        match self {
            StageRegime::MixedNE => "mixed",
            StageRegime::PureAdvTakeover => "adv_takeover",
            StageRegime::PureDefTakeover => "def_takeover",
            StageRegime::PureBothIdle => "both_idle",
            StageRegime::PureBothTakeover => "both_takeover",
        }
    }
}

impl fmt::Display for StageRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostToGoMatrix {
    pub entries: [[f64; 2]; 2],
    pub alpha: FlipState,
}

impl CostToGoMatrix {
    /// Expected cost yᵀΞz.
    pub fn expected(&self, y: &[f64; 2], z: &[f64; 2]) -> f64 {
        let e = &self.entries;
        y[0] * (e[0][0] * z[0] + e[0][1] * z[1]) + y[1] * (e[1][0] * z[0] + e[1][1] * z[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageGameSolution {
    /// (P(Idle), P(Takeover)) for the defender.
    pub defender_strategy: [f64; 2],
    /// (P(Idle), P(Takeover)) for the adversary.
    pub adversary_strategy: [f64; 2],
    pub value: f64,
    pub regime: StageRegime,
}

impl StageGameSolution {
    pub fn defender_takeover(&self) -> f64 {
        self.defender_strategy[1]
    }

    pub fn adversary_takeover(&self) -> f64 {
        self.adversary_strategy[1]
    }
}

fn validate(v0_next: f64, v1_next: f64, d_cost: f64, a_cost: f64) -> Result<()> {
    ensure_finite("v0_next", v0_next)?;
    ensure_finite("v1_next", v1_next)?;
    ensure_finite("d_cost", d_cost)?;
    ensure_finite("a_cost", a_cost)?;
    if d_cost < 0.0 || a_cost < 0.0 {
        return Err(FlipDynError::InvalidInput(format!(
            "takeover costs must be non-negative (d = {d_cost}, a = {a_cost})"
        )));
    }
    Ok(())
}

pub fn build_cost_to_go(
    alpha: FlipState,
    v0_next: f64,
    v1_next: f64,
    d_cost: f64,
    a_cost: f64,
) -> Result<CostToGoMatrix> {
    validate(v0_next, v1_next, d_cost, a_cost)?;
    let entries = match alpha {
        FlipState::Defender => [
            [v0_next, v1_next - a_cost],
            [v0_next + d_cost, v0_next + d_cost - a_cost],
        ],
        FlipState::Adversary => [
            [v1_next, v1_next - a_cost],
            [v0_next + d_cost, v1_next + d_cost - a_cost],
        ],
    };
    Ok(CostToGoMatrix { entries, alpha })
}

const IDLE: [f64; 2] = [1.0, 0.0];
const TAKEOVER: [f64; 2] = [0.0, 1.0];

/// Closed-form equilibrium of the stage game.
///
/// The mixed branch needs the value gap `v1_next - v0_next` to exceed both
/// takeover costs strictly; ties fall to the pure branches.
pub fn ne_takeover(
    alpha: FlipState,
    v0_next: f64,
    v1_next: f64,
    d_cost: f64,
    a_cost: f64,
) -> Result<StageGameSolution> {
    validate(v0_next, v1_next, d_cost, a_cost)?;
    let check = v1_next - v0_next;
    let (d, a) = (d_cost, a_cost);
    let above_d = check > d;
    let above_a = check > a;
    let sol = match (alpha, above_d, above_a) {
        (FlipState::Defender, true, true) => StageGameSolution {
            defender_strategy: [a / check, 1.0 - a / check],
            adversary_strategy: [1.0 - d / check, d / check],
            value: v0_next + d - a * d / check,
            regime: StageRegime::MixedNE,
        },
        (FlipState::Adversary, true, true) => StageGameSolution {
            defender_strategy: [1.0 - a / check, a / check],
            adversary_strategy: [d / check, 1.0 - d / check],
            value: v1_next - a + a * d / check,
            regime: StageRegime::MixedNE,
        },
        (FlipState::Defender, false, true) => StageGameSolution {
            defender_strategy: IDLE,
            adversary_strategy: TAKEOVER,
            value: v1_next - a,
            regime: StageRegime::PureAdvTakeover,
        },
        (FlipState::Adversary, true, false) => StageGameSolution {
            defender_strategy: TAKEOVER,
            adversary_strategy: IDLE,
            value: v0_next + d,
            regime: StageRegime::PureDefTakeover,
        },
        (FlipState::Defender, _, _) => StageGameSolution {
            defender_strategy: IDLE,
            adversary_strategy: IDLE,
            value: v0_next,
            regime: StageRegime::PureBothIdle,
        },
        (FlipState::Adversary, _, _) => StageGameSolution {
            defender_strategy: IDLE,
            adversary_strategy: IDLE,
            value: v1_next,
            regime: StageRegime::PureBothIdle,
        },
    };
    Ok(sol)
}

/// Minimax solution of an arbitrary finite 2×2 cost matrix.
///
/// Pure saddle points are checked in row-major order; without one the
/// classical 2×2 mixed formula applies.
pub fn solve_2x2_oracle(m: &CostToGoMatrix) -> Result<StageGameSolution> {
    let e = &m.entries;
    for &x in e.iter().flatten() {
        ensure_finite("cost-to-go entry", x)?;
    }
    let pure = [IDLE, TAKEOVER];
    for i in 0..2 {
        for j in 0..2 {
            let x = e[i][j];
            let column_min = x <= e[1 - i][j];
            let row_max = x >= e[i][1 - j];
            if column_min && row_max {
                let regime = match (i, j) {
                    (0, 0) => StageRegime::PureBothIdle,
                    (0, 1) => StageRegime::PureAdvTakeover,
                    (1, 0) => StageRegime::PureDefTakeover,
                    _ => StageRegime::PureBothTakeover,
                };
                return Ok(StageGameSolution {
                    defender_strategy: pure[i],
                    adversary_strategy: pure[j],
                    value: x,
                    regime,
                });
            }
        }
    }
    let denom = e[0][0] + e[1][1] - e[0][1] - e[1][0];
    let value = (e[0][0] * e[1][1] - e[0][1] * e[1][0]) / denom;
    let y_idle = (e[1][1] - e[1][0]) / denom;
    let z_idle = (e[1][1] - e[0][1]) / denom;
    Ok(StageGameSolution {
        defender_strategy: [y_idle, 1.0 - y_idle],
        adversary_strategy: [z_idle, 1.0 - z_idle],
        value,
        regime: StageRegime::MixedNE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: FlipState = FlipState::Defender;
    const A: FlipState = FlipState::Adversary;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn builds_alpha0_matrix() {
        let m = build_cost_to_go(D, 0.0, 1.0, 0.45, 0.25).unwrap();
        let want = [[0.0, 0.75], [0.45, 0.20]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(m.entries[i][j], want[i][j]));
            }
        }
    }

    #[test]
    fn builds_alpha1_matrix() {
        let m = build_cost_to_go(A, 0.0, 1.0, 0.45, 0.25).unwrap();
        let want = [[1.0, 0.75], [0.45, 1.20]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(m.entries[i][j], want[i][j]));
            }
        }
    }

    #[test]
    fn zero_inputs_give_zero_matrix() {
        let m = build_cost_to_go(D, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(m.entries, [[0.0; 2]; 2]);
    }

    #[test]
    fn rejects_non_finite_and_negative_costs() {
        assert!(build_cost_to_go(D, f64::NAN, 0.0, 0.1, 0.1).is_err());
        assert!(ne_takeover(A, 0.0, f64::INFINITY, 0.1, 0.1).is_err());
        assert!(build_cost_to_go(D, 0.0, 1.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn mixed_example() {
        let s = ne_takeover(D, 0.0, 1.0, 0.45, 0.25).unwrap();
        assert_eq!(s.regime, StageRegime::MixedNE);
        assert!(close(s.defender_strategy[0], 0.25));
        assert!(close(s.adversary_strategy[0], 0.55));
        assert!(close(s.value, 0.3375));
        let m = build_cost_to_go(D, 0.0, 1.0, 0.45, 0.25).unwrap();
        let o = solve_2x2_oracle(&m).unwrap();
        assert!(close(o.value, s.value));
        assert!(close(o.defender_strategy[0], 0.25));
        assert!(close(o.adversary_strategy[0], 0.55));
    }

    #[test]
    fn both_idle_example() {
        let s = ne_takeover(D, 1.0, 1.2, 0.45, 0.25).unwrap();
        assert_eq!(s.regime, StageRegime::PureBothIdle);
        assert_eq!(s.defender_strategy, IDLE);
        assert_eq!(s.adversary_strategy, IDLE);
        assert_eq!(s.value, 1.0);
        let m = CostToGoMatrix { entries: [[1.0, 0.95], [1.45, 1.2]], alpha: D };
        assert!(close(solve_2x2_oracle(&m).unwrap().value, 1.0));
    }

    #[test]
    fn adversary_takeover_example() {
        let s = ne_takeover(D, 0.0, 0.28, 0.30, 0.25).unwrap();
        assert_eq!(s.regime, StageRegime::PureAdvTakeover);
        assert_eq!(s.defender_strategy, IDLE);
        assert_eq!(s.adversary_strategy, TAKEOVER);
        assert!(close(s.value, 0.03));
        let m = build_cost_to_go(D, 0.0, 0.28, 0.30, 0.25).unwrap();
        assert!(close(solve_2x2_oracle(&m).unwrap().value, 0.03));
    }

    #[test]
    fn ties_fall_to_pure_branches() {
        let s = ne_takeover(D, 0.0, 0.45, 0.45, 0.25).unwrap();
        assert_eq!(s.regime, StageRegime::PureAdvTakeover);
        let s = ne_takeover(A, 0.0, 0.25, 0.45, 0.25).unwrap();
        assert_eq!(s.regime, StageRegime::PureBothIdle);
    }

    #[test]
    fn oracle_constant_and_dominated() {
        let m = CostToGoMatrix { entries: [[1.0, 1.0], [1.0, 1.0]], alpha: D };
        let s = solve_2x2_oracle(&m).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.defender_strategy, IDLE);
        assert_eq!(s.adversary_strategy, IDLE);

        let m = CostToGoMatrix { entries: [[0.0, -1.0], [2.0, 1.0]], alpha: D };
        let s = solve_2x2_oracle(&m).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.regime, StageRegime::PureBothIdle);
    }

    #[test]
    fn transition_truth_table() {
        let cases = [
            (D, false, false, D),
            (D, false, true, A),
            (D, true, false, D),
            (D, true, true, D),
            (A, false, false, A),
            (A, false, true, A),
            (A, true, false, D),
            (A, true, true, A),
        ];
        for (alpha, p0, p1, next) in cases {
            assert_eq!(alpha.transition(p0, p1), next, "{alpha} {p0} {p1}");
        }
    }
}
