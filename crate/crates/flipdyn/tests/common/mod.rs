#![allow(dead_code)]

use flipdyn::calibration::{dual_bisection, CalibrationOptions, NdimProblem};
use flipdyn::ndim_solver::{MatrixScenario, MatrixStageParams, NdimOptions};
use flipdyn::scalar_solver::{ScalarScenario, ScalarStageParams};
use nalgebra::DMatrix;
use proptest::prelude::*;

pub const DT: f64 = 0.1;

pub fn scalar_bench(e: f64, n: f64, g1: f64) -> ScalarScenario {
    let p = ScalarStageParams { e, b: DT, h: DT, g0: 1.0, g1, d: 0.45, a: 0.25, m: 0.65, n };
    ScalarScenario::time_invariant(20, p, 1.0, g1)
}

pub fn ndim_params(e: f64, nu: f64, g1: f64) -> MatrixStageParams {
    MatrixStageParams {
        e: DMatrix::from_row_slice(2, 2, &[e, DT, 0.0, e]),
        b: DMatrix::from_row_slice(2, 1, &[DT, 0.0]),
        h: DMatrix::from_row_slice(2, 1, &[DT, 0.0]),
        g0: DMatrix::identity(2, 2),
        g1: DMatrix::identity(2, 2) * g1,
        d: 0.45,
        a: 0.25,
        m: DMatrix::from_element(1, 1, 0.65),
        n: DMatrix::from_element(1, 1, nu),
    }
}

pub fn ndim_bench(e: f64, nu: f64, g1: f64) -> MatrixScenario {
    let p = ndim_params(e, nu, g1);
    let (g0t, g1t) = (p.g0.clone(), p.g1.clone());
    MatrixScenario::time_invariant(20, p, g0t, g1t)
}

prop_compose! {
    pub fn stage_params()(
        e in 0.5f64..1.1,
        b in 0.05f64..0.5,
        h in 0.05f64..0.5,
        g0 in 0.0f64..2.0,
        g1 in 0.0f64..2.0,
        d in 0.0f64..1.0,
        a in 0.0f64..1.0,
        m in 0.1f64..2.0,
        n in 0.2f64..3.0,
    ) -> ScalarStageParams {
        ScalarStageParams { e, b, h, g0, g1, d, a, m, n }
    }
}

prop_compose! {
    /// Time-varying scalar scenario with horizon up to `max_l`.
    pub fn scalar_scenario(max_l: usize)(
        steps in prop::collection::vec(stage_params(), 1..=max_l),
        g0_terminal in 0.0f64..2.0,
        g1_terminal in 0.0f64..2.0,
    ) -> ScalarScenario {
        let pick = |f: fn(&ScalarStageParams) -> f64| steps.iter().map(f).collect::<Vec<_>>();
        ScalarScenario {
            horizon: steps.len(),
            e: pick(|p| p.e),
            b: pick(|p| p.b),
            h: pick(|p| p.h),
            g0: pick(|p| p.g0),
            g1: pick(|p| p.g1),
            d: pick(|p| p.d),
            a: pick(|p| p.a),
            m: pick(|p| p.m),
            n: pick(|p| p.n),
            g0_terminal,
            g1_terminal,
        }
    }
}

/// Random 2-D base scenario; N and G¹ are placeholders to be calibrated.
#[derive(Debug, Clone, Copy)]
pub struct Ndim2Draw {
    pub horizon: usize,
    pub e: f64,
    pub coupling: f64,
    pub b: [f64; 2],
    pub h: [f64; 2],
    pub g0: [f64; 2],
    pub d: f64,
    pub a: f64,
    pub m: f64,
}

impl Ndim2Draw {
    pub fn scenario(&self) -> MatrixScenario {
        let p = MatrixStageParams {
            e: DMatrix::from_row_slice(2, 2, &[self.e, self.coupling, 0.0, self.e]),
            b: DMatrix::from_row_slice(2, 1, &self.b),
            h: DMatrix::from_row_slice(2, 1, &self.h),
            g0: DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&self.g0)),
            g1: DMatrix::identity(2, 2),
            d: self.d,
            a: self.a,
            m: DMatrix::from_element(1, 1, self.m),
            n: DMatrix::from_element(1, 1, 1.0),
        };
        let (g0t, g1t) = (p.g0.clone(), p.g1.clone());
        MatrixScenario::time_invariant(self.horizon, p, g0t, g1t)
    }

    /// The scenario moved to its calibrated mixed configuration, if any.
    pub fn all_mixed_scenario(&self) -> Option<MatrixScenario> {
        let problem = NdimProblem { scenario: self.scenario(), options: NdimOptions::default() };
        let r = dual_bisection(&problem, &CalibrationOptions::default()).ok()?;
        let sc = problem.scenario.with_control_cost(r.n_star).with_state_cost(r.g1_star?);
        let sol = flipdyn::ndim_solver::solve(&sc).ok()?;
        sol.all_mixed().then_some(sc)
    }
}

prop_compose! {
    pub fn ndim2_draw(max_l: usize)(
        horizon in 2..=max_l,
        e in 0.8f64..1.0,
        coupling in 0.05f64..0.15,
        b0 in 0.05f64..0.2,
        b1 in -0.05f64..0.05,
        h0 in 0.05f64..0.2,
        h1 in -0.05f64..0.05,
        g00 in 0.5f64..1.5,
        g01 in 0.5f64..1.5,
        d in 0.2f64..0.6,
        a in 0.1f64..0.4,
        m in 0.3f64..1.0,
    ) -> Ndim2Draw {
        Ndim2Draw { horizon, e, coupling, b: [b0, b1], h: [h0, h1], g0: [g00, g01], d, a, m }
    }
}
