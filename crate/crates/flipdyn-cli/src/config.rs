//! Scenario configuration files (TOML).
//!
//! ```toml
//! kind = "scalar"          # or "ndim"
//! horizon = 20
//! dt = 0.1
//!
//! [dynamics]
//! e = 0.85                 # generator; or explicit E, B, H
//!
//! [costs]
//! G0 = 1.0                 # scalar, or a row-major matrix
//! G1 = 1.0
//! d = 0.45
//! a = 0.25
//! M = 0.65
//! N = 0.39
//!
//! [terminal]
//! G0 = 1.0
//! G1 = 1.0
//!
//! [run]
//! seed = 2024
//! n_runs = 10000
//! x1 = 1.0                 # scalar or list
//! alpha1 = 0
//! rng = "chacha8"
//!
//! [calibration]
//! tolerance = 1e-3
//! regime_rule = "strict"   # or "definite"
//! ```
//!
//! With the generator `e`, a scalar scenario uses E = e and B = H = dt; an
//! n-dimensional one uses E = [[e, dt], [0, e]] and B = H = [[dt], [0]].
//! A scalar given where a square matrix is expected means that multiple of
//! the identity.

use std::path::Path;

use flipdyn::calibration::CalibrationOptions;
use flipdyn::ndim_solver::{MatrixScenario, MatrixStageParams, NdimOptions, RegimeRule};
use flipdyn::scalar_solver::{ScalarScenario, ScalarStageParams};
use flipdyn::simulator::{RngFamily, SimulationOptions};
use flipdyn::FlipState;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const BUNDLED: [(&str, &str); 4] = [
    ("scalar_e085", include_str!("../configs/scalar_e085.toml")),
    ("scalar_e100", include_str!("../configs/scalar_e100.toml")),
    ("ndim_e085", include_str!("../configs/ndim_e085.toml")),
    ("ndim_e100", include_str!("../configs/ndim_e100.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Scalar,
    Ndim,
}

/// A number or a row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

/// A number or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorValue {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e_matrix: Option<Value>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Value>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Costs {
    #[serde(rename = "G0")]
    pub g0: Value,
    #[serde(rename = "G1")]
    pub g1: Value,
    pub d: f64,
    pub a: f64,
    #[serde(rename = "M")]
    pub m: Value,
    #[serde(rename = "N")]
    pub n: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Terminal {
    #[serde(rename = "G0")]
    pub g0: Value,
    #[serde(rename = "G1")]
    pub g1: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    pub x1: VectorValue,
    #[serde(default)]
    pub alpha1: u8,
    #[serde(default = "default_rng")]
    pub rng: String,
}

fn default_runs() -> usize {
    1000
}

fn default_rng() -> String {
    RngFamily::default().name().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleName {
    #[default]
    Strict,
    Definite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub regime_rule: RuleName,
    /// Fixed upper bracket for N.
    #[serde(rename = "N_hi", default, skip_serializing_if = "Option::is_none")]
    pub n_hi: Option<f64>,
    /// Fixed upper bracket for the G¹ scale.
    #[serde(rename = "G1_hi", default, skip_serializing_if = "Option::is_none")]
    pub g1_hi: Option<f64>,
}

fn default_tolerance() -> f64 {
    flipdyn::calibration::DEFAULT_TOLERANCE
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration { tolerance: default_tolerance(), regime_rule: RuleName::default(), n_hi: None, g1_hi: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: Kind,
    pub horizon: usize,
    pub dt: f64,
    pub dynamics: Dynamics,
    pub costs: Costs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Terminal>,
    pub run: Run,
    #[serde(default)]
    pub calibration: Calibration,
}

/// A scenario built from a config.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Scalar(ScalarScenario),
    Ndim(MatrixScenario),
}

impl ScenarioConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config { origin: origin.to_string(), message: e.to_string() })
    }

    /// Reads `source` as a file path, or as a bundled config name.
    pub fn load(source: &str) -> Result<Self, CliError> {
        let path = Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            return Self::parse(&text, source);
        }
        match bundled(source) {
            Some(text) => Self::parse(text, source),
            None => Err(CliError::Config {
                origin: source.to_string(),
                message: "no such file or bundled config".into(),
            }),
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config { origin: "serializer".into(), message: e.to_string() })
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let s = match self.kind {
            Kind::Scalar => Scenario::Scalar(self.scalar_scenario()?),
            Kind::Ndim => Scenario::Ndim(self.matrix_scenario()?),
        };
        match &s {
            Scenario::Scalar(sc) => sc.validate()?,
            Scenario::Ndim(sc) => sc.validate()?,
        }
        Ok(s)
    }

    fn terminal(&self) -> (&Value, &Value) {
        match &self.terminal {
            Some(t) => (&t.g0, &t.g1),
            None => (&self.costs.g0, &self.costs.g1),
        }
    }

    fn scalar_scenario(&self) -> Result<ScalarScenario, CliError> {
        let dy = &self.dynamics;
        let e = match (&dy.e_matrix, dy.e) {
            (Some(v), _) => scalar_of("E", v)?,
            (None, Some(e)) => e,
            (None, None) => return Err(invalid("dynamics needs E or the generator e")),
        };
        let b = dy.b.as_ref().map(|v| scalar_of("B", v)).transpose()?.unwrap_or(self.dt);
        let h = dy.h.as_ref().map(|v| scalar_of("H", v)).transpose()?.unwrap_or(self.dt);
        let c = &self.costs;
        let p = ScalarStageParams {
            e,
            b,
            h,
            g0: scalar_of("G0", &c.g0)?,
            g1: scalar_of("G1", &c.g1)?,
            d: c.d,
            a: c.a,
            m: scalar_of("M", &c.m)?,
            n: scalar_of("N", &c.n)?,
        };
        let (t0, t1) = self.terminal();
        Ok(ScalarScenario::time_invariant(self.horizon, p, scalar_of("terminal G0", t0)?, scalar_of("terminal G1", t1)?))
    }

    fn matrix_scenario(&self) -> Result<MatrixScenario, CliError> {
        let dy = &self.dynamics;
        let dt = self.dt;
        let e = match (&dy.e_matrix, dy.e) {
            (Some(Value::Matrix(rows)), _) => matrix_of("E", rows)?,
            (Some(Value::Scalar(_)), _) => return Err(invalid("E must be a matrix for kind = \"ndim\"")),
            (None, Some(e)) => DMatrix::from_row_slice(2, 2, &[e, dt, 0.0, e]),
            (None, None) => return Err(invalid("dynamics needs E or the generator e")),
        };
        let n = e.nrows();
        let column = |name: &str, v: &Option<Value>| -> Result<DMatrix<f64>, CliError> {
            match v {
                Some(Value::Matrix(rows)) => matrix_of(name, rows),
                Some(Value::Scalar(_)) => Err(invalid(&format!("{name} must be a matrix for kind = \"ndim\""))),
                None if n == 2 => Ok(DMatrix::from_row_slice(2, 1, &[dt, 0.0])),
                None => Err(invalid(&format!("{name} is required when E is not 2×2"))),
            }
        };
        let b = column("B", &dy.b)?;
        let h = column("H", &dy.h)?;
        let c = &self.costs;
        let p = MatrixStageParams {
            g0: square("G0", &c.g0, n)?,
            g1: square("G1", &c.g1, n)?,
            d: c.d,
            a: c.a,
            m: square("M", &c.m, b.ncols())?,
            n: square("N", &c.n, h.ncols())?,
            e,
            b,
            h,
        };
        let (t0, t1) = self.terminal();
        Ok(MatrixScenario::time_invariant(self.horizon, p, square("terminal G0", t0, n)?, square("terminal G1", t1, n)?))
    }

    pub fn x1(&self, dim: usize) -> Result<DVector<f64>, CliError> {
        let x = match &self.run.x1 {
            VectorValue::Scalar(v) => DVector::from_element(dim, *v),
            VectorValue::List(v) => DVector::from_column_slice(v),
        };
        if x.len() != dim {
            return Err(invalid(&format!("x1 has {} entries, expected {dim}", x.len())));
        }
        Ok(x)
    }

    pub fn alpha1(&self) -> Result<FlipState, CliError> {
        Ok(FlipState::from_index(self.run.alpha1 as usize)?)
    }

    pub fn ndim_options(&self) -> NdimOptions {
        let regime_rule = match self.calibration.regime_rule {
            RuleName::Strict => RegimeRule::Strict,
            RuleName::Definite => RegimeRule::Definite,
        };
        NdimOptions { regime_rule }
    }

    pub fn calibration_options(&self) -> CalibrationOptions {
        CalibrationOptions {
            tolerance: self.calibration.tolerance,
            control_cost_hi: self.calibration.n_hi,
            state_cost_hi: self.calibration.g1_hi,
        }
    }

    pub fn simulation_options(&self) -> Result<SimulationOptions, CliError> {
        Ok(SimulationOptions {
            n_runs: self.run.n_runs,
            master_seed: self.run.seed,
            rng: self.run.rng.parse()?,
        })
    }
}

pub fn bundled(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".toml").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == stem).map(|(_, text)| *text)
}

fn invalid(message: &str) -> CliError {
    CliError::Solver(flipdyn::FlipDynError::InvalidInput(message.to_string()))
}

fn scalar_of(name: &str, v: &Value) -> Result<f64, CliError> {
    match v {
        Value::Scalar(x) => Ok(*x),
        Value::Matrix(rows) if rows.len() == 1 && rows[0].len() == 1 => Ok(rows[0][0]),
        Value::Matrix(_) => Err(invalid(&format!("{name} must be a number for kind = \"scalar\""))),
    }
}

fn matrix_of(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(&format!("{name} must be a non-empty rectangular matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn square(name: &str, v: &Value, n: usize) -> Result<DMatrix<f64>, CliError> {
    match v {
        Value::Scalar(x) => Ok(DMatrix::identity(n, n) * *x),
        Value::Matrix(rows) => {
            let m = matrix_of(name, rows)?;
            if m.shape() != (n, n) {
                return Err(invalid(&format!("{name} must be {n}×{n}")));
            }
            Ok(m)
        }
    }
}
