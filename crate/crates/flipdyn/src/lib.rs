//! Solver, calibrator and Monte-Carlo simulator for the FlipDyn takeover game
//! coupled to discrete-time linear-quadratic dynamics.
//!
//! Two players alternate control of a linear system. At each step both may
//! pay to take over; the owner then applies linear state feedback. The crate
//! computes the equilibrium takeover strategies, feedback gains and quadratic
//! value parameters by backward recursion.

pub mod calibration;
pub mod error;
pub mod general_solver;
pub mod lq_control;
pub mod matrix_game;
pub mod ndim_solver;
pub mod scalar_solver;
pub mod simulator;

pub use error::{FlipDynError, Result};
pub use matrix_game::{FlipState, StageGameSolution, StageRegime};
