//! CSV artifacts.
//!
//! Every file has a header row, `,` separators and LF line endings. Floats
//! are written with 17 significant digits (`{:.16e}`) so they parse back to
//! the same bits; absent values and NaN are written as `NA`.
//!
//! | file | columns |
//! |---|---|
//! | values.csv (scalar) | k, p0, p1, eta, regime_alpha0, regime_alpha1 |
//! | values.csv (n-dim) | k, p0_lambda1..n, p1_lambda1..n, eta_lower, eta_upper, regime_alpha0, regime_alpha1 |
//! | strategies.csv | k, alpha, defender_takeover, adversary_takeover |
//! | calibration.csv | configuration, phase, iteration, lo, hi, probe, accepted |
//! | calibration_result.csv | configuration, n_star, g1_star, converged, iterations, monotonicity_verified |
//! | per_step_costs.csv | k, n_star |
//! | rollups.csv | run, total_cost |
//! | summary.csv | runs, mean_cost, std_error, predicted_value, z_score |
//! | strategy_trace.csv | k, defender_takeover, adversary_takeover |
//!
//! Eigenvalue columns are in descending order, so `p0_lambda1` is the largest.
//! The row for k = L+1 in values.csv carries the terminal costs and `NA` in
//! the per-step columns.

use std::fs::File;
use std::path::Path;

use crate::error::CliError;

pub fn float(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn opt_float(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), float)
}

/// Writes a header and rows to `path`, creating parent directories.
pub fn write_csv<S: AsRef<str>>(
    path: &Path,
    header: &[S],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(header.iter().map(AsRef::as_ref))?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}
