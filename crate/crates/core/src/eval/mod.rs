//! Evaluation: point metrics, the repeated-run experiment protocol, and
//! figure-ready curve export. All metrics operate in un-normalized
//! log10-hours so values are directly comparable across models.

mod experiment;
mod plot;

pub use experiment::{
    render_summary_table, run_experiment, sample_context, ContextSpec, EvalProtocol,
    ExperimentReport, MeanStd, ModelSet, RunAggregate,
};
pub use plot::{export_plot_data, read_plot_csv, write_plot_csv, PlotKind, PlotRow};

use serde::{Deserialize, Serialize};

use crate::cnp::{nll_loss, GaussianPrediction};
use crate::error::{Error, Result};

/// Interval half-width multiplier for nominal 95% coverage.
pub const Z_95: f64 = 1.96;

/// Pooled test metrics for one model in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean absolute error in log10-hours.
    pub e: f64,
    /// Mean per-point Gaussian log-likelihood; absent for models without a
    /// predictive distribution.
    pub li: Option<f64>,
    /// Fraction of targets inside the central 95% interval; absent likewise.
    pub p95: Option<f64>,
    /// Coefficient of determination over the pooled points.
    pub r2: f64,
    /// Number of pooled target points.
    pub n: usize,
}

fn check_lengths(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape_mismatch(
            what,
            format!("{a} values"),
            format!("{b}"),
        ));
    }
    if a == 0 {
        return Err(Error::Config(format!("{what}: empty input")));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths("mae", y.len(), y_hat.len())?;
    let total: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / y.len() as f64)
}

/// Mean per-point Gaussian log-density. Exactly the negative of the
/// training loss on the same inputs, by construction.
pub fn log_likelihood(pred: &GaussianPrediction, y: &[f64]) -> Result<f64> {
    Ok(-nll_loss(pred, y)?)
}

/// Fraction of observations inside the central interval `mu +- z sigma`
/// (inclusive at the endpoints).
pub fn coverage(pred: &GaussianPrediction, y: &[f64], z: f64) -> Result<f64> {
    check_lengths("coverage", pred.len(), y.len())?;
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Config(format!(
            "interval multiplier must be positive, got {z}"
        )));
    }
    let covered = pred
        .means
        .iter()
        .zip(&pred.stds)
        .zip(y)
        .filter(|((mu, sigma), obs)| {
            **obs >= **mu - z * **sigma && **obs <= **mu + z * **sigma
        })
        .count();
    Ok(covered as f64 / y.len() as f64)
}

/// Coverage of the nominal 95% interval (z = 1.96).
pub fn coverage_p95(pred: &GaussianPrediction, y: &[f64]) -> Result<f64> {
    coverage(pred, y, Z_95)
}

/// Coefficient of determination, `1 - SS_res / SS_tot`.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths("r_squared", y.len(), y_hat.len())?;
    if y.len() < 2 {
        return Err(Error::Config("r_squared needs at least 2 points".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Domain(
            "r_squared is undefined for constant observations".into(),
        ));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
