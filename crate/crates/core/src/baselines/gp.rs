//! Exact Gaussian-process regression with a squared-exponential kernel,
//! hyperparameters chosen by log-marginal-likelihood grid search.

use serde::{Deserialize, Serialize};

use crate::cnp::{ContextSet, GaussianPrediction, TargetSet};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, solve_lower, solve_lower_transpose, Matrix};

const JITTER: f64 = 1e-9;
/// Predictive stds are floored here so a noiseless interpolating GP still
/// yields a valid Gaussian.
const MIN_STD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpKernel {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpKernel {
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::Config(format!(
                "lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::Config(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::Config(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// `s^2 exp(-||a - b||^2 / (2 l^2))`
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-sq / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }
}

/// Candidate hyperparameters for the grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpGrid {
    pub lengthscales: Vec<f64>,
    pub signal_variances: Vec<f64>,
    pub noise_variances: Vec<f64>,
}

impl Default for GpGrid {
    fn default() -> Self {
        // ten log-spaced lengthscales from 0.1 to 3
        let n = 10;
        let (lo, hi) = (0.1f64.log10(), 3.0f64.log10());
        let lengthscales = (0..n)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect();
        GpGrid {
            lengthscales,
            signal_variances: vec![0.25, 1.0, 4.0],
            noise_variances: vec![1e-4, 1e-2, 1e-1],
        }
    }
}

impl GpGrid {
    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty()
            || self.signal_variances.is_empty()
            || self.noise_variances.is_empty()
        {
            return Err(Error::Config("hyperparameter grid must be non-empty".into()));
        }
        Ok(())
    }
}

/// A fitted GP: chosen kernel, the conditioning data, and the cached
/// Cholesky factor of `K + n^2 I` (plus jitter if it was needed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub kernel: GpKernel,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub log_marginal_likelihood: f64,
    chol: Matrix,
    alpha: Vec<f64>,
    jitter: f64,
}

struct Factored {
    chol: Matrix,
    alpha: Vec<f64>,
    lml: f64,
    jitter: f64,
}

fn try_factor(kernel: &GpKernel, x: &[Vec<f64>], y: &[f64]) -> Result<Factored> {
    let m = x.len();
    let mut gram = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            gram.set(i, j, kernel.eval(&x[i], &x[j]));
        }
    }
    let factor = |extra: f64| -> Result<Matrix> {
        let mut k = gram.clone();
        for i in 0..m {
            k.set(i, i, k.get(i, i) + kernel.noise_variance + extra);
        }
        cholesky(&k)
    };
    let (chol, jitter) = match factor(0.0) {
        Ok(l) => (l, 0.0),
        Err(_) => (factor(JITTER)?, JITTER),
    };

    // alpha = (K + n^2 I)^{-1} y via two triangular solves; the half-solved
    // vector gives the data-fit term of the marginal likelihood directly
    let half = solve_lower(&chol, y)?;
    let mut log_det_half = 0.0;
    for i in 0..m {
        log_det_half += chol.get(i, i).ln();
    }
    let fit_term: f64 = half.iter().map(|v| v * v).sum();
    let lml = -0.5 * fit_term - log_det_half - 0.5 * m as f64 * crate::cnp::LN_2PI;
    let alpha = solve_lower_transpose(&chol, &half)?;
    Ok(Factored {
        chol,
        alpha,
        lml,
        jitter,
    })
}

/// Fits a GP to the context by trying every grid combination and keeping the
/// one with the highest exact log marginal likelihood. Ties keep the first
/// candidate in grid order, so the search is deterministic.
pub fn gp_fit(context: &ContextSet, grid: &GpGrid) -> Result<GpModel> {
    grid.validate()?;
    if context.is_empty() {
        return Err(Error::Data("GP fit needs a non-empty context".into()));
    }
    let d_x = context.points[0].x.len();
    for p in &context.points {
        if p.x.len() != d_x {
            return Err(Error::shape_mismatch(
                "context point features",
                format!("d_x = {d_x}"),
                format!("{}", p.x.len()),
            ));
        }
        if !p.is_finite() {
            return Err(Error::Data("non-finite context point".into()));
        }
    }
    let x: Vec<Vec<f64>> = context.points.iter().map(|p| p.x.clone()).collect();
    let y: Vec<f64> = context.points.iter().map(|p| p.y).collect();

    let mut best: Option<(GpKernel, Factored)> = None;
    for &lengthscale in &grid.lengthscales {
        for &signal_variance in &grid.signal_variances {
            for &noise_variance in &grid.noise_variances {
                let kernel = GpKernel {
                    lengthscale,
                    signal_variance,
                    noise_variance,
                };
                kernel.validate()?;
                let Ok(factored) = try_factor(&kernel, &x, &y) else {
                    continue;
                };
                if best.as_ref().is_none_or(|(_, b)| factored.lml > b.lml) {
                    best = Some((kernel, factored));
                }
            }
        }
    }
    let (kernel, factored) = best.ok_or_else(|| {
        Error::Factorization(
            "no grid point produced a positive-definite kernel matrix".into(),
        )
    })?;
    Ok(GpModel {
        kernel,
        x,
        y,
        log_marginal_likelihood: factored.lml,
        chol: factored.chol,
        alpha: factored.alpha,
        jitter: factored.jitter,
    })
}

/// Exact GP posterior at the query points. The reported variance is for a
/// new observation (latent variance plus noise), matching the data-level
/// sigma convention the other models use.
pub fn gp_predict(model: &GpModel, query: &TargetSet) -> Result<GaussianPrediction> {
    if query.xs.is_empty() {
        return Err(Error::Config("target set must be non-empty".into()));
    }
    let d_x = model.x[0].len();
    let m = model.x.len();
    let mut means = Vec::with_capacity(query.len());
    let mut stds = Vec::with_capacity(query.len());
    for q in &query.xs {
        if q.len() != d_x {
            return Err(Error::shape_mismatch(
                "query point features",
                format!("d_x = {d_x}"),
                format!("{}", q.len()),
            ));
        }
        let k_star: Vec<f64> = (0..m).map(|i| model.kernel.eval(&model.x[i], q)).collect();
        let mean: f64 = k_star.iter().zip(&model.alpha).map(|(k, a)| k * a).sum();
        let v = solve_lower(&model.chol, &k_star)?;
        let reduction: f64 = v.iter().map(|x| x * x).sum();
        let mut latent = model.kernel.signal_variance - reduction;
        if latent < 0.0 {
            if latent >= -1e-10 {
                latent = 0.0;
            } else {
                return Err(Error::Numeric(format!(
                    "negative predictive variance {latent}"
                )));
            }
        }
        let var = latent + model.kernel.noise_variance;
        means.push(mean);
        stds.push(var.sqrt().max(MIN_STD));
    }
    GaussianPrediction::new(means, stds)
}
