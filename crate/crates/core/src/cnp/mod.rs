//! Conditional neural process: a context set is encoded point-by-point and
//! mean-aggregated into one representation vector, and each query point is
//! decoded (together with that representation) into an independent Gaussian.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use train::{episode_loss_and_grads, meta_train, EpisodeConfig, EpochLog, TrainLog};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, MlpParams};

/// One observation in normalized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

impl LabeledPoint {
    pub fn is_finite(&self) -> bool {
        self.y.is_finite() && self.x.iter().all(|v| v.is_finite())
    }
}

/// The observed points a prediction is conditioned on. May be empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextSet {
    pub points: Vec<LabeledPoint>,
}

impl ContextSet {
    pub fn new(points: Vec<LabeledPoint>) -> Self {
        ContextSet { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Query locations. Non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub xs: Vec<Vec<f64>>,
}

impl TargetSet {
    pub fn new(xs: Vec<Vec<f64>>) -> Self {
        TargetSet { xs }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Aggregated context representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub r: Vec<f64>,
}

/// Per-point factorized Gaussian predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrediction {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl GaussianPrediction {
    pub fn new(means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if means.len() != stds.len() {
            return Err(Error::shape_mismatch(
                "gaussian prediction",
                format!("{} stds", means.len()),
                format!("{}", stds.len()),
            ));
        }
        if let Some(bad) = stds.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Numeric(format!(
                "predictive std must be positive and finite, got {bad}"
            )));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numeric("non-finite predictive mean".into()));
        }
        Ok(GaussianPrediction { means, stds })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// Architecture hyperparameters shared by checkpointing and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnpConfig {
    pub d_x: usize,
    pub d_r: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub activation: Activation,
    pub sigma_floor: f64,
}

impl Default for CnpConfig {
    fn default() -> Self {
        CnpConfig {
            d_x: 2,
            d_r: 64,
            encoder_hidden: vec![64, 64, 64],
            decoder_hidden: vec![64, 64, 64],
            activation: Activation::Tanh,
            sigma_floor: 0.01,
        }
    }
}

impl CnpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.d_r == 0 {
            return Err(Error::Config("d_x and d_r must be positive".into()));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_floor must be positive, got {}",
                self.sigma_floor
            )));
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder + decoder networks plus the config they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CnpModel {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub config: CnpConfig,
}

impl CnpModel {
    /// Fresh model with seeded initialization.
    pub fn init<R: Rng + ?Sized>(config: CnpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut enc_sizes = vec![config.d_x + 1];
        enc_sizes.extend_from_slice(&config.encoder_hidden);
        enc_sizes.push(config.d_r);
        let mut dec_sizes = vec![config.d_x + config.d_r];
        dec_sizes.extend_from_slice(&config.decoder_hidden);
        dec_sizes.push(2);
        let encoder = MlpParams::init(&enc_sizes, config.activation, rng);
        let decoder = MlpParams::init(&dec_sizes, config.activation, rng);
        Ok(CnpModel {
            encoder,
            decoder,
            config,
        })
    }

    /// Checks network shapes against the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.encoder.validate()?;
        self.decoder.validate()?;
        let checks = [
            ("encoder input", self.encoder.d_in(), self.config.d_x + 1),
            ("encoder output", self.encoder.d_out(), self.config.d_r),
            (
                "decoder input",
                self.decoder.d_in(),
                self.config.d_x + self.config.d_r,
            ),
            ("decoder output", self.decoder.d_out(), 2),
        ];
        for (what, actual, expected) in checks {
            if actual != expected {
                return Err(Error::shape_mismatch(
                    what,
                    format!("{expected}"),
                    format!("{actual}"),
                ));
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Negative log-density of one Gaussian observation. Both the training loss
/// and the reported log-likelihood metric are built from this exact
/// expression so they agree bit-for-bit up to sign.
#[inline]
pub(crate) fn gauss_point_nll(mu: f64, sigma: f64, y: f64) -> f64 {
    let d = y - mu;
    0.5 * LN_2PI + sigma.ln() + d * d / (2.0 * sigma * sigma)
}

/// Mean NLL of `ys` under a raw two-column network output (column 0 the
/// mean head, column 1 the raw std head before `floor + softplus`), plus
/// the loss gradient with respect to that output. Shared by the episodic
/// trainer and the pooled baseline so both heads behave identically.
pub(crate) fn gaussian_head(out: &Matrix, ys: &[f64], floor: f64) -> Result<(f64, Matrix)> {
    let n = ys.len();
    if out.rows() != n || out.cols() != 2 {
        return Err(Error::shape_mismatch(
            "gaussian head",
            format!("{n}x2 outputs"),
            format!("{}x{}", out.rows(), out.cols()),
        ));
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, 2);
    for (t, y) in ys.iter().enumerate() {
        let mu = out.get(t, 0);
        let raw_s = out.get(t, 1);
        let sigma = floor + softplus(raw_s);
        loss += gauss_point_nll(mu, sigma, *y);
        let diff = mu - y;
        let d_mu = diff / (sigma * sigma) * inv_n;
        let d_sigma = (1.0 / sigma - diff * diff / (sigma * sigma * sigma)) * inv_n;
        grad.set(t, 0, d_mu);
        grad.set(t, 1, d_sigma * sigmoid(raw_s));
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("gaussian NLL is not finite ({loss})")));
    }
    Ok((loss, grad))
}

/// Stacks `[x_i || y_i]` rows and checks the feature width.
fn context_matrix(points: &[LabeledPoint], d_x: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(points.len(), d_x + 1);
    for (i, p) in points.iter().enumerate() {
        if p.x.len() != d_x {
            return Err(Error::shape_mismatch(
                "context point features",
                format!("d_x = {d_x}"),
                format!("{}", p.x.len()),
            ));
        }
        let row = m.row_mut(i);
        row[..d_x].copy_from_slice(&p.x);
        row[d_x] = p.y;
    }
    Ok(m)
}

/// Stacks `[x_t || r]` rows and checks widths.
fn decoder_input(xs: &[Vec<f64>], r: &[f64], d_x: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(xs.len(), d_x + r.len());
    for (i, x) in xs.iter().enumerate() {
        if x.len() != d_x {
            return Err(Error::shape_mismatch(
                "target point features",
                format!("d_x = {d_x}"),
                format!("{}", x.len()),
            ));
        }
        let row = m.row_mut(i);
        row[..d_x].copy_from_slice(x);
        row[d_x..].copy_from_slice(r);
    }
    Ok(m)
}

/// Mean-aggregated encoding of a context set. The empty context encodes to
/// the zero vector, which acts as the model's prior representation.
pub fn encode(model: &CnpModel, context: &ContextSet) -> Result<Representation> {
    let d_r = model.config.d_r;
    if context.is_empty() {
        return Ok(Representation { r: vec![0.0; d_r] });
    }
    let input = context_matrix(&context.points, model.config.d_x)?;
    let (h, _) = model.encoder.forward(&input)?;
    Ok(Representation {
        r: h.column_means(),
    })
}

/// Decodes each query point into an independent Gaussian. The std head is
/// `sigma_floor + softplus(raw)` so every std is strictly positive.
pub fn decode(
    model: &CnpModel,
    r: &Representation,
    targets: &TargetSet,
) -> Result<GaussianPrediction> {
    if targets.xs.is_empty() {
        return Err(Error::Config("target set must be non-empty".into()));
    }
    if r.r.len() != model.config.d_r {
        return Err(Error::shape_mismatch(
            "representation",
            format!("d_r = {}", model.config.d_r),
            format!("{}", r.r.len()),
        ));
    }
    let input = decoder_input(&targets.xs, &r.r, model.config.d_x)?;
    let (out, _) = model.decoder.forward(&input)?;
    let n = targets.len();
    let mut means = Vec::with_capacity(n);
    let mut stds = Vec::with_capacity(n);
    for t in 0..n {
        means.push(out.get(t, 0));
        stds.push(model.config.sigma_floor + softplus(out.get(t, 1)));
    }
    GaussianPrediction::new(means, stds)
}

/// Mean negative log-likelihood of `ys` under a factorized Gaussian
/// prediction: `(1/n) sum_t [0.5 ln 2pi + ln sigma_t + (y_t - mu_t)^2 / (2 sigma_t^2)]`.
pub fn nll_loss(pred: &GaussianPrediction, ys: &[f64]) -> Result<f64> {
    if pred.len() != ys.len() {
        return Err(Error::shape_mismatch(
            "nll targets",
            format!("{} values", pred.len()),
            format!("{}", ys.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Config("nll over an empty prediction".into()));
    }
    let mut total = 0.0;
    for ((mu, sigma), y) in pred.means.iter().zip(&pred.stds).zip(ys) {
        total += gauss_point_nll(*mu, *sigma, *y);
    }
    Ok(total / ys.len() as f64)
}

/// Conditions on `context` and queries at `query`: `decode(encode(context))`.
pub fn predict(
    model: &CnpModel,
    context: &ContextSet,
    query: &TargetSet,
) -> Result<GaussianPrediction> {
    let r = encode(model, context)?;
    decode(model, &r, query)
}
