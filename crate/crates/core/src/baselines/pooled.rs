//! Pooled pretrained network: one mean/std net trained by Gaussian NLL on
//! the union of all meta-train points. It has no notion of a context set,
//! so its predictions cannot adapt to a new cast.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cnp::{gaussian_head, softplus, EpochLog, GaussianPrediction, TargetSet, TrainLog};
use crate::data::{FeaturizedTask, NormStats};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{adam_step, Activation, AdamState, MlpParams};
use crate::rng::substream;

/// The trained network plus the normalization it expects. The output head
/// follows the same convention as the CNP decoder: column 0 is the mean,
/// column 1 maps through `sigma_floor + softplus` to the std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledNn {
    pub net: MlpParams,
    pub sigma_floor: f64,
    pub norm_stats: NormStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PooledTrainConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub sigma_floor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for PooledTrainConfig {
    fn default() -> Self {
        PooledTrainConfig {
            hidden: vec![64, 64, 64],
            activation: Activation::Tanh,
            sigma_floor: 0.01,
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            patience: 20,
            seed: 0,
        }
    }
}

impl PooledTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_floor must be positive, got {}",
                self.sigma_floor
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

fn pool_points(tasks: &[FeaturizedTask], d_x: usize, what: &str) -> Result<(Matrix, Vec<f64>)> {
    let n: usize = tasks.iter().map(|t| t.points.len()).sum();
    if n == 0 {
        return Err(Error::Config(format!("{what} tasks contain no points")));
    }
    let mut xs = Matrix::zeros(n, d_x);
    let mut ys = Vec::with_capacity(n);
    let mut i = 0;
    for task in tasks {
        for p in &task.points {
            if p.x.len() != d_x {
                return Err(Error::shape_mismatch(
                    format!("point features in task {}", task.cast_code),
                    format!("d_x = {d_x}"),
                    format!("{}", p.x.len()),
                ));
            }
            xs.row_mut(i).copy_from_slice(&p.x);
            ys.push(p.y);
            i += 1;
        }
    }
    Ok((xs, ys))
}

fn dataset_nll(net: &MlpParams, xs: &Matrix, ys: &[f64], floor: f64) -> Result<f64> {
    let (out, _) = net.forward(xs)?;
    gaussian_head(&out, ys, floor).map(|(loss, _)| loss)
}

/// Trains the pooled network with minibatch Adam and early stopping on the
/// validation points' NLL. Returns the best snapshot and the epoch log.
pub fn pretrain_pooled(
    train: &[FeaturizedTask],
    validation: &[FeaturizedTask],
    norm_stats: &NormStats,
    cfg: &PooledTrainConfig,
) -> Result<(PooledNn, TrainLog)> {
    cfg.validate()?;
    norm_stats.validate()?;
    let d_x = train
        .iter()
        .chain(validation)
        .flat_map(|t| t.points.first())
        .map(|p| p.x.len())
        .next()
        .ok_or_else(|| Error::Config("no points to train on".into()))?;
    let (train_x, train_y) = pool_points(train, d_x, "meta-train")?;
    let (val_x, val_y) = pool_points(validation, d_x, "validation")?;

    let mut sizes = vec![d_x];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(2);
    let mut rng = substream(cfg.seed, 1, 0);
    let mut net = MlpParams::init(&sizes, cfg.activation, &mut rng);
    let mut log = TrainLog::default();
    let mut best: Option<(usize, f64, MlpParams)> = None;

    if cfg.epochs == 0 {
        let model = PooledNn {
            net,
            sigma_floor: cfg.sigma_floor,
            norm_stats: norm_stats.clone(),
        };
        return Ok((model, log));
    }

    let mut opt = AdamState::new(&net, cfg.learning_rate);
    let n = train_y.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut xs = Matrix::zeros(chunk.len(), d_x);
            let mut ys = Vec::with_capacity(chunk.len());
            for (row, &idx) in chunk.iter().enumerate() {
                xs.row_mut(row).copy_from_slice(train_x.row(idx));
                ys.push(train_y[idx]);
            }
            let (out, cache) = net.forward(&xs)?;
            let (loss, d_out) = gaussian_head(&out, &ys, cfg.sigma_floor)?;
            let (grads, _) = net.backward(&cache, &d_out)?;
            adam_step(&mut net, &grads, &mut opt)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        let train_nll = epoch_loss / n as f64;
        let val_nll = dataset_nll(&net, &val_x, &val_y, cfg.sigma_floor)?;
        log.epochs.push(EpochLog {
            epoch,
            train_nll,
            val_nll,
        });
        let improved = best.as_ref().is_none_or(|(_, b, _)| val_nll < *b);
        if improved {
            best = Some((epoch, val_nll, net.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (best_epoch, best_val, best_net) = best.expect("at least one epoch ran");
    log.best_epoch = Some(best_epoch);
    log.best_val_nll = Some(best_val);
    Ok((
        PooledNn {
            net: best_net,
            sigma_floor: cfg.sigma_floor,
            norm_stats: norm_stats.clone(),
        },
        log,
    ))
}

/// Predicts at the query points. There is no context argument: the pooled
/// model answers the same regardless of what else is known about a cast.
pub fn pooled_predict(model: &PooledNn, query: &TargetSet) -> Result<GaussianPrediction> {
    if query.xs.is_empty() {
        return Err(Error::Config("target set must be non-empty".into()));
    }
    let d_x = model.net.d_in();
    let mut xs = Matrix::zeros(query.len(), d_x);
    for (i, x) in query.xs.iter().enumerate() {
        if x.len() != d_x {
            return Err(Error::shape_mismatch(
                "query point features",
                format!("d_x = {d_x}"),
                format!("{}", x.len()),
            ));
        }
        xs.row_mut(i).copy_from_slice(x);
    }
    let (out, _) = model.net.forward(&xs)?;
    let mut means = Vec::with_capacity(query.len());
    let mut stds = Vec::with_capacity(query.len());
    for t in 0..query.len() {
        means.push(out.get(t, 0));
        stds.push(model.sigma_floor + softplus(out.get(t, 1)));
    }
    GaussianPrediction::new(means, stds)
}
