//! Episodic maximum-likelihood training.
//!
//! Each episode samples one task, splits it into a context set and targets,
//! and takes one Adam step on the mean Gaussian NLL of the targets. Early
//! stopping tracks the NLL of a fixed bank of validation episodes and
//! returns the best snapshot.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cnp::{gaussian_head, CnpConfig, CnpModel, LabeledPoint};
use crate::data::FeaturizedTask;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{adam_step, AdamState, Gradients};
use crate::rng::substream;

/// How episodes are constructed and how long to train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    /// Context size is drawn uniformly from `m_min..=m_max` per episode.
    pub m_min: usize,
    pub m_max: usize,
    /// When true (the default), training targets are the full task: the
    /// held-back remainder plus the context points themselves.
    pub targets_include_context: bool,
    pub episodes_per_epoch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    /// Fixed validation episodes drawn once before training.
    pub val_episodes: usize,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            m_min: 2,
            m_max: 10,
            targets_include_context: true,
            episodes_per_epoch: 200,
            epochs: 100,
            learning_rate: 1e-3,
            patience: 20,
            val_episodes: 200,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_min < 1 || self.m_min > self.m_max {
            return Err(Error::Config(format!(
                "context-size range requires 1 <= m_min <= m_max, got [{}, {}]",
                self.m_min, self.m_max
            )));
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

/// One epoch's summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
}

/// Full training history plus the early-stopping outcome.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_val_nll: Option<f64>,
}

/// Mean per-point NLL plus encoder/decoder gradients for one episode.
/// Public so external suites can verify the analytic gradients against
/// finite differences.
///
/// The backward pass is chained by hand: loss head -> decoder -> mean
/// aggregation -> encoder. The representation gradient collects the
/// decoder-input gradient columns past `d_x` over all targets, and mean
/// aggregation spreads it back as `dr / m` to every encoded context row.
pub fn episode_loss_and_grads(
    model: &CnpModel,
    context: &[LabeledPoint],
    targets: &[LabeledPoint],
) -> Result<(f64, Gradients, Gradients)> {
    let d_x = model.config.d_x;
    let d_r = model.config.d_r;
    let n = targets.len();
    if n == 0 {
        return Err(Error::Config("episode has no target points".into()));
    }

    let m = context.len();
    let (r, enc_cache) = if m == 0 {
        (vec![0.0; d_r], None)
    } else {
        let mut enc_in = Matrix::zeros(m, d_x + 1);
        for (i, p) in context.iter().enumerate() {
            if p.x.len() != d_x {
                return Err(Error::shape_mismatch(
                    "context point features",
                    format!("d_x = {d_x}"),
                    format!("{}", p.x.len()),
                ));
            }
            let row = enc_in.row_mut(i);
            row[..d_x].copy_from_slice(&p.x);
            row[d_x] = p.y;
        }
        let (h, cache) = model.encoder.forward(&enc_in)?;
        (h.column_means(), Some(cache))
    };

    let mut dec_in = Matrix::zeros(n, d_x + d_r);
    for (t, p) in targets.iter().enumerate() {
        if p.x.len() != d_x {
            return Err(Error::shape_mismatch(
                "target point features",
                format!("d_x = {d_x}"),
                format!("{}", p.x.len()),
            ));
        }
        let row = dec_in.row_mut(t);
        row[..d_x].copy_from_slice(&p.x);
        row[d_x..].copy_from_slice(&r);
    }
    let (out, dec_cache) = model.decoder.forward(&dec_in)?;

    let ys: Vec<f64> = targets.iter().map(|p| p.y).collect();
    let (loss, d_out) = gaussian_head(&out, &ys, model.config.sigma_floor)?;
    let (dec_grads, d_dec_in) = model.decoder.backward(&dec_cache, &d_out)?;

    let enc_grads = match enc_cache {
        None => Gradients::zeros_like(&model.encoder),
        Some(cache) => {
            let mut dr = vec![0.0; d_r];
            for t in 0..n {
                let row = d_dec_in.row(t);
                for (j, dv) in dr.iter_mut().enumerate() {
                    *dv += row[d_x + j];
                }
            }
            let inv_m = 1.0 / m as f64;
            let mut dh = Matrix::zeros(m, d_r);
            for i in 0..m {
                let row = dh.row_mut(i);
                for (j, dv) in dr.iter().enumerate() {
                    row[j] = dv * inv_m;
                }
            }
            let (grads, _) = model.encoder.backward(&cache, &dh)?;
            grads
        }
    };

    Ok((loss, enc_grads, dec_grads))
}

/// A frozen episode: which task, which in-task point indices form the context.
struct ValEpisode {
    task: usize,
    context_idx: Vec<usize>,
}

/// Per-point NLL pooled over a fixed bank of validation episodes. Targets
/// are always the points held out of the context, so this measures
/// generalization within each task.
fn validation_nll(
    model: &CnpModel,
    tasks: &[FeaturizedTask],
    episodes: &[ValEpisode],
) -> Result<f64> {
    let mut total = 0.0;
    let mut points = 0usize;
    for ep in episodes {
        let task = &tasks[ep.task];
        let mut in_context = vec![false; task.points.len()];
        for &i in &ep.context_idx {
            in_context[i] = true;
        }
        let context: Vec<LabeledPoint> = ep.context_idx.iter().map(|&i| task.points[i].clone()).collect();
        let targets: Vec<LabeledPoint> = task
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_context[*i])
            .map(|(_, p)| p.clone())
            .collect();
        let (loss, _, _) = episode_loss_and_grads(model, &context, &targets)?;
        total += loss * targets.len() as f64;
        points += targets.len();
    }
    if points == 0 {
        return Err(Error::Config("no validation target points".into()));
    }
    Ok(total / points as f64)
}

fn check_task_sizes(tasks: &[FeaturizedTask], m_max: usize, what: &str) -> Result<()> {
    let offending: Vec<&str> = tasks
        .iter()
        .filter(|t| t.points.len() < m_max + 1)
        .map(|t| t.cast_code.as_str())
        .collect();
    if !offending.is_empty() {
        return Err(Error::Config(format!(
            "{what} tasks smaller than m_max + 1 = {}: {}",
            m_max + 1,
            offending.join(", ")
        )));
    }
    Ok(())
}

/// Trains a fresh model episodically and returns the snapshot with the best
/// validation NLL, together with the per-epoch log.
///
/// RNG streams are derived from `cfg.seed`: one for initialization, one for
/// the frozen validation episodes, one for training episodes. Two calls with
/// identical inputs produce bitwise-identical models and logs.
pub fn meta_train(
    train: &[FeaturizedTask],
    validation: &[FeaturizedTask],
    cfg: &EpisodeConfig,
    arch: &CnpConfig,
) -> Result<(CnpModel, TrainLog)> {
    cfg.validate()?;
    arch.validate()?;
    if train.is_empty() {
        return Err(Error::Config("meta-training needs at least one task".into()));
    }
    if validation.is_empty() {
        return Err(Error::Config("meta-training needs at least one validation task".into()));
    }
    check_task_sizes(train, cfg.m_max, "meta-train")?;
    check_task_sizes(validation, cfg.m_max, "validation")?;

    let mut init_rng = substream(cfg.seed, 0, 0);
    let mut model = CnpModel::init(arch.clone(), &mut init_rng)?;
    let mut log = TrainLog::default();
    if cfg.epochs == 0 || cfg.episodes_per_epoch == 0 {
        return Ok((model, log));
    }

    let mut val_rng = substream(cfg.seed, 0, 1);
    let val_bank: Vec<ValEpisode> = (0..cfg.val_episodes.max(1))
        .map(|i| {
            let task = i % validation.len();
            let size = validation[task].points.len();
            let m = val_rng.gen_range(cfg.m_min..=cfg.m_max);
            let context_idx = rand::seq::index::sample(&mut val_rng, size, m).into_vec();
            ValEpisode { task, context_idx }
        })
        .collect();

    let mut episode_rng = substream(cfg.seed, 0, 2);
    let mut enc_opt = AdamState::new(&model.encoder, cfg.learning_rate);
    let mut dec_opt = AdamState::new(&model.decoder, cfg.learning_rate);
    let mut best: Option<(usize, f64, CnpModel)> = None;
    let mut stale_epochs = 0usize;

    for epoch in 0..cfg.epochs {
        let mut epoch_nll = 0.0;
        for _ in 0..cfg.episodes_per_epoch {
            let task = &train[episode_rng.gen_range(0..train.len())];
            let m = episode_rng.gen_range(cfg.m_min..=cfg.m_max);
            let context_idx = rand::seq::index::sample(&mut episode_rng, task.points.len(), m).into_vec();
            let mut in_context = vec![false; task.points.len()];
            for &i in &context_idx {
                in_context[i] = true;
            }
            let context: Vec<LabeledPoint> =
                context_idx.iter().map(|&i| task.points[i].clone()).collect();
            let mut targets: Vec<LabeledPoint> = task
                .points
                .iter()
                .enumerate()
                .filter(|(i, _)| !in_context[*i])
                .map(|(_, p)| p.clone())
                .collect();
            if cfg.targets_include_context {
                targets.extend(context.iter().cloned());
            }
            let (loss, enc_grads, dec_grads) = episode_loss_and_grads(&model, &context, &targets)?;
            adam_step(&mut model.encoder, &enc_grads, &mut enc_opt)?;
            adam_step(&mut model.decoder, &dec_grads, &mut dec_opt)?;
            epoch_nll += loss;
        }
        let train_nll = epoch_nll / cfg.episodes_per_epoch as f64;
        let val_nll = validation_nll(&model, validation, &val_bank)?;
        log.epochs.push(EpochLog {
            epoch,
            train_nll,
            val_nll,
        });

        let improved = best.as_ref().is_none_or(|(_, b, _)| val_nll < *b);
        if improved {
            best = Some((epoch, val_nll, model.clone()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.patience {
                break;
            }
        }
    }

    let (best_epoch, best_val, best_model) = best.expect("at least one epoch ran");
    log.best_epoch = Some(best_epoch);
    log.best_val_nll = Some(best_val);
    Ok((best_model, log))
}
