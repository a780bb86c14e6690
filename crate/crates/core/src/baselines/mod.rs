//! Comparison models: Larson-Miller polynomial relations, exact
//! Gaussian-process regression, and a pooled pretrained network.

mod gp;
mod lm;
mod pooled;

pub use gp::{gp_fit, gp_predict, GpGrid, GpKernel, GpModel};
pub use lm::{lm_fit, lm_invert, lm_parameter, lm_predict, lm_predict_log10, rankine, LmModel};
pub use pooled::{pooled_predict, pretrain_pooled, PooledNn, PooledTrainConfig};
