//! Model persistence. A checkpoint carries everything needed to reproduce
//! predictions: architecture config, both networks, the normalization stats
//! the model was trained under, the seed, and the per-epoch training log.
//!
//! JSON numbers are written in shortest round-trip form, so loading a
//! checkpoint restores every weight bit-for-bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnp::train::EpochLog;
use crate::cnp::{CnpConfig, CnpModel};
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::nn::MlpParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: CnpConfig,
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub norm_stats: NormStats,
    pub seed: u64,
    pub train_log: Vec<EpochLog>,
}

impl Checkpoint {
    pub fn into_model(self) -> Result<(CnpModel, NormStats, u64, Vec<EpochLog>)> {
        let model = CnpModel {
            encoder: self.encoder,
            decoder: self.decoder,
            config: self.config,
        };
        model.validate()?;
        Ok((model, self.norm_stats, self.seed, self.train_log))
    }
}

pub fn save_checkpoint(
    path: &Path,
    model: &CnpModel,
    norm_stats: &NormStats,
    seed: u64,
    train_log: &[EpochLog],
) -> Result<()> {
    model.validate()?;
    let ckpt = Checkpoint {
        config: model.config.clone(),
        encoder: model.encoder.clone(),
        decoder: model.decoder.clone(),
        norm_stats: norm_stats.clone(),
        seed,
        train_log: train_log.to_vec(),
    };
    let mut bytes = serde_json::to_vec_pretty(&ckpt)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CnpModel, NormStats, u64, Vec<EpochLog>)> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let ckpt: Checkpoint = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Data(format!("checkpoint {}: {e}", path.display())))?;
    ckpt.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnp::{predict, ContextSet, LabeledPoint, TargetSet};
    use crate::nn::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_roundtrip_reproduces_predictions_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");

        let config = CnpConfig {
            d_x: 2,
            d_r: 8,
            encoder_hidden: vec![12],
            decoder_hidden: vec![12],
            activation: Activation::Tanh,
            sigma_floor: 0.01,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let model = CnpModel::init(config, &mut rng).unwrap();
        let norm = NormStats {
            mean_temp: 600.0,
            std_temp: 50.0,
            mean_y: 3.0,
            std_y: 0.8,
        };
        let log = vec![EpochLog {
            epoch: 0,
            train_nll: 1.25,
            val_nll: 1.5,
        }];
        save_checkpoint(&path, &model, &norm, 7, &log).unwrap();

        let (loaded, norm2, seed, log2) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(norm2, norm);
        assert_eq!(seed, 7);
        assert_eq!(log2, log);

        let ctx = ContextSet::new(
            (0..5)
                .map(|_| LabeledPoint {
                    x: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    y: rng.gen_range(-1.0..1.0),
                })
                .collect(),
        );
        let query = TargetSet::new(vec![vec![0.2, -0.4], vec![1.1, 0.9]]);
        let a = predict(&model, &ctx, &query).unwrap();
        let b = predict(&loaded, &ctx, &query).unwrap();
        for t in 0..query.len() {
            assert_eq!(a.means[t].to_bits(), b.means[t].to_bits());
            assert_eq!(a.stds[t].to_bits(), b.stds[t].to_bits());
        }
    }

    #[test]
    fn checkpoint_json_uses_documented_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let model = CnpModel::init(
            CnpConfig {
                d_x: 1,
                d_r: 2,
                encoder_hidden: vec![3],
                decoder_hidden: vec![3],
                ..CnpConfig::default()
            },
            &mut rng,
        )
        .unwrap();
        let norm = NormStats {
            mean_temp: 0.0,
            std_temp: 1.0,
            mean_y: 0.0,
            std_y: 1.0,
        };
        save_checkpoint(&path, &model, &norm, 0, &[]).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for key in ["config", "encoder", "decoder", "norm_stats", "seed", "train_log"] {
            assert!(value.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(value["encoder"]["activation"], "tanh");
        assert!(value["encoder"]["layers"][0]["w"].is_array());
        assert!(value["encoder"]["layers"][0]["b"].is_array());
    }

    #[test]
    fn corrupt_checkpoint_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        std::fs::write(&path, b"{\"not\": \"a checkpoint\"}").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert_eq!(err.class(), crate::error::ErrorClass::Data);
    }
}
