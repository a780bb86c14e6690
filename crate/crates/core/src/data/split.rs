//! Meta split: held-out test tasks are the cast codes with the fewest
//! records; the remainder is divided into meta-train and validation at the
//! task level by a seeded shuffle.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub heldout_count: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            heldout_count: 20,
            validation_fraction: 0.20,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// The three disjoint task groups. Each group is sorted by cast code.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaSplit {
    pub meta_train: Vec<TaskDataset>,
    pub validation: Vec<TaskDataset>,
    pub heldout_test: Vec<TaskDataset>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub meta_train: usize,
    pub validation: usize,
    pub heldout_test: usize,
}

/// Reproducibility record: which cast codes landed where, and under what
/// settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub heldout_count: usize,
    pub validation_fraction: f64,
    pub task_counts: SplitCounts,
    pub record_counts: SplitCounts,
    pub meta_train: Vec<String>,
    pub validation: Vec<String>,
    pub heldout_test: Vec<String>,
}

impl MetaSplit {
    pub fn manifest(&self, spec: &SplitSpec) -> SplitManifest {
        let casts = |ts: &[TaskDataset]| ts.iter().map(|t| t.cast_code.clone()).collect();
        let records = |ts: &[TaskDataset]| ts.iter().map(|t| t.len()).sum();
        SplitManifest {
            seed: spec.seed,
            heldout_count: spec.heldout_count,
            validation_fraction: spec.validation_fraction,
            task_counts: SplitCounts {
                meta_train: self.meta_train.len(),
                validation: self.validation.len(),
                heldout_test: self.heldout_test.len(),
            },
            record_counts: SplitCounts {
                meta_train: records(&self.meta_train),
                validation: records(&self.validation),
                heldout_test: records(&self.heldout_test),
            },
            meta_train: casts(&self.meta_train),
            validation: casts(&self.validation),
            heldout_test: casts(&self.heldout_test),
        }
    }
}

/// Splits tasks into meta-train / validation / held-out test.
///
/// Held-out tasks are the `heldout_count` smallest by record count, ties
/// broken by cast code. The remaining tasks are shuffled with the split seed
/// and `validation_fraction` of them (rounded, at least one, at least one
/// left for training) become the validation group.
pub fn split_meta(tasks: Vec<TaskDataset>, spec: &SplitSpec) -> Result<MetaSplit> {
    spec.validate()?;
    if tasks.len() <= spec.heldout_count {
        return Err(Error::Config(format!(
            "need more than heldout_count = {} tasks, got {}",
            spec.heldout_count,
            tasks.len()
        )));
    }

    let mut ordered = tasks;
    ordered.sort_by(|a, b| (a.len(), &a.cast_code).cmp(&(b.len(), &b.cast_code)));
    let rest = ordered.split_off(spec.heldout_count);
    let mut heldout_test = ordered;

    let remaining = rest.len();
    if remaining < 2 {
        return Err(Error::Config(
            "need at least two non-held-out tasks to form train and validation groups".into(),
        ));
    }
    let n_val = ((remaining as f64 * spec.validation_fraction).round() as usize)
        .clamp(1, remaining - 1);

    let mut shuffled = rest;
    shuffled.sort_by(|a, b| a.cast_code.cmp(&b.cast_code));
    shuffled.shuffle(&mut substream(spec.seed, 0, 0));
    let meta_train_part = shuffled.split_off(n_val);
    let mut validation = shuffled;
    let mut meta_train = meta_train_part;

    heldout_test.sort_by(|a, b| a.cast_code.cmp(&b.cast_code));
    validation.sort_by(|a, b| a.cast_code.cmp(&b.cast_code));
    meta_train.sort_by(|a, b| a.cast_code.cmp(&b.cast_code));

    Ok(MetaSplit {
        meta_train,
        validation,
        heldout_test,
    })
}
