//! Creep-rupture records, per-cast-code task grouping, meta splits,
//! featurization, and the synthetic task generator used by tests.

mod csv;
mod features;
mod split;
mod synth;

pub use csv::{load_csv, write_records_csv, CsvSchema, LoadReport, RowIssue};
pub use features::{featurize, featurize_task, FeaturizedTask, NormStats};
pub use split::{split_meta, MetaSplit, SplitCounts, SplitManifest, SplitSpec};
pub use synth::{synth_tasks, SynthFamily, SynthLine, SynthManifest, SynthOutput, SynthTaskTruth, SyntheticTaskConfig};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One creep-rupture observation: a specimen of some cast held at constant
/// temperature under constant stress until fracture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreepRecord {
    pub cast_code: String,
    pub material: String,
    /// Applied stress in MPa, strictly positive.
    pub stress_mpa: f64,
    /// Test temperature in degrees Celsius, above absolute zero.
    pub temp_c: f64,
    /// Time to rupture in hours, strictly positive.
    pub time_h: f64,
}

impl CreepRecord {
    pub fn new(
        cast_code: impl Into<String>,
        material: impl Into<String>,
        stress_mpa: f64,
        temp_c: f64,
        time_h: f64,
    ) -> Result<Self> {
        let rec = CreepRecord {
            cast_code: cast_code.into(),
            material: material.into(),
            stress_mpa,
            temp_c,
            time_h,
        };
        rec.check()?;
        Ok(rec)
    }

    /// Validates the physical invariants; the reason strings are reused for
    /// per-row CSV rejection reports.
    pub fn check(&self) -> Result<()> {
        if self.cast_code.is_empty() {
            return Err(Error::Data("empty cast code".into()));
        }
        if !(self.stress_mpa > 0.0) || !self.stress_mpa.is_finite() {
            return Err(Error::Data(format!(
                "nonpositive stress ({})",
                self.stress_mpa
            )));
        }
        if !(self.temp_c > -273.15) || !self.temp_c.is_finite() {
            return Err(Error::Data(format!(
                "temperature below absolute zero ({})",
                self.temp_c
            )));
        }
        if !(self.time_h > 0.0) || !self.time_h.is_finite() {
            return Err(Error::Data(format!(
                "nonpositive rupture time ({})",
                self.time_h
            )));
        }
        Ok(())
    }
}

/// All records of one cast code. The cast code is the task key; material is
/// carried as metadata only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub cast_code: String,
    pub records: Vec<CreepRecord>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Groups records into per-cast-code tasks. Tasks are sorted by cast code
/// and records within a task by (temperature, stress, rupture time), so the
/// result is independent of input order.
pub fn build_tasks(records: &[CreepRecord]) -> Vec<TaskDataset> {
    let mut by_cast: BTreeMap<&str, Vec<CreepRecord>> = BTreeMap::new();
    for r in records {
        by_cast.entry(&r.cast_code).or_default().push(r.clone());
    }
    by_cast
        .into_iter()
        .map(|(cast_code, mut records)| {
            records.sort_by(|a, b| {
                (a.temp_c, a.stress_mpa, a.time_h)
                    .partial_cmp(&(b.temp_c, b.stress_mpa, b.time_h))
                    .expect("record fields are finite")
            });
            TaskDataset {
                cast_code: cast_code.to_string(),
                records,
            }
        })
        .collect()
}
