//! Feature mapping: `x = (log10 stress, normalized temperature)`,
//! `y = normalized log10 rupture time`. Stats come from meta-train only.

use serde::{Deserialize, Serialize};

use crate::cnp::LabeledPoint;
use crate::data::TaskDataset;
use crate::error::{Error, Result};

/// Normalization constants for the temperature feature and the target.
/// Stress is left as raw log10 MPa, which is already order one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean_temp: f64,
    pub std_temp: f64,
    pub mean_y: f64,
    pub std_y: f64,
}

impl NormStats {
    /// Population mean/std over every record of the given tasks.
    pub fn from_tasks(tasks: &[TaskDataset]) -> Result<Self> {
        let n: usize = tasks.iter().map(|t| t.len()).sum();
        if n < 2 {
            return Err(Error::Data(format!(
                "need at least 2 records to compute normalization stats, got {n}"
            )));
        }
        let mut sum_t = 0.0;
        let mut sum_y = 0.0;
        for r in tasks.iter().flat_map(|t| &t.records) {
            sum_t += r.temp_c;
            sum_y += r.time_h.log10();
        }
        let inv_n = 1.0 / n as f64;
        let mean_temp = sum_t * inv_n;
        let mean_y = sum_y * inv_n;
        let mut var_t = 0.0;
        let mut var_y = 0.0;
        for r in tasks.iter().flat_map(|t| &t.records) {
            var_t += (r.temp_c - mean_temp).powi(2);
            var_y += (r.time_h.log10() - mean_y).powi(2);
        }
        let stats = NormStats {
            mean_temp,
            std_temp: (var_t * inv_n).sqrt(),
            mean_y,
            std_y: (var_y * inv_n).sqrt(),
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mean_temp", self.mean_temp),
            ("std_temp", self.std_temp),
            ("mean_y", self.mean_y),
            ("std_y", self.std_y),
        ] {
            if !v.is_finite() {
                return Err(Error::Data(format!("normalization stat {name} is {v}")));
            }
        }
        if !(self.std_temp > 0.0) || !(self.std_y > 0.0) {
            return Err(Error::Data(format!(
                "normalization stds must be positive (std_temp = {}, std_y = {})",
                self.std_temp, self.std_y
            )));
        }
        Ok(())
    }

    /// Normalized target from rupture time in hours.
    pub fn normalize_y(&self, time_h: f64) -> f64 {
        (time_h.log10() - self.mean_y) / self.std_y
    }

    /// Back to log10 hours, the unit all metrics are reported in.
    pub fn unnormalize_y(&self, y: f64) -> f64 {
        y * self.std_y + self.mean_y
    }

    /// The feature vector without a target, for querying.
    pub fn features(&self, stress_mpa: f64, temp_c: f64) -> Vec<f64> {
        vec![
            stress_mpa.log10(),
            (temp_c - self.mean_temp) / self.std_temp,
        ]
    }
}

/// One task after featurization, keyed by its cast code.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedTask {
    pub cast_code: String,
    pub points: Vec<LabeledPoint>,
}

/// Maps one record into normalized model space.
pub fn featurize(record: &crate::data::CreepRecord, norm: &NormStats) -> LabeledPoint {
    LabeledPoint {
        x: norm.features(record.stress_mpa, record.temp_c),
        y: norm.normalize_y(record.time_h),
    }
}

/// Featurizes a whole task, preserving record order.
pub fn featurize_task(task: &TaskDataset, norm: &NormStats) -> FeaturizedTask {
    FeaturizedTask {
        cast_code: task.cast_code.clone(),
        points: task.records.iter().map(|r| featurize(r, norm)).collect(),
    }
}
