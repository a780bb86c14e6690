//! Synthetic task families for oracle-grade testing.
//!
//! Real creep data shows, per cast and temperature, a near-linear trend
//! between log stress and log rupture time. The generators reproduce that
//! structure with known ground truth so model behavior can be asserted
//! against the parameters that produced the data.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::{lm_predict_log10, LmModel};
use crate::data::{CreepRecord, TaskDataset};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Stresses are drawn log-uniformly from this range (MPa).
pub const STRESS_RANGE_MPA: (f64, f64) = (50.0, 500.0);

/// Which generating process produces the tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthFamily {
    /// Every task has its own per-temperature lines; tasks genuinely differ,
    /// so conditioning on a task's context carries information.
    TaskLines,
    /// One set of lines shared by all tasks; the degenerate pooled case.
    SharedLines,
    /// All tasks generated from a single Larson-Miller polynomial of the
    /// given degree, tying the generator to the parametric baseline.
    LarsonMiller { degree: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTaskConfig {
    pub tasks: usize,
    /// Inclusive range of points per task.
    pub points_per_task: (usize, usize),
    pub temperature_levels_c: Vec<f64>,
    /// Per-temperature slope `a_T` is drawn uniformly from this range; both
    /// ends must be negative (life shortens as stress grows).
    pub slope_range: (f64, f64),
    pub intercept_range: (f64, f64),
    pub noise_std: f64,
    /// Larson-Miller constant used by the `larson_miller` family.
    pub c_lm: f64,
    pub family: SynthFamily,
    pub seed: u64,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        SyntheticTaskConfig {
            tasks: 60,
            points_per_task: (13, 18),
            temperature_levels_c: vec![500.0, 550.0, 600.0],
            slope_range: (-6.0, -3.0),
            intercept_range: (11.0, 15.0),
            noise_std: 0.15,
            c_lm: 20.0,
            family: SynthFamily::TaskLines,
            seed: 0,
        }
    }
}

impl SyntheticTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.points_per_task;
        if lo < 3 || hi < lo {
            return Err(Error::Config(format!(
                "points per task must satisfy 3 <= min <= max, got ({lo}, {hi})"
            )));
        }
        if self.temperature_levels_c.is_empty() {
            return Err(Error::Config("need at least one temperature level".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "noise std must be non-negative, got {}",
                self.noise_std
            )));
        }
        let (s_lo, s_hi) = self.slope_range;
        if !(s_lo <= s_hi && s_hi < 0.0) {
            return Err(Error::Config(format!(
                "slope range must be negative with lo <= hi, got ({s_lo}, {s_hi})"
            )));
        }
        if let SynthFamily::LarsonMiller { degree } = self.family {
            if degree == 0 || degree > 3 {
                return Err(Error::Config(format!(
                    "generator polynomial degree must be 1..=3, got {degree}"
                )));
            }
        }
        Ok(())
    }
}

/// One generating line: `log10 t_r = slope * log10 stress + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLine {
    pub temp_c: f64,
    pub slope: f64,
    pub intercept: f64,
}

/// Ground truth for one generated task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTaskTruth {
    pub cast_code: String,
    /// Per-temperature lines; empty for the Larson-Miller family.
    pub lines: Vec<SynthLine>,
}

/// Everything needed to audit or regenerate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub family: SynthFamily,
    pub noise_std: f64,
    pub temperature_levels_c: Vec<f64>,
    /// The shared generating polynomial, Larson-Miller family only.
    pub lm_xi: Option<Vec<f64>>,
    pub c_lm: f64,
    pub tasks: Vec<SynthTaskTruth>,
}

/// Generated tasks with their manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub tasks: Vec<TaskDataset>,
    pub manifest: SynthManifest,
}

fn draw_lines<R: Rng + ?Sized>(cfg: &SyntheticTaskConfig, rng: &mut R) -> Vec<SynthLine> {
    let mut temps = cfg.temperature_levels_c.clone();
    temps.sort_by(|a, b| a.partial_cmp(b).expect("finite temperatures"));
    let mut intercepts: Vec<f64> = temps
        .iter()
        .map(|_| rng.gen_range(cfg.intercept_range.0..cfg.intercept_range.1))
        .collect();
    // hotter specimens rupture sooner: give lower temperatures the larger
    // intercepts
    intercepts.sort_by(|a, b| b.partial_cmp(a).expect("finite intercepts"));
    temps
        .iter()
        .zip(intercepts)
        .map(|(&temp_c, intercept)| SynthLine {
            temp_c,
            slope: rng.gen_range(cfg.slope_range.0..cfg.slope_range.1),
            intercept,
        })
        .collect()
}

fn draw_lm_polynomial<R: Rng + ?Sized>(degree: usize, rng: &mut R) -> Vec<f64> {
    // Coefficient windows chosen so P stays in the 30..40 band real steels
    // occupy and rupture times land between hours and years.
    const RANGES: [(f64, f64); 4] = [(45.0, 55.0), (-8.0, -4.0), (-0.6, 0.6), (-0.25, 0.25)];
    RANGES[..=degree]
        .iter()
        .map(|&(lo, hi)| rng.gen_range(lo..hi))
        .collect()
}

/// Generates per-cast tasks with known ground truth, fully determined by
/// `cfg.seed`. Records within a task are kept in generation order.
pub fn synth_tasks(cfg: &SyntheticTaskConfig) -> Result<SynthOutput> {
    cfg.validate()?;

    let mut shared_rng = substream(cfg.seed, u64::MAX, 0);
    let shared_lines = match cfg.family {
        SynthFamily::SharedLines => Some(draw_lines(cfg, &mut shared_rng)),
        _ => None,
    };
    let lm_model = match cfg.family {
        SynthFamily::LarsonMiller { degree } => Some(LmModel {
            d: degree,
            xi: draw_lm_polynomial(degree, &mut shared_rng),
            c_lm: cfg.c_lm,
        }),
        _ => None,
    };

    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("invalid noise distribution: {e}")))?;
    let log_lo = STRESS_RANGE_MPA.0.log10();
    let log_hi = STRESS_RANGE_MPA.1.log10();

    let mut tasks = Vec::with_capacity(cfg.tasks);
    let mut truths = Vec::with_capacity(cfg.tasks);
    for t in 0..cfg.tasks {
        let cast_code = format!("SYN-{t:04}");
        let mut rng = substream(cfg.seed, t as u64, 1);
        let lines = match (&cfg.family, &shared_lines) {
            (SynthFamily::TaskLines, _) => draw_lines(cfg, &mut rng),
            (_, Some(shared)) => shared.clone(),
            _ => Vec::new(),
        };
        let n_points = rng.gen_range(cfg.points_per_task.0..=cfg.points_per_task.1);
        let mut records = Vec::with_capacity(n_points);
        for j in 0..n_points {
            let temp_idx = j % cfg.temperature_levels_c.len();
            let stress = 10f64.powf(rng.gen_range(log_lo..log_hi));
            let eps = if cfg.noise_std > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            let (temp_c, log_t) = match &lm_model {
                Some(model) => {
                    let temp_c = cfg.temperature_levels_c[temp_idx];
                    (temp_c, lm_predict_log10(model, stress, temp_c)? + eps)
                }
                None => {
                    let line = &lines[temp_idx % lines.len()];
                    (
                        line.temp_c,
                        line.slope * stress.log10() + line.intercept + eps,
                    )
                }
            };
            records.push(CreepRecord::new(
                cast_code.clone(),
                "synthetic",
                stress,
                temp_c,
                10f64.powf(log_t),
            )?);
        }
        tasks.push(TaskDataset {
            cast_code: cast_code.clone(),
            records,
        });
        truths.push(SynthTaskTruth { cast_code, lines });
    }

    Ok(SynthOutput {
        tasks,
        manifest: SynthManifest {
            seed: cfg.seed,
            family: cfg.family.clone(),
            noise_std: cfg.noise_std,
            temperature_levels_c: cfg.temperature_levels_c.clone(),
            lm_xi: lm_model.as_ref().map(|m| m.xi.clone()),
            c_lm: cfg.c_lm,
            tasks: truths,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_cfg() -> SyntheticTaskConfig {
        SyntheticTaskConfig {
            tasks: 12,
            points_per_task: (6, 9),
            noise_std: 0.1,
            seed: 7,
            ..SyntheticTaskConfig::default()
        }
    }

    #[test]
    fn zero_noise_points_lie_exactly_on_their_lines() {
        let cfg = SyntheticTaskConfig {
            noise_std: 0.0,
            ..base_cfg()
        };
        let out = synth_tasks(&cfg).unwrap();
        for (task, truth) in out.tasks.iter().zip(&out.manifest.tasks) {
            for r in &task.records {
                let line = truth
                    .lines
                    .iter()
                    .find(|l| l.temp_c == r.temp_c)
                    .expect("record temperature matches a generating line");
                let expected = line.slope * r.stress_mpa.log10() + line.intercept;
                assert!((r.time_h.log10() - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_output() {
        let cfg = base_cfg();
        let a = synth_tasks(&cfg).unwrap();
        let b = synth_tasks(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = synth_tasks(&base_cfg()).unwrap();
        let b = synth_tasks(&SyntheticTaskConfig {
            seed: 8,
            ..base_cfg()
        })
        .unwrap();
        assert_ne!(a.tasks, b.tasks);
    }

    #[test]
    fn all_generated_slopes_are_negative() {
        let out = synth_tasks(&base_cfg()).unwrap();
        for truth in &out.manifest.tasks {
            for line in &truth.lines {
                assert!(line.slope < 0.0);
            }
        }
    }

    #[test]
    fn rupture_time_decreases_with_stress_at_fixed_temperature() {
        let cfg = SyntheticTaskConfig {
            noise_std: 0.0,
            ..base_cfg()
        };
        let out = synth_tasks(&cfg).unwrap();
        for task in &out.tasks {
            for a in &task.records {
                for b in &task.records {
                    if a.temp_c == b.temp_c && a.stress_mpa < b.stress_mpa {
                        assert!(a.time_h > b.time_h);
                    }
                }
            }
        }
    }

    #[test]
    fn shared_lines_are_identical_across_tasks() {
        let cfg = SyntheticTaskConfig {
            family: SynthFamily::SharedLines,
            ..base_cfg()
        };
        let out = synth_tasks(&cfg).unwrap();
        let first = &out.manifest.tasks[0].lines;
        for truth in &out.manifest.tasks {
            assert_eq!(&truth.lines, first);
        }
    }

    #[test]
    fn stresses_stay_inside_the_sampling_range() {
        let out = synth_tasks(&base_cfg()).unwrap();
        for task in &out.tasks {
            for r in &task.records {
                assert!(r.stress_mpa >= STRESS_RANGE_MPA.0);
                assert!(r.stress_mpa <= STRESS_RANGE_MPA.1);
            }
        }
    }

    #[test]
    fn point_counts_respect_the_configured_range() {
        let out = synth_tasks(&base_cfg()).unwrap();
        assert_eq!(out.tasks.len(), 12);
        for task in &out.tasks {
            assert!(task.len() >= 6 && task.len() <= 9);
        }
    }

    #[test]
    fn zero_tasks_yield_an_empty_dataset() {
        let out = synth_tasks(&SyntheticTaskConfig {
            tasks: 0,
            ..base_cfg()
        })
        .unwrap();
        assert!(out.tasks.is_empty());
        assert!(out.manifest.tasks.is_empty());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(synth_tasks(&SyntheticTaskConfig {
            points_per_task: (2, 5),
            ..base_cfg()
        })
        .is_err());
        assert!(synth_tasks(&SyntheticTaskConfig {
            slope_range: (-2.0, 1.0),
            ..base_cfg()
        })
        .is_err());
        assert!(synth_tasks(&SyntheticTaskConfig {
            noise_std: -0.1,
            ..base_cfg()
        })
        .is_err());
    }

    #[test]
    fn manifest_serializes_with_family_tag() {
        let out = synth_tasks(&SyntheticTaskConfig {
            tasks: 2,
            family: SynthFamily::LarsonMiller { degree: 2 },
            noise_std: 0.0,
            ..base_cfg()
        })
        .unwrap();
        let json = serde_json::to_value(&out.manifest).unwrap();
        assert_eq!(json["family"]["kind"], "larson_miller");
        assert_eq!(json["family"]["degree"], 2);
        assert_eq!(json["lm_xi"].as_array().unwrap().len(), 3);
    }
}
