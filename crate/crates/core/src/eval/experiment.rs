//! Repeated-run evaluation on held-out tasks. Each run re-samples a context
//! subset per task, fits the per-task baselines on that context only,
//! conditions the amortized models on it, and pools every remaining target
//! point across tasks before computing metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{coverage, log_likelihood, mae, r_squared, MetricsReport, Z_95};
use crate::baselines::{
    gp_fit, gp_predict, lm_fit, lm_predict_log10, pooled_predict, GpGrid, PooledNn,
};
use crate::cnp::{predict, CnpModel, ContextSet, GaussianPrediction, LabeledPoint, TargetSet};
use crate::data::{featurize, CreepRecord, NormStats, TaskDataset};
use crate::error::{Error, Result};
use crate::rng::substream;

fn default_context_fraction() -> f64 {
    1.0 / 3.0
}

fn default_context_min() -> usize {
    3
}

/// How many context points to reveal per held-out task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ContextSpec {
    /// `ceil(fraction * n)`, at least `min`.
    Fraction {
        #[serde(default = "default_context_fraction")]
        fraction: f64,
        #[serde(default = "default_context_min")]
        min: usize,
    },
    /// The same count for every task.
    Fixed { count: usize },
}

impl Default for ContextSpec {
    fn default() -> Self {
        ContextSpec::Fraction {
            fraction: 1.0 / 3.0,
            min: 3,
        }
    }
}

impl ContextSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ContextSpec::Fraction { fraction, min } => {
                if !(*fraction > 0.0 && *fraction <= 1.0) {
                    return Err(Error::Config(format!(
                        "context fraction must be in (0, 1], got {fraction}"
                    )));
                }
                if *min == 0 {
                    return Err(Error::Config("context minimum must be >= 1".into()));
                }
            }
            ContextSpec::Fixed { count } => {
                if *count == 0 {
                    return Err(Error::Config("context count must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Context size for a task with `n` records.
    pub fn size_for(&self, n: usize) -> usize {
        match self {
            ContextSpec::Fraction { fraction, min } => {
                let m = (fraction * n as f64).ceil() as usize;
                m.max(*min)
            }
            ContextSpec::Fixed { count } => *count,
        }
    }
}

/// Protocol for the repeated-run experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalProtocol {
    pub runs: usize,
    pub base_seed: u64,
    pub context: ContextSpec,
    /// Interval half-width multiplier used by the coverage metric.
    pub coverage_z: f64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            runs: 20,
            base_seed: 0,
            context: ContextSpec::default(),
            coverage_z: Z_95,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if !(self.coverage_z > 0.0 && self.coverage_z.is_finite()) {
            return Err(Error::Config(format!(
                "coverage_z must be positive and finite, got {}",
                self.coverage_z
            )));
        }
        self.context.validate()
    }
}

/// The models entered into one experiment. Any subset may be enabled;
/// Larson-Miller participates once per listed degree.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelSet<'a> {
    pub cnp: Option<&'a CnpModel>,
    pub pooled: Option<&'a PooledNn>,
    pub gp: Option<&'a GpGrid>,
    pub lm_degrees: &'a [usize],
    pub c_lm: f64,
}

impl ModelSet<'_> {
    pub fn model_count(&self) -> usize {
        usize::from(self.cnp.is_some())
            + usize::from(self.pooled.is_some())
            + usize::from(self.gp.is_some())
            + self.lm_degrees.len()
    }

    fn is_empty(&self) -> bool {
        self.model_count() == 0
    }
}

/// A metric summarized over runs. `std` is the unbiased sample deviation
/// and is absent for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std: Option<f64>,
}

/// Per-model summary across runs, keyed by metric name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub metrics: BTreeMap<String, MeanStd>,
    /// Pooled target points per run (constant across runs).
    pub points_per_run: usize,
}

/// Everything the experiment produced: per-run metrics and the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: EvalProtocol,
    pub models: BTreeMap<String, RunAggregate>,
    pub per_run: BTreeMap<String, Vec<MetricsReport>>,
}

impl ExperimentReport {
    /// The compact summary shape: model -> metric -> {mean, std}.
    pub fn summary_json(&self) -> serde_json::Value {
        let mut root = serde_json::Map::new();
        for (name, agg) in &self.models {
            let mut per_metric = serde_json::Map::new();
            for (metric, ms) in &agg.metrics {
                let mut obj = serde_json::Map::new();
                obj.insert("mean".into(), json_f64(ms.mean));
                if let Some(s) = ms.std {
                    obj.insert("std".into(), json_f64(s));
                }
                per_metric.insert(metric.clone(), serde_json::Value::Object(obj));
            }
            root.insert(name.clone(), serde_json::Value::Object(per_metric));
        }
        serde_json::Value::Object(root)
    }

    /// Plain-text table with aligned columns, one row per model.
    pub fn render_table(&self) -> String {
        let summary: BTreeMap<String, BTreeMap<String, MeanStd>> = self
            .models
            .iter()
            .map(|(name, agg)| (name.clone(), agg.metrics.clone()))
            .collect();
        render_summary_table(&summary)
    }
}

/// Renders the model -> metric -> {mean, std} summary as an aligned table.
/// Metrics a model does not report show as `-`.
pub fn render_summary_table(models: &BTreeMap<String, BTreeMap<String, MeanStd>>) -> String {
    const METRICS: [&str; 4] = ["e", "li", "p95", "r2"];
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["model".to_string()];
    header.extend(METRICS.iter().map(|m| m.to_string()));
    rows.push(header);
    for (name, metrics) in models {
        let mut row = vec![name.clone()];
        for metric in METRICS {
            row.push(match metrics.get(metric) {
                Some(ms) => match ms.std {
                    Some(s) => format!("{:.4} ± {:.4}", ms.mean, s),
                    None => format!("{:.4}", ms.mean),
                },
                None => "-".to_string(),
            });
        }
        rows.push(row);
    }
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        for (c, cell) in row.iter().enumerate() {
            out.push_str(cell);
            if c + 1 < cols {
                for _ in cell.chars().count()..widths[c] + 2 {
                    out.push(' ');
                }
            }
        }
        out.push('\n');
    }
    out
}

fn json_f64(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

/// One model's pooled predictions for a run, aligned with the pooled targets.
struct PooledPredictions {
    means: Vec<f64>,
    stds: Option<Vec<f64>>,
}

impl PooledPredictions {
    fn new(probabilistic: bool) -> Self {
        PooledPredictions {
            means: Vec::new(),
            stds: if probabilistic { Some(Vec::new()) } else { None },
        }
    }

    fn push_gaussian(&mut self, pred: &GaussianPrediction, norm: &NormStats) {
        for (mu, sigma) in pred.means.iter().zip(&pred.stds) {
            self.means.push(norm.unnormalize_y(*mu));
            if let Some(stds) = &mut self.stds {
                stds.push(sigma * norm.std_y);
            }
        }
    }

    fn metrics(&self, ys: &[f64], coverage_z: f64) -> Result<MetricsReport> {
        let e = mae(ys, &self.means)?;
        let r2 = r_squared(ys, &self.means)?;
        let (li, p95) = match &self.stds {
            Some(stds) => {
                let pred = GaussianPrediction::new(self.means.clone(), stds.clone())?;
                (
                    Some(log_likelihood(&pred, ys)?),
                    Some(coverage(&pred, ys, coverage_z)?),
                )
            }
            None => (None, None),
        };
        Ok(MetricsReport {
            e,
            li,
            p95,
            r2,
            n: ys.len(),
        })
    }
}

/// Splits a task into context and target records for one run. Exposed so
/// figure export can condition on exactly the context run 0 saw.
pub fn sample_context(
    task: &TaskDataset,
    spec: &ContextSpec,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Vec<CreepRecord>, Vec<CreepRecord>)> {
    let n = task.records.len();
    let m = spec.size_for(n);
    if m >= n {
        return Err(Error::Config(format!(
            "cast {}: context of {m} leaves no target among {n} records",
            task.cast_code
        )));
    }
    let mut picked = rand::seq::index::sample(rng, n, m).into_vec();
    picked.sort_unstable();
    let mut in_context = vec![false; n];
    for &i in &picked {
        in_context[i] = true;
    }
    let context: Vec<CreepRecord> = picked.iter().map(|&i| task.records[i].clone()).collect();
    let targets: Vec<CreepRecord> = task
        .records
        .iter()
        .zip(&in_context)
        .filter(|(_, inside)| !**inside)
        .map(|(r, _)| r.clone())
        .collect();
    debug_assert_eq!(context.len() + targets.len(), n);
    Ok((context, targets))
}

/// Prefixes per-task fit failures with the cast code, preserving the error
/// class (and with it the exit code).
fn with_cast(code: &str, err: Error) -> Error {
    match err {
        Error::Config(m) => Error::Config(format!("cast {code}: {m}")),
        Error::Data(m) => Error::Data(format!("cast {code}: {m}")),
        Error::Domain(m) => Error::Domain(format!("cast {code}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("cast {code}: {m}")),
        Error::Factorization(m) => Error::Factorization(format!("cast {code}: {m}")),
        other => other,
    }
}

fn mean_std(values: &[f64]) -> MeanStd {
    let k = values.len();
    let mean = values.iter().sum::<f64>() / k as f64;
    let std = if k > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
        Some(var.sqrt())
    } else {
        None
    };
    MeanStd { mean, std }
}

fn aggregate(per_run: &BTreeMap<String, Vec<MetricsReport>>) -> BTreeMap<String, RunAggregate> {
    let mut out = BTreeMap::new();
    for (name, runs) in per_run {
        let mut metrics = BTreeMap::new();
        let collect = |f: fn(&MetricsReport) -> Option<f64>| -> Vec<f64> {
            runs.iter().filter_map(f).collect()
        };
        let e: Vec<f64> = runs.iter().map(|r| r.e).collect();
        metrics.insert("e".to_string(), mean_std(&e));
        let li = collect(|r| r.li);
        if li.len() == runs.len() {
            metrics.insert("li".to_string(), mean_std(&li));
        }
        let p95 = collect(|r| r.p95);
        if p95.len() == runs.len() {
            metrics.insert("p95".to_string(), mean_std(&p95));
        }
        let r2: Vec<f64> = runs.iter().map(|r| r.r2).collect();
        metrics.insert("r2".to_string(), mean_std(&r2));
        out.insert(
            name.clone(),
            RunAggregate {
                metrics,
                points_per_run: runs.first().map_or(0, |r| r.n),
            },
        );
    }
    out
}

/// Runs the full protocol: `runs` repetitions over every held-out task,
/// re-sampling contexts from the stream `(base_seed + run, 3, task)` so each
/// (run, task) pair is independent yet reproducible.
pub fn run_experiment(
    models: &ModelSet,
    heldout: &[TaskDataset],
    norm: &NormStats,
    protocol: &EvalProtocol,
) -> Result<ExperimentReport> {
    protocol.validate()?;
    norm.validate()?;
    if heldout.is_empty() {
        return Err(Error::Config("no held-out tasks to evaluate".into()));
    }
    if models.is_empty() {
        return Err(Error::Config("no models enabled for evaluation".into()));
    }
    for &d in models.lm_degrees {
        if d == 0 {
            return Err(Error::Config("lm degree must be >= 1".into()));
        }
    }

    let mut names: Vec<String> = Vec::new();
    if models.cnp.is_some() {
        names.push("cnp".into());
    }
    if models.gp.is_some() {
        names.push("gp".into());
    }
    for &d in models.lm_degrees {
        names.push(format!("lm_d{d}"));
    }
    if models.pooled.is_some() {
        names.push("pooled".into());
    }

    let mut per_run: BTreeMap<String, Vec<MetricsReport>> =
        names.iter().map(|n| (n.clone(), Vec::new())).collect();

    for run in 0..protocol.runs {
        let run_seed = protocol.base_seed.wrapping_add(run as u64);
        let mut ys: Vec<f64> = Vec::new();
        let mut preds: BTreeMap<&str, PooledPredictions> = BTreeMap::new();
        if models.cnp.is_some() {
            preds.insert("cnp", PooledPredictions::new(true));
        }
        if models.gp.is_some() {
            preds.insert("gp", PooledPredictions::new(true));
        }
        if models.pooled.is_some() {
            preds.insert("pooled", PooledPredictions::new(true));
        }
        let lm_names: Vec<String> = models.lm_degrees.iter().map(|d| format!("lm_d{d}")).collect();

        let mut lm_means: BTreeMap<&str, Vec<f64>> =
            lm_names.iter().map(|n| (n.as_str(), Vec::new())).collect();

        for (t, task) in heldout.iter().enumerate() {
            let mut rng = substream(run_seed, 3, t as u64);
            let (context, targets) = sample_context(task, &protocol.context, &mut rng)?;

            let context_points: Vec<LabeledPoint> =
                context.iter().map(|r| featurize(r, norm)).collect();
            let target_xs: Vec<Vec<f64>> = targets
                .iter()
                .map(|r| norm.features(r.stress_mpa, r.temp_c))
                .collect();
            ys.extend(targets.iter().map(|r| r.time_h.log10()));

            let query = TargetSet::new(target_xs);
            if let Some(model) = models.cnp {
                let ctx = ContextSet::new(context_points.clone());
                let pred = predict(model, &ctx, &query)?;
                preds.get_mut("cnp").unwrap().push_gaussian(&pred, norm);
            }
            if let Some(grid) = models.gp {
                let ctx = ContextSet::new(context_points.clone());
                let gp = gp_fit(&ctx, grid).map_err(|e| with_cast(&task.cast_code, e))?;
                let pred = gp_predict(&gp, &query)?;
                preds.get_mut("gp").unwrap().push_gaussian(&pred, norm);
            }
            if let Some(model) = models.pooled {
                let pred = pooled_predict(model, &query)?;
                preds.get_mut("pooled").unwrap().push_gaussian(&pred, norm);
            }
            for (&d, name) in models.lm_degrees.iter().zip(&lm_names) {
                let lm =
                    lm_fit(&context, d, models.c_lm).map_err(|e| with_cast(&task.cast_code, e))?;
                let means = lm_means.get_mut(name.as_str()).unwrap();
                for r in &targets {
                    means.push(lm_predict_log10(&lm, r.stress_mpa, r.temp_c)?);
                }
            }
        }

        for (name, pooled) in &preds {
            per_run
                .get_mut(*name)
                .unwrap()
                .push(pooled.metrics(&ys, protocol.coverage_z)?);
        }
        for (name, means) in &lm_means {
            let report = MetricsReport {
                e: mae(&ys, means)?,
                li: None,
                p95: None,
                r2: r_squared(&ys, means)?,
                n: ys.len(),
            };
            per_run.get_mut(*name).unwrap().push(report);
        }
    }

    let models = aggregate(&per_run);
    Ok(ExperimentReport {
        protocol: protocol.clone(),
        models,
        per_run,
    })
}
