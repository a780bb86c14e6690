//! Subcommand implementations. Every command is a pure function of
//! (config, input files): identical inputs produce byte-identical artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use creep_meta::baselines::{pretrain_pooled, PooledNn};
use creep_meta::cnp::{
    load_checkpoint, meta_train, predict, save_checkpoint, CnpModel, ContextSet, TargetSet,
};
use creep_meta::data::{
    build_tasks, featurize, featurize_task, load_csv, split_meta, synth_tasks, write_records_csv,
    CreepRecord, CsvSchema, FeaturizedTask, NormStats, SplitManifest, TaskDataset,
};
use creep_meta::eval::{
    export_plot_data, render_summary_table, run_experiment, sample_context, write_plot_csv,
    MeanStd, ModelSet,
};
use creep_meta::rng::substream;
use creep_meta::{Error, Result};

use crate::config::{DataSource, RunConfig};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a run artifact, naming both the artifact and its path on failure so
/// a wrong `--out` points at the missing file instead of a bare ENOENT.
fn read_artifact(what: &str, path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {what} {}: {e}", path.display())))
}

fn input_schema(cfg: &RunConfig) -> CsvSchema {
    match &cfg.data {
        DataSource::Csv { schema, .. } => schema.clone(),
        DataSource::Synthetic { .. } => CsvSchema::default(),
    }
}

fn load_records(cfg: &RunConfig, path: &Path, schema: &CsvSchema) -> Result<Vec<CreepRecord>> {
    let report = load_csv(path, schema)?;
    if !report.rejected.is_empty() {
        if cfg.strict {
            let mut msg = format!(
                "{} malformed rows in {}",
                report.rejected_count(),
                path.display()
            );
            for issue in report.rejected.iter().take(5) {
                msg.push_str(&format!("; line {}: {}", issue.line, issue.reason));
            }
            return Err(Error::Data(msg));
        }
        eprintln!(
            "warning: skipped {} malformed rows in {}",
            report.rejected_count(),
            path.display()
        );
    }
    Ok(report.records)
}

fn load_dataset(cfg: &RunConfig) -> Result<Vec<TaskDataset>> {
    match &cfg.data {
        DataSource::Csv { path, schema } => {
            let records = load_records(cfg, path, schema)?;
            Ok(build_tasks(&records))
        }
        DataSource::Synthetic { config } => Ok(synth_tasks(config)?.tasks),
    }
}

pub fn cmd_synth_gen(cfg: &RunConfig) -> Result<()> {
    let DataSource::Synthetic { config } = &cfg.data else {
        return Err(Error::Config(
            "synth-gen needs data.kind = \"synthetic\"".into(),
        ));
    };
    fs::create_dir_all(&cfg.out_dir)?;
    let out = synth_tasks(config)?;
    let records: Vec<CreepRecord> = out
        .tasks
        .iter()
        .flat_map(|t| t.records.iter().cloned())
        .collect();
    write_records_csv(&cfg.out_dir.join("data.csv"), &records, &CsvSchema::default())?;
    write_json(&cfg.out_dir.join("synth_manifest.json"), &out.manifest)?;
    eprintln!(
        "generated {} tasks ({} records) into {}",
        out.tasks.len(),
        records.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn featurize_split(tasks: &[TaskDataset], norm: &NormStats) -> Vec<FeaturizedTask> {
    tasks.iter().map(|t| featurize_task(t, norm)).collect()
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let tasks = load_dataset(cfg)?;
    let split = split_meta(tasks, &cfg.split)?;
    write_json(
        &cfg.out_dir.join("split_manifest.json"),
        &split.manifest(&cfg.split),
    )?;
    let norm = NormStats::from_tasks(&split.meta_train)?;
    let train = featurize_split(&split.meta_train, &norm);
    let validation = featurize_split(&split.validation, &norm);
    eprintln!(
        "split: {} meta-train / {} validation / {} held-out tasks",
        train.len(),
        validation.len(),
        split.heldout_test.len()
    );

    let mut logs = serde_json::Map::new();
    if cfg.models.cnp {
        eprintln!(
            "meta-training CNP for up to {} epochs x {} episodes",
            cfg.episodes.epochs, cfg.episodes.episodes_per_epoch
        );
        let (model, log) = meta_train(&train, &validation, &cfg.episodes, &cfg.cnp)?;
        save_checkpoint(
            &cfg.out_dir.join("checkpoint.json"),
            &model,
            &norm,
            cfg.episodes.seed,
            &log.epochs,
        )?;
        if let (Some(epoch), Some(nll)) = (log.best_epoch, log.best_val_nll) {
            eprintln!("cnp: best validation NLL {nll:.4} at epoch {epoch}");
        }
        logs.insert("cnp".into(), serde_json::to_value(&log)?);
    }
    if cfg.models.pooled {
        eprintln!("pretraining pooled network");
        let (model, log) = pretrain_pooled(&train, &validation, &norm, &cfg.pooled)?;
        write_json(&cfg.out_dir.join("pooled.json"), &model)?;
        if let (Some(epoch), Some(nll)) = (log.best_epoch, log.best_val_nll) {
            eprintln!("pooled: best validation NLL {nll:.4} at epoch {epoch}");
        }
        logs.insert("pooled".into(), serde_json::to_value(&log)?);
    }
    write_json(
        &cfg.out_dir.join("train_log.json"),
        &serde_json::Value::Object(logs),
    )?;
    Ok(())
}

fn check_held_out_matches_manifest(cfg: &RunConfig, current: &SplitManifest) -> Result<()> {
    let path = cfg.out_dir.join("split_manifest.json");
    if !path.exists() {
        return Ok(());
    }
    let text = read_artifact("split manifest", &path)?;
    let saved: SplitManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("split manifest {}: {e}", path.display())))?;
    if saved.heldout_test != current.heldout_test {
        return Err(Error::Config(
            "held-out tasks do not match the split manifest from training; \
             retrain or align the split config"
                .into(),
        ));
    }
    Ok(())
}

fn norm_stats_agree(a: &NormStats, b: &NormStats) -> bool {
    a == b
}

fn safe_file_name(code: &str) -> String {
    code.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let (la, lb) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| {
            let f = i as f64 / (count - 1) as f64;
            10f64.powf(la + f * (lb - la))
        })
        .collect()
}

fn distinct_temperatures(task: &TaskDataset) -> Vec<f64> {
    let mut temps: Vec<f64> = task.records.iter().map(|r| r.temp_c).collect();
    temps.sort_by(|a, b| a.partial_cmp(b).expect("finite temperatures"));
    temps.dedup();
    temps
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let tasks = load_dataset(cfg)?;
    let split = split_meta(tasks, &cfg.split)?;
    check_held_out_matches_manifest(cfg, &split.manifest(&cfg.split))?;

    let mut cnp: Option<CnpModel> = None;
    let mut cnp_norm: Option<NormStats> = None;
    if cfg.models.cnp {
        let path = cfg.out_dir.join("checkpoint.json");
        let (model, norm, _, _) = load_checkpoint(&path)?;
        if model.config.d_x != cfg.cnp.d_x {
            return Err(Error::Config(format!(
                "checkpoint d_x = {} but config expects d_x = {}",
                model.config.d_x, cfg.cnp.d_x
            )));
        }
        cnp_norm = Some(norm);
        cnp = Some(model);
    }
    let mut pooled: Option<PooledNn> = None;
    if cfg.models.pooled {
        let path = cfg.out_dir.join("pooled.json");
        let text = read_artifact("pooled model", &path)?;
        let model: PooledNn = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("pooled model {}: {e}", path.display())))?;
        pooled = Some(model);
    }
    let norm = match (&cnp_norm, &pooled) {
        (Some(n), Some(p)) => {
            if !norm_stats_agree(n, &p.norm_stats) {
                return Err(Error::Config(
                    "checkpoint and pooled model disagree on normalization stats".into(),
                ));
            }
            n.clone()
        }
        (Some(n), None) => n.clone(),
        (None, Some(p)) => p.norm_stats.clone(),
        (None, None) => NormStats::from_tasks(&split.meta_train)?,
    };

    let set = ModelSet {
        cnp: cnp.as_ref(),
        pooled: pooled.as_ref(),
        gp: if cfg.models.gp { Some(&cfg.gp) } else { None },
        lm_degrees: &cfg.lm.degrees,
        c_lm: cfg.lm.c_lm,
    };
    eprintln!(
        "evaluating {} models over {} runs on {} held-out tasks",
        set.model_count(),
        cfg.eval.runs,
        split.heldout_test.len()
    );
    let report = run_experiment(&set, &split.heldout_test, &norm, &cfg.eval)?;

    write_json(&cfg.out_dir.join("experiment.json"), &report)?;
    write_json(&cfg.out_dir.join("report.json"), &report.summary_json())?;
    let table = report.render_table();
    fs::write(cfg.out_dir.join("report.txt"), &table)?;
    print!("{table}");

    if let Some(model) = &cnp {
        let plot_dir = cfg.out_dir.join("plots");
        fs::create_dir_all(&plot_dir)?;
        for (t, task) in split.heldout_test.iter().enumerate() {
            let mut rng = substream(cfg.eval.base_seed, 3, t as u64);
            let (context, targets) = sample_context(task, &cfg.eval.context, &mut rng)?;
            let stresses: Vec<f64> = task.records.iter().map(|r| r.stress_mpa).collect();
            let lo = stresses.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = stresses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let grid = log_spaced(lo, hi, cfg.plot.grid_points);
            let temps = distinct_temperatures(task);
            let rows = export_plot_data(
                model,
                &norm,
                &context,
                &targets,
                &temps,
                &grid,
                cfg.plot.band_z,
            )?;
            let name = format!("{}.csv", safe_file_name(&task.cast_code));
            write_plot_csv(&plot_dir.join(name), &rows)?;
        }
        eprintln!(
            "wrote {} plot files to {}",
            split.heldout_test.len(),
            plot_dir.display()
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PredictionRow {
    stress_mpa: f64,
    temp_c: f64,
    mu: f64,
    sigma: f64,
    lo2s: f64,
    hi2s: f64,
}

fn read_query_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header row: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let stress_col = col("stress_mpa")?;
    let temp_col = col("temp_c")?;
    let mut queries = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Data(format!("malformed query row: {e}")))?;
        let line = row.position().map_or(0, |p| p.line());
        let parse = |idx: usize, name: &str| -> Result<f64> {
            row.get(idx)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Data(format!("line {line}: unparsable {name}")))
        };
        let stress = parse(stress_col, "stress_mpa")?;
        let temp = parse(temp_col, "temp_c")?;
        if !(stress > 0.0 && stress.is_finite()) {
            return Err(Error::Data(format!(
                "line {line}: stress must be positive, got {stress}"
            )));
        }
        if !(temp > -273.15 && temp.is_finite()) {
            return Err(Error::Data(format!(
                "line {line}: temperature below absolute zero ({temp})"
            )));
        }
        queries.push((stress, temp));
    }
    if queries.is_empty() {
        return Err(Error::Data(format!(
            "query file {} has no rows",
            path.display()
        )));
    }
    Ok(queries)
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    let context_path = cfg.predict.context_csv.as_ref().ok_or_else(|| {
        Error::Config("predict.context_csv is not set (use --predict.context_csv=PATH)".into())
    })?;
    let query_path = cfg.predict.query_csv.as_ref().ok_or_else(|| {
        Error::Config("predict.query_csv is not set (use --predict.query_csv=PATH)".into())
    })?;
    let (model, norm, _, _) = load_checkpoint(&cfg.out_dir.join("checkpoint.json"))?;
    if model.config.d_x != 2 {
        return Err(Error::Config(format!(
            "checkpoint d_x = {} but stress/temperature queries are 2-dimensional",
            model.config.d_x
        )));
    }

    let schema = input_schema(cfg);
    let context_records = load_records(cfg, context_path, &schema)?;
    let context = ContextSet::new(context_records.iter().map(|r| featurize(r, &norm)).collect());
    let queries = read_query_csv(query_path)?;
    let xs: Vec<Vec<f64>> = queries
        .iter()
        .map(|&(stress, temp)| norm.features(stress, temp))
        .collect();
    let pred = predict(&model, &context, &TargetSet::new(xs))?;

    fs::create_dir_all(&cfg.out_dir)?;
    let out_path = cfg.out_dir.join("predictions.csv");
    let mut writer = csv::Writer::from_path(&out_path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", out_path.display())))?;
    for ((&(stress, temp), mu), sigma) in queries.iter().zip(&pred.means).zip(&pred.stds) {
        let mu_log10 = norm.unnormalize_y(*mu);
        let sigma_log10 = sigma * norm.std_y;
        writer
            .serialize(PredictionRow {
                stress_mpa: stress,
                temp_c: temp,
                mu: mu_log10,
                sigma: sigma_log10,
                lo2s: mu_log10 - 2.0 * sigma_log10,
                hi2s: mu_log10 + 2.0 * sigma_log10,
            })
            .map_err(|e| Error::Data(format!("cannot serialize prediction: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::Data(format!("cannot flush {}: {e}", out_path.display())))?;
    eprintln!(
        "wrote {} predictions ({} context points) to {}",
        queries.len(),
        context.len(),
        out_path.display()
    );
    Ok(())
}

pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let path = cfg.out_dir.join("report.json");
    let text = read_artifact("report", &path)?;
    let models: BTreeMap<String, BTreeMap<String, MeanStd>> = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("report {}: {e}", path.display())))?;
    print!("{}", render_summary_table(&models));
    Ok(())
}
