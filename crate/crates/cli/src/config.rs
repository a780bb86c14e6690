//! Run configuration: one JSON document covering every stage, with CLI
//! flags applied as dotted-path overrides before deserialization.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use creep_meta::baselines::{GpGrid, PooledTrainConfig};
use creep_meta::cnp::{CnpConfig, EpisodeConfig};
use creep_meta::data::{CsvSchema, SplitSpec, SyntheticTaskConfig};
use creep_meta::eval::EvalProtocol;
use creep_meta::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SynthGen,
    Train,
    Eval,
    Predict,
    Report,
    Help,
}

/// Parsed command line: subcommand, config path, and override assignments
/// in the order given.
#[derive(Debug, Clone)]
pub struct Cli {
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub overrides: Vec<(String, Value)>,
}

impl Cli {
    pub fn parse(args: &[String]) -> Result<Cli> {
        let mut command = None;
        let mut config_path = None;
        let mut overrides = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            if let Some(rest) = arg.strip_prefix("--") {
                let (name, inline) = match rest.split_once('=') {
                    Some((n, v)) => (n, Some(v.to_string())),
                    None => (rest, None),
                };
                match name {
                    "help" => {
                        return Ok(Cli {
                            command: Command::Help,
                            config_path: None,
                            overrides: Vec::new(),
                        })
                    }
                    "config" => {
                        config_path = Some(PathBuf::from(take_value(args, &mut i, name, inline)?));
                    }
                    "seed" => {
                        let raw = take_value(args, &mut i, name, inline)?;
                        let seed: u64 = raw.parse().map_err(|_| {
                            Error::Config(format!("--seed needs an integer, got `{raw}`"))
                        })?;
                        overrides.push(("seed".to_string(), Value::from(seed)));
                    }
                    "out" => {
                        let dir = take_value(args, &mut i, name, inline)?;
                        overrides.push(("out_dir".to_string(), Value::String(dir)));
                    }
                    "strict" => {
                        let value = match inline {
                            Some(raw) => parse_override(&raw),
                            None => Value::Bool(true),
                        };
                        overrides.push(("strict".to_string(), value));
                    }
                    _ if name.contains('.') => {
                        let raw = take_value(args, &mut i, name, inline)?;
                        overrides.push((name.to_string(), parse_override(&raw)));
                    }
                    _ => return Err(Error::Config(format!("unknown flag --{name}"))),
                }
            } else if command.is_none() {
                command = Some(match arg.as_str() {
                    "synth-gen" => Command::SynthGen,
                    "train" => Command::Train,
                    "eval" => Command::Eval,
                    "predict" => Command::Predict,
                    "report" => Command::Report,
                    _ => return Err(Error::Config(format!("unknown subcommand `{arg}`"))),
                });
            } else {
                return Err(Error::Config(format!("unexpected argument `{arg}`")));
            }
            i += 1;
        }
        let command =
            command.ok_or_else(|| Error::Config("missing subcommand; try --help".into()))?;
        Ok(Cli {
            command,
            config_path,
            overrides,
        })
    }
}

fn take_value(args: &[String], i: &mut usize, name: &str, inline: Option<String>) -> Result<String> {
    if let Some(v) = inline {
        return Ok(v);
    }
    *i += 1;
    args.get(*i)
        .cloned()
        .ok_or_else(|| Error::Config(format!("flag --{name} needs a value")))
}

/// Override values are JSON when they parse as JSON, plain strings otherwise
/// (so bare paths and identifiers need no quoting).
fn parse_override(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Where the records come from. Exactly one source per config by
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
    Synthetic {
        #[serde(default)]
        config: SyntheticTaskConfig,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            config: SyntheticTaskConfig::default(),
        }
    }
}

/// Larson-Miller baseline settings: one fit per listed degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmSettings {
    pub degrees: Vec<usize>,
    pub c_lm: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings {
            degrees: vec![1, 2, 3],
            c_lm: 20.0,
        }
    }
}

/// Which amortized/nonparametric models participate in train and eval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSelection {
    pub cnp: bool,
    pub pooled: bool,
    pub gp: bool,
}

impl Default for ModelSelection {
    fn default() -> Self {
        ModelSelection {
            cnp: true,
            pooled: true,
            gp: true,
        }
    }
}

/// Curve-export settings for `eval`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotSettings {
    /// Log-spaced stress grid size per task.
    pub grid_points: usize,
    /// Uncertainty band half-width in predictive sigmas.
    pub band_z: f64,
}

impl Default for PlotSettings {
    fn default() -> Self {
        PlotSettings {
            grid_points: 50,
            band_z: 2.0,
        }
    }
}

impl PlotSettings {
    fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::Config(format!(
                "plot.grid_points must be >= 2, got {}",
                self.grid_points
            )));
        }
        if !(self.band_z > 0.0 && self.band_z.is_finite()) {
            return Err(Error::Config(format!(
                "plot.band_z must be positive, got {}",
                self.band_z
            )));
        }
        Ok(())
    }
}

/// Input files for the `predict` subcommand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictSettings {
    pub context_csv: Option<PathBuf>,
    pub query_csv: Option<PathBuf>,
}

/// The whole run in one document. Every field has a default, so `{}` is a
/// valid config that exercises the synthetic pipeline end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataSource,
    pub split: SplitSpec,
    pub cnp: CnpConfig,
    pub episodes: EpisodeConfig,
    pub pooled: PooledTrainConfig,
    pub models: ModelSelection,
    pub lm: LmSettings,
    pub gp: GpGrid,
    pub eval: EvalProtocol,
    pub plot: PlotSettings,
    pub predict: PredictSettings,
    pub out_dir: PathBuf,
    /// Master seed: when set it replaces every per-stage seed so one flag
    /// reseeds the whole pipeline.
    pub seed: Option<u64>,
    /// Reject datasets containing any malformed row instead of skipping.
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::default(),
            split: SplitSpec::default(),
            cnp: CnpConfig::default(),
            episodes: EpisodeConfig::default(),
            pooled: PooledTrainConfig::default(),
            models: ModelSelection::default(),
            lm: LmSettings::default(),
            gp: GpGrid::default(),
            eval: EvalProtocol::default(),
            plot: PlotSettings::default(),
            predict: PredictSettings::default(),
            out_dir: PathBuf::from("out"),
            seed: None,
            strict: false,
        }
    }
}

impl RunConfig {
    fn apply_master_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.split.seed = seed;
            self.episodes.seed = seed;
            self.pooled.seed = seed;
            self.eval.base_seed = seed;
            if let DataSource::Synthetic { config } = &mut self.data {
                config.seed = seed;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Synthetic { config } = &self.data {
            config.validate()?;
        }
        self.split.validate()?;
        self.cnp.validate()?;
        self.episodes.validate()?;
        self.pooled.validate()?;
        self.gp.validate()?;
        self.eval.validate()?;
        self.plot.validate()?;
        for &d in &self.lm.degrees {
            if d == 0 {
                return Err(Error::Config("lm.degrees entries must be >= 1".into()));
            }
        }
        if !(self.lm.c_lm > 0.0 && self.lm.c_lm.is_finite()) {
            return Err(Error::Config(format!(
                "lm.c_lm must be positive, got {}",
                self.lm.c_lm
            )));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("out_dir must not be empty".into()));
        }
        Ok(())
    }
}

/// Sets `dotted` (e.g. `eval.runs`) to `value`, creating intermediate
/// objects as needed.
fn set_path(root: &mut Value, dotted: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override path `{dotted}`")));
    }
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        let obj = cur.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override `{dotted}`: `{part}` is not an object"))
        })?;
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let last = parts[parts.len() - 1];
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("override `{dotted}`: parent is not an object")))?;
    obj.insert(last.to_string(), value);
    Ok(())
}

/// Records every dotted path reachable in `value`, intermediate objects
/// included. Key order is deterministic because `serde_json` maps are sorted.
fn known_paths(value: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(map) = value {
        for (key, child) in map {
            let path = if prefix.is_empty() {
                key.clone()
            } else {
                format!("{prefix}.{key}")
            };
            known_paths(child, &path, out);
            out.push(path);
        }
    }
}

/// Serde drops unknown keys, so a mistyped override (`--train.epochs=8`)
/// would otherwise run the whole pipeline on defaults. Walk every override
/// path through the re-serialized config and fail when one lands nowhere.
fn reject_unknown_overrides(cfg: &RunConfig, overrides: &[(String, Value)]) -> Result<()> {
    let resolved = serde_json::to_value(cfg)?;
    let mut known = Vec::new();
    known_paths(&resolved, "", &mut known);
    for (dotted, _) in overrides {
        if known.contains(dotted) {
            continue;
        }
        let leaf = dotted.rsplit('.').next().unwrap_or(dotted);
        let near: Vec<String> = known
            .iter()
            .filter(|k| k.rsplit('.').next() == Some(leaf))
            .map(|k| format!("`{k}`"))
            .collect();
        let mut msg = format!("unknown config key `{dotted}`");
        match near.len() {
            0 => {}
            1 => msg.push_str(&format!("; did you mean {}?", near[0])),
            _ => msg.push_str(&format!("; did you mean one of {}?", near.join(", "))),
        }
        return Err(Error::Config(msg));
    }
    Ok(())
}

/// Fills in `data.kind` when overrides touched the data section without
/// naming it: `path`/`schema` imply csv, `config` (or nothing) implies
/// synthetic, and a mix is rejected.
fn infer_data_kind(root: &mut Value) -> Result<()> {
    let Some(data) = root.get_mut("data") else {
        return Ok(());
    };
    let obj = data
        .as_object_mut()
        .ok_or_else(|| Error::Config("data must be an object".into()))?;
    if obj.contains_key("kind") {
        return Ok(());
    }
    let csv_like = obj.contains_key("path") || obj.contains_key("schema");
    let synth_like = obj.contains_key("config");
    let kind = match (csv_like, synth_like) {
        (true, true) => {
            return Err(Error::Config(
                "data mixes csv and synthetic fields; set data.kind explicitly".into(),
            ))
        }
        (true, false) => "csv",
        (false, _) => "synthetic",
    };
    obj.insert("kind".to_string(), Value::String(kind.to_string()));
    Ok(())
}

/// Fills in `eval.context.mode` when overrides left it out: `count` implies
/// fixed, `fraction`/`min` imply fraction, and a mix is rejected.
fn infer_context_mode(root: &mut Value) -> Result<()> {
    let Some(context) = root.get_mut("eval").and_then(|e| e.get_mut("context")) else {
        return Ok(());
    };
    let obj = context
        .as_object_mut()
        .ok_or_else(|| Error::Config("eval.context must be an object".into()))?;
    if obj.contains_key("mode") {
        return Ok(());
    }
    let fixed_like = obj.contains_key("count");
    let fraction_like = obj.contains_key("fraction") || obj.contains_key("min");
    let mode = match (fixed_like, fraction_like) {
        (true, true) => {
            return Err(Error::Config(
                "eval.context mixes fixed and fraction fields; set eval.context.mode".into(),
            ))
        }
        (true, false) => "fixed",
        (false, _) => "fraction",
    };
    obj.insert("mode".to_string(), Value::String(mode.to_string()));
    Ok(())
}

/// Loads the config file (or `{}`), applies overrides in order, then
/// deserializes, reseeds, and validates. Every override has to land on a
/// real config field; a typo is an error, not a silent default.
pub fn load(cli: &Cli) -> Result<RunConfig> {
    let mut value = match &cli.config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!("config {} is not valid JSON: {e}", path.display()))
            })?
        }
        None => Value::Object(Default::default()),
    };
    if !value.is_object() {
        return Err(Error::Config("config root must be a JSON object".into()));
    }
    for (path, v) in &cli.overrides {
        set_path(&mut value, path, v.clone())?;
    }
    infer_data_kind(&mut value)?;
    infer_context_mode(&mut value)?;
    let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("config value at `{path}`: {}", e.into_inner()))
    })?;
    reject_unknown_overrides(&cfg, &cli.overrides)?;
    cfg.apply_master_seed();
    cfg.validate()?;
    Ok(cfg)
}
