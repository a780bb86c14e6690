//! `creep-meta`: reproducible creep rupture life experiments from one JSON
//! config. Subcommands cover synthetic data generation, meta-training,
//! evaluation, ad-hoc prediction, and report rendering.
//!
//! Logs go to stderr; machine-readable artifacts go to the output directory;
//! the metrics table is the only thing printed to stdout.

mod commands;
mod config;

use creep_meta::ErrorClass;

use crate::config::{Cli, Command};

const USAGE: &str = "\
usage: creep-meta <command> [options]

commands:
  synth-gen   generate a synthetic dataset (CSV + ground-truth manifest)
  train       split the dataset, meta-train the CNP, pretrain the pooled net
  eval        run the repeated-evaluation protocol on held-out tasks
  predict     predict rupture life for a query CSV given a context CSV
  report      re-render the metrics table from a saved report

options:
  --config PATH     JSON config file (defaults apply when omitted)
  --seed N          master seed; overrides every per-stage seed
  --out DIR         output directory (default: out)
  --strict          treat any malformed CSV row as a fatal error
  --KEY.PATH=VALUE  override any config key, e.g. --eval.runs=5
  --help            print this help
";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Err(err) = run(&args) {
        eprintln!("error: {err}");
        let code = match err.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        };
        std::process::exit(code);
    }
}

fn run(args: &[String]) -> creep_meta::Result<()> {
    let cli = Cli::parse(args)?;
    if cli.command == Command::Help {
        print!("{USAGE}");
        return Ok(());
    }
    let cfg = config::load(&cli)?;
    match cli.command {
        Command::SynthGen => commands::cmd_synth_gen(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Eval => commands::cmd_eval(&cfg),
        Command::Predict => commands::cmd_predict(&cfg),
        Command::Report => commands::cmd_report(&cfg),
        Command::Help => unreachable!("handled above"),
    }
}
