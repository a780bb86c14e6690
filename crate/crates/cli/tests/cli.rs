//! Black-box tests of the `creep-meta` binary: exit codes, artifact
//! layout, determinism, and the predict flow.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use creep_meta::data::{load_csv, CsvSchema};

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_creep-meta"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A deliberately small pipeline: enough data to split and train, tiny
/// networks, two evaluation runs.
fn tiny_config() -> Vec<&'static str> {
    vec![
        "--data.config.tasks=14",
        "--data.config.points_per_task=[8,10]",
        "--episodes.epochs=2",
        "--episodes.episodes_per_epoch=20",
        "--episodes.m_max=5",
        "--cnp.d_r=8",
        "--cnp.encoder_hidden=[8]",
        "--cnp.decoder_hidden=[8]",
        "--pooled.hidden=[8]",
        "--pooled.epochs=2",
        "--split.heldout_count=3",
        "--eval.runs=2",
        "--eval.context.min=4",
        "--lm.degrees=[1,2]",
        "--plot.grid_points=10",
        "--seed=9",
    ]
}

fn train_args() -> Vec<&'static str> {
    let mut args = vec!["train"];
    args.extend(tiny_config());
    args
}

fn eval_args() -> Vec<&'static str> {
    let mut args = vec!["eval"];
    args.extend(tiny_config());
    args
}

#[test]
fn train_then_eval_produces_the_documented_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &train_args());
    assert!(out.status.success(), "train failed: {}", stderr_of(&out));
    for name in [
        "split_manifest.json",
        "checkpoint.json",
        "pooled.json",
        "train_log.json",
    ] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }

    let out = run_in(dir.path(), &eval_args());
    assert!(out.status.success(), "eval failed: {}", stderr_of(&out));
    for name in ["report.json", "report.txt", "experiment.json"] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    let plots: Vec<_> = fs::read_dir(dir.path().join("plots")).unwrap().collect();
    assert_eq!(plots.len(), 3, "one plot per held-out task");
    let table = stdout_of(&out);
    assert!(table.starts_with("model"), "stdout: {table}");
    for model in ["cnp", "gp", "lm_d1", "lm_d2", "pooled"] {
        assert!(table.contains(model), "missing {model} in table");
    }
    assert_eq!(table, fs::read_to_string(dir.path().join("report.txt")).unwrap());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        assert!(run_in(dir, &train_args()).status.success());
        assert!(run_in(dir, &eval_args()).status.success());
    }
    for name in [
        "split_manifest.json",
        "checkpoint.json",
        "pooled.json",
        "train_log.json",
        "report.json",
        "report.txt",
        "experiment.json",
    ] {
        let bytes_a = fs::read(a.path().join(name)).unwrap();
        let bytes_b = fs::read(b.path().join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between reruns");
    }
    let mut plot_names: Vec<String> = fs::read_dir(a.path().join("plots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    plot_names.sort();
    assert!(!plot_names.is_empty());
    for name in &plot_names {
        let bytes_a = fs::read(a.path().join("plots").join(name)).unwrap();
        let bytes_b = fs::read(b.path().join("plots").join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "plots/{name} differs between reruns");
    }
}

#[test]
fn synth_gen_writes_a_loadable_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["synth-gen", "--seed=4", "--data.config.tasks=6"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report = load_csv(&dir.path().join("data.csv"), &CsvSchema::default()).unwrap();
    assert_eq!(report.rejected_count(), 0);
    assert!(report.accepted() > 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("synth_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["tasks"].as_array().unwrap().len(), 6);
    assert_eq!(manifest["seed"], 4);
}

#[test]
fn synth_gen_with_zero_tasks_writes_header_only_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["synth-gen", "--data.config.tasks=0"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let csv = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert_eq!(csv.lines().next().unwrap(), "cast_code,material,stress_mpa,temp_c,time_h");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("synth_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["tasks"].as_array().unwrap().len(), 0);
}

#[test]
fn synth_gen_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        assert!(run_in(dir, &["synth-gen", "--seed=11"]).status.success());
    }
    for name in ["data.csv", "synth_manifest.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn missing_csv_column_exits_3_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("broken.csv");
    fs::write(&data, "cast_code,material,stress_mpa,temp_c\nA,steel,100,550\n").unwrap();
    let path_flag = format!("--data.path={}", data.display());
    let out = run_in(dir.path(), &["train", &path_flag]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("time_h"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["train", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["launch"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["eval", "--eval.runs=0"]).status.code(), Some(2));
    assert_eq!(
        run_in(dir.path(), &["synth-gen", "--data.path=x.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(run_in(dir.path(), &["predict"]).status.code(), Some(2));

    // a typo'd override must fail loudly, not run the pipeline on defaults
    let out = run_in(dir.path(), &["train", "--train.epochs=2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("unknown config key `train.epochs`"), "{err}");
    assert!(err.contains("`episodes.epochs`"), "{err}");
}

#[test]
fn strict_mode_turns_skipped_rows_into_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run_in(dir.path(), &["synth-gen", "--seed=8", "--data.config.tasks=14"]);
    assert!(gen.status.success());
    // append one malformed row
    let data = dir.path().join("data.csv");
    let mut text = fs::read_to_string(&data).unwrap();
    text.push_str("BAD,steel,-5,550,100\n");
    fs::write(&data, text).unwrap();

    let path_flag = format!("--data.path={}", data.display());
    let mut lenient: Vec<&str> = train_args()
        .into_iter()
        .filter(|a| !a.starts_with("--data."))
        .collect();
    lenient.push(&path_flag);
    let out = run_in(dir.path(), &lenient);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("skipped 1 malformed row"));

    let mut strict = lenient.clone();
    strict.push("--strict");
    let out = run_in(dir.path(), &strict);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("nonpositive stress"));
}

#[test]
fn checkpoint_architecture_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &train_args()).status.success());
    let mut args = eval_args();
    args.push("--cnp.d_x=3");
    let out = run_in(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("d_x"));
}

#[test]
fn eval_without_a_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &eval_args());
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    // the error has to say which file is missing, not just ENOENT
    assert!(stderr_of(&out).contains("checkpoint.json"), "{}", stderr_of(&out));
}

#[test]
fn eval_with_a_drifted_split_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &train_args()).status.success());
    let mut args = eval_args();
    args.push("--split.heldout_count=4");
    let out = run_in(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("manifest"));
}

fn parse_predictions(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| line.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn predict_writes_rows_and_is_permutation_invariant() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &train_args()).status.success());

    let context = dir.path().join("context.csv");
    fs::write(
        &context,
        "cast_code,material,stress_mpa,temp_c,time_h\n\
         X,steel,120,550,800\n\
         X,steel,200,550,50\n\
         X,steel,90,600,30\n",
    )
    .unwrap();
    let query = dir.path().join("query.csv");
    fs::write(&query, "stress_mpa,temp_c\n150,550\n100,600\n").unwrap();

    let ctx_flag = format!("--predict.context_csv={}", context.display());
    let query_flag = format!("--predict.query_csv={}", query.display());
    let out = run_in(dir.path(), &["predict", &ctx_flag, &query_flag]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let first = parse_predictions(&dir.path().join("predictions.csv"));
    assert_eq!(first.len(), 2);
    for row in &first {
        assert_eq!(row.len(), 6);
        let (mu, sigma, lo, hi) = (row[2], row[3], row[4], row[5]);
        assert!(sigma > 0.0);
        assert!((lo - (mu - 2.0 * sigma)).abs() < 1e-12);
        assert!((hi - (mu + 2.0 * sigma)).abs() < 1e-12);
    }

    // reverse the context rows; predictions must not move
    fs::write(
        &context,
        "cast_code,material,stress_mpa,temp_c,time_h\n\
         X,steel,90,600,30\n\
         X,steel,200,550,50\n\
         X,steel,120,550,800\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["predict", &ctx_flag, &query_flag]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let second = parse_predictions(&dir.path().join("predictions.csv"));
    for (a, b) in first.iter().zip(&second) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }
}

#[test]
fn predict_accepts_a_header_only_context() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &train_args()).status.success());
    let context = dir.path().join("context.csv");
    fs::write(&context, "cast_code,material,stress_mpa,temp_c,time_h\n").unwrap();
    let query = dir.path().join("query.csv");
    fs::write(&query, "stress_mpa,temp_c\n150,550\n").unwrap();
    let ctx_flag = format!("--predict.context_csv={}", context.display());
    let query_flag = format!("--predict.query_csv={}", query.display());
    let out = run_in(dir.path(), &["predict", &ctx_flag, &query_flag]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let rows = parse_predictions(&dir.path().join("predictions.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].iter().all(|v| v.is_finite()));
}

#[test]
fn report_rerenders_the_saved_table() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &train_args()).status.success());
    assert!(run_in(dir.path(), &eval_args()).status.success());
    let out = run_in(dir.path(), &["report"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(
        stdout_of(&out),
        fs::read_to_string(dir.path().join("report.txt")).unwrap()
    );
}

#[test]
fn report_without_artifacts_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["report"]).status.code(), Some(3));
}

#[test]
fn help_prints_usage_and_exits_zero() {
    let out = Command::new(env!("CARGO_BIN_EXE_creep-meta"))
        .arg("--help")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout_of(&out).contains("usage: creep-meta"));
}
