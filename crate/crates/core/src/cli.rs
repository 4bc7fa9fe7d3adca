//! Command-line front end: `gen-data`, `train`, `eval`, `sweep`, `check-rules`.
//!
//! Exit codes: 0 success, 1 runtime or numeric failure, 2 usage, config or
//! parse failure.
//!
//! # Experiment config
//!
//! `train` and `sweep` read one JSON document. Every field is optional
//! except `data`; relative paths resolve against the config file's directory.
//!
//! ```json
//! {
//!   "rules": "poc.rules",
//!   "data": { "generate": { "kind": "classification", "n": 1000, "seed": 42 } },
//!   "val_data": null,
//!   "architecture": [
//!     { "input_dim": 2, "output_dim": 10, "activation": "relu" },
//!     { "input_dim": 10, "output_dim": 2, "activation": "identity" }
//!   ],
//!   "training": {
//!     "lambda": 1.0, "epochs": 20, "batch_size": 32, "seed": 0,
//!     "learning_rate": 0.01, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8,
//!     "loss": "cross_entropy", "validation_fraction": 0.2, "shuffle": true
//!   },
//!   "output_dir": "runs/poc"
//! }
//! ```
//!
//! `data` is either `{"generate": {...}}` or `{"path": "train.csv"}`. Without
//! `val_data` the last `validation_fraction` of the rows are held out. A
//! missing `architecture` means `d -> 10 (relu) -> outputs (identity)`; a
//! missing `loss` means cross-entropy for classification and MSE for
//! regression.
//!
//! Precedence for every training field: command-line flag, then (for the
//! seed only) the `SAIFDL_SEED` environment variable, then the config file,
//! then the defaults above.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError, Dataset};
use crate::nn::{self, Checkpoint, LayerSpec, LossKind, NnError};
use crate::penalty::{self, PenaltyError, SatisfactionReport};
use crate::rulelang::{self, RuleError, RuleSet};
use crate::tensor::Task;
use crate::trainer::{
    self, EpochMetrics, Experiment, Metric, RunResult, TrainError, TrainingConfig,
};

pub const SEED_ENV: &str = "SAIFDL_SEED";

pub const CURVES_HEADER: &str =
    "epoch,train_base,train_penalty,train_total,val_base,val_penalty,val_total,val_accuracy,val_satisfaction";

pub const SUMMARY_HEADER: &str =
    "lambda,runs,failed,median_val_accuracy,median_val_satisfaction,median_train_penalty,median_train_val_gap";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config, or input files. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while doing the work. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<RuleError> for CliError {
    fn from(e: RuleError) -> Self {
        usage(e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => usage(e),
            _ => runtime(e),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Domain(_) => runtime(e),
            _ => usage(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "saifdl",
    version,
    about = "Train small networks under declarative domain rules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Two uniform features, label `x1 + x2 > 1`.
    Classification,
    /// Two uniform features, voltage target `3 + 1.5 x1 + noise`.
    Regression,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model; writes curves.csv, result.json, model.json and val.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report accuracy (or MSE) and rule satisfaction of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Train once per lambda (and seed) and summarise.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
        lambdas: Vec<f64>,
        /// Consecutive seeds per lambda, starting at the configured seed.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the exact satisfaction of a rule file by a checkpoint on a dataset.
    CheckRules {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Generate { kind: DataKind, n: usize, seed: u64 },
    Path(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub loss: Option<LossKind>,
    pub validation_fraction: Option<f64>,
    pub shuffle: Option<bool>,
}

/// The config file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub rules: Option<PathBuf>,
    pub data: DataSource,
    #[serde(default)]
    pub val_data: Option<PathBuf>,
    #[serde(default)]
    pub architecture: Option<Vec<LayerSpec>>,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Every effective setting of a run, echoed into result.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub rules: Option<PathBuf>,
    pub data: DataSource,
    pub val_data: Option<PathBuf>,
    pub task: Task,
    pub architecture: Vec<LayerSpec>,
    pub training: TrainingConfig,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Everything needed to train: the effective settings plus loaded inputs.
#[derive(Debug, Clone)]
pub struct LoadedExperiment {
    pub resolved: ResolvedConfig,
    pub experiment: Experiment,
}

/// Applies precedence (flags > env seed > file > defaults) and loads the
/// rule file and datasets.
pub fn prepare(
    config_path: &Path,
    overrides: &Overrides,
    env_seed: Option<&str>,
    out: Option<&Path>,
) -> Result<LoadedExperiment, CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));

    let data_source = match &cfg.data {
        DataSource::Path(p) => DataSource::Path(resolve_path(base, p)),
        g => g.clone(),
    };
    let full = match &data_source {
        DataSource::Generate { kind, n, seed } => generate(*kind, *n, *seed)?,
        DataSource::Path(p) => data::load_csv(p)?,
    };
    let val_path = cfg.val_data.as_ref().map(|p| resolve_path(base, p));
    let rules_path = cfg.rules.as_ref().map(|p| resolve_path(base, p));
    let rules = match &rules_path {
        Some(p) => read_rules(p)?,
        None => RuleSet::default(),
    };

    let task = full.task();
    let t = &cfg.training;
    let defaults = TrainingConfig::default();
    let env_seed = env_seed
        .map(|s| {
            s.trim().parse::<u64>().map_err(|_| {
                usage(format!(
                    "{SEED_ENV}={s:?} is not an unsigned 64-bit integer"
                ))
            })
        })
        .transpose()?;
    let training = TrainingConfig {
        lambda: overrides.lambda.or(t.lambda).unwrap_or(defaults.lambda),
        epochs: overrides.epochs.or(t.epochs).unwrap_or(defaults.epochs),
        batch_size: overrides
            .batch_size
            .or(t.batch_size)
            .unwrap_or(defaults.batch_size),
        seed: overrides
            .seed
            .or(env_seed)
            .or(t.seed)
            .unwrap_or(defaults.seed),
        learning_rate: overrides
            .learning_rate
            .or(t.learning_rate)
            .unwrap_or(defaults.learning_rate),
        beta1: t.beta1.unwrap_or(defaults.beta1),
        beta2: t.beta2.unwrap_or(defaults.beta2),
        epsilon: t.epsilon.unwrap_or(defaults.epsilon),
        loss: t.loss.unwrap_or(LossKind::default_for(task)),
        validation_fraction: t
            .validation_fraction
            .unwrap_or(defaults.validation_fraction),
        shuffle: t.shuffle.unwrap_or(defaults.shuffle),
    };
    training.validate()?;

    let (train, val) = match &val_path {
        Some(p) => (full, data::load_csv(p)?),
        None => full.split_tail(training.validation_fraction),
    };
    let outputs = match task {
        Task::Classification => train.class_count().max(val.class_count()).max(2),
        Task::Regression => 1,
    };
    let architecture = cfg
        .architecture
        .clone()
        .unwrap_or_else(|| nn::default_architecture(train.feature_dim(), outputs));
    let output_dir = match (out, &cfg.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => resolve_path(base, d),
        (None, None) => PathBuf::from("runs"),
    };

    Ok(LoadedExperiment {
        resolved: ResolvedConfig {
            rules: rules_path,
            data: data_source,
            val_data: val_path,
            task,
            architecture: architecture.clone(),
            training: training.clone(),
            output_dir,
        },
        experiment: Experiment {
            architecture,
            task,
            rules,
            train,
            val,
            config: training,
        },
    })
}

fn generate(kind: DataKind, n: usize, seed: u64) -> Result<Dataset, DataError> {
    match kind {
        DataKind::Classification => data::generate_classification(n, seed),
        DataKind::Regression => data::generate_regression_demo(n, seed),
    }
}

fn read_rules(path: &Path) -> Result<RuleSet, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read rules {}: {e}", path.display())))?;
    rulelang::parse_rules(&text).map_err(|e| usage(format!("{}:{e}", path.display())))
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    write_atomic(path, contents)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `curves.csv`: one row per epoch under [`CURVES_HEADER`]. The accuracy
/// cell is empty for regression.
pub fn curves_csv(curves: &[EpochMetrics]) -> String {
    let mut out = format!("{CURVES_HEADER}\n");
    for m in curves {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            m.epoch,
            m.train_base,
            m.train_penalty,
            m.train_total,
            m.val_base,
            m.val_penalty,
            m.val_total,
            opt(m.val_accuracy),
            m.val_satisfaction
        )
        .expect("writing to a String cannot fail");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionJson {
    pub applicable: usize,
    pub satisfied: usize,
    pub ratio: f64,
}

impl From<SatisfactionReport> for SatisfactionJson {
    fn from(r: SatisfactionReport) -> Self {
        SatisfactionJson {
            applicable: r.applicable_count,
            satisfied: r.satisfied_count,
            ratio: r.ratio(),
        }
    }
}

/// Layout of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub final_accuracy: Option<f64>,
    pub final_domain_satisfaction: f64,
    pub satisfaction: SatisfactionJson,
    pub train_val_gap: f64,
    pub final_epoch: EpochMetrics,
    pub config: ResolvedConfig,
}

/// Writes all artifacts of one run into `dir`.
pub fn write_run(
    dir: &Path,
    resolved: &ResolvedConfig,
    exp: &Experiment,
    run: &RunResult,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    let result = ResultJson {
        final_accuracy: run.final_accuracy,
        final_domain_satisfaction: run.final_domain_satisfaction,
        satisfaction: run.final_satisfaction.into(),
        train_val_gap: run.train_val_gap(),
        final_epoch: run.last_epoch().clone(),
        config: ResolvedConfig {
            training: run.config.clone(),
            output_dir: dir.to_path_buf(),
            ..resolved.clone()
        },
    };
    write_file(&dir.join("curves.csv"), &curves_csv(&run.curves))?;
    write_file(
        &dir.join("model.json"),
        &Checkpoint::from_network(&run.network).to_json(),
    )?;
    let val = if exp.val.is_empty() {
        &exp.train
    } else {
        &exp.val
    };
    write_file(&dir.join("val.csv"), &data::to_csv_string(val))?;
    write_file(&dir.join("rules.txt"), &rulelang::format_rules(&exp.rules))?;
    write_file(
        &dir.join("result.json"),
        &serde_json::to_string_pretty(&result).expect("result serialisation cannot fail"),
    )?;
    Ok(())
}

fn cmd_gen_data(
    kind: DataKind,
    n: usize,
    seed: u64,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let ds = generate(kind, n, seed)?;
    write_file(out, &data::to_csv_string(&ds))?;
    writeln!(stdout, "wrote {} rows to {}", ds.len(), out.display()).map_err(runtime)?;
    Ok(())
}

fn cmd_train(
    config: &Path,
    overrides: &Overrides,
    env_seed: Option<&str>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let loaded = prepare(config, overrides, env_seed, out)?;
    let run = loaded.experiment.run()?;
    let dir = &loaded.resolved.output_dir;
    write_run(dir, &loaded.resolved, &loaded.experiment, &run)?;
    writeln!(
        stdout,
        "{}",
        serde_json::json!({
            "output_dir": dir,
            "final_accuracy": run.final_accuracy,
            "final_domain_satisfaction": run.final_domain_satisfaction,
        })
    )
    .map_err(runtime)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<nn::Network, CliError> {
    nn::load_checkpoint(path).map_err(|e| match e {
        NnError::Io(io) => usage(format!("cannot read checkpoint {}: {io}", path.display())),
        other => usage(format!("{}: {other}", path.display())),
    })
}

fn penalty_to_cli(e: PenaltyError) -> CliError {
    runtime(e)
}

fn cmd_eval(
    checkpoint: &Path,
    data_path: &Path,
    rules: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let net = load_model(checkpoint)?;
    let ds = data::load_csv(data_path)?;
    let rules = match rules {
        Some(p) => read_rules(p)?,
        None => RuleSet::default(),
    };
    let ev = trainer::evaluate(&net, &rules, &ds).map_err(|e| match e {
        TrainError::Penalty(p) => penalty_to_cli(p),
        other => other.into(),
    })?;
    let mut obj = serde_json::Map::new();
    match ev.metric {
        Metric::Accuracy(a) => obj.insert("accuracy".into(), a.into()),
        Metric::Mse(m) => obj.insert("mse".into(), m.into()),
    };
    obj.insert(
        "satisfaction".into(),
        serde_json::to_value(SatisfactionJson::from(ev.satisfaction)).expect("plain struct"),
    );
    writeln!(stdout, "{}", serde_json::Value::Object(obj)).map_err(runtime)?;
    Ok(())
}

fn cmd_check_rules(
    rules: &Path,
    data_path: &Path,
    checkpoint: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let rules = read_rules(rules)?;
    let ds = data::load_csv(data_path)?;
    let net = load_model(checkpoint)?;
    if ds.feature_dim() != net.input_dim() {
        return Err(runtime(format!(
            "data has {} features but the model takes {}",
            ds.feature_dim(),
            net.input_dim()
        )));
    }
    let (pred, _) = nn::forward(&net, &ds.features).map_err(runtime)?;
    let report = penalty::exact_satisfaction(&rules, &ds.features, &pred, net.task())
        .map_err(penalty_to_cli)?;
    writeln!(
        stdout,
        "{}",
        serde_json::to_string(&SatisfactionJson::from(report)).expect("plain struct")
    )
    .map_err(runtime)?;
    Ok(())
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub runs: usize,
    pub failed: usize,
    pub median_val_accuracy: Option<f64>,
    pub median_val_satisfaction: Option<f64>,
    pub median_train_penalty: Option<f64>,
    pub median_train_val_gap: Option<f64>,
}

pub fn summary_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.lambda,
            r.runs,
            r.failed,
            opt(r.median_val_accuracy),
            opt(r.median_val_satisfaction),
            opt(r.median_train_penalty),
            opt(r.median_train_val_gap)
        )
        .expect("writing to a String cannot fail");
    }
    out
}

fn median_of(results: &[&RunResult], f: impl Fn(&RunResult) -> Option<f64>) -> Option<f64> {
    let v: Option<Vec<f64>> = results.iter().map(|r| f(r)).collect();
    v.filter(|v| !v.is_empty()).map(|v| trainer::median(&v))
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    config: &Path,
    lambdas: &[f64],
    seeds: usize,
    jobs: Option<usize>,
    overrides: &Overrides,
    env_seed: Option<&str>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if lambdas.is_empty() {
        return Err(usage("--lambdas needs at least one value"));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(usage(format!(
            "lambda values must be finite and >= 0, got {bad}"
        )));
    }
    if seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    let loaded = prepare(config, overrides, env_seed, out)?;
    let root = loaded.resolved.output_dir.clone();
    let base_seed = loaded.experiment.config.seed;

    let mut tasks = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        for s in 0..seeds as u64 {
            let seed = base_seed.wrapping_add(s);
            let dir = root
                .join(format!("{i:02}_lambda_{lambda}"))
                .join(format!("seed_{seed}"));
            tasks.push((
                i,
                dir,
                loaded.experiment.with_lambda(lambda).with_seed(seed),
            ));
        }
    }
    let workers = jobs.unwrap_or_else(|| trainer::default_workers(lambdas.len()));
    let outcomes = trainer::parallel_map(&tasks, workers, |(_, dir, exp)| {
        let run = exp.run().map_err(CliError::from)?;
        write_run(dir, &loaded.resolved, exp, &run)?;
        Ok::<_, CliError>(run)
    });

    let mut rows = Vec::new();
    let mut any_failed = false;
    for (i, &lambda) in lambdas.iter().enumerate() {
        let mut ok = Vec::new();
        let mut failed = 0;
        for ((j, dir, _), outcome) in tasks.iter().zip(&outcomes) {
            if *j != i {
                continue;
            }
            match outcome {
                Ok(run) => ok.push(run),
                Err(e) => {
                    failed += 1;
                    let _ = std::fs::create_dir_all(dir);
                    let _ = write_atomic(&dir.join("error.txt"), &format!("{e}\n"));
                    writeln!(stdout, "run {} failed: {e}", dir.display()).map_err(runtime)?;
                }
            }
        }
        any_failed |= failed > 0;
        rows.push(SweepRow {
            lambda,
            runs: seeds,
            failed,
            median_val_accuracy: median_of(&ok, |r| r.final_accuracy),
            median_val_satisfaction: median_of(&ok, |r| Some(r.final_domain_satisfaction)),
            median_train_penalty: median_of(&ok, |r| Some(r.last_epoch().train_penalty)),
            median_train_val_gap: median_of(&ok, |r| Some(r.train_val_gap())),
        });
    }
    std::fs::create_dir_all(&root)
        .map_err(|e| runtime(format!("cannot create {}: {e}", root.display())))?;
    let summary = summary_csv(&rows);
    write_file(&root.join("summary.csv"), &summary)?;
    write!(stdout, "{summary}").map_err(runtime)?;
    if any_failed {
        return Err(runtime("one or more sweep runs failed"));
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, env_seed: Option<&str>, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            write!(stdout, "{e}").map_err(runtime)?;
            return Ok(());
        }
        Err(e) => return Err(usage(e.render())),
    };
    match cli.command {
        Command::GenData { kind, n, seed, out } => cmd_gen_data(kind, n, seed, &out, stdout),
        Command::Train {
            config,
            overrides,
            out,
        } => cmd_train(&config, &overrides, env_seed, out.as_deref(), stdout),
        Command::Eval {
            checkpoint,
            data,
            rules,
        } => cmd_eval(&checkpoint, &data, rules.as_deref(), stdout),
        Command::Sweep {
            config,
            lambdas,
            seeds,
            jobs,
            overrides,
            out,
        } => cmd_sweep(
            &config,
            &lambdas,
            seeds,
            jobs,
            &overrides,
            env_seed,
            out.as_deref(),
            stdout,
        ),
        Command::CheckRules {
            rules,
            data,
            checkpoint,
        } => cmd_check_rules(&rules, &data, &checkpoint, stdout),
    }
}

/// Process entry point; returns the exit code.
pub fn main() -> i32 {
    let env_seed = std::env::var(SEED_ENV).ok();
    let mut stdout = std::io::stdout();
    match run(std::env::args_os(), env_seed.as_deref(), &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string();
            eprintln!("error: {}", msg.trim_start_matches("error: ").trim_end());
            e.exit_code()
        }
    }
}
