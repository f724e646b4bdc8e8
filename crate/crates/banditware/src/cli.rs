//! Command line interface.
//!
//! Exit codes: 0 on success, 1 for usage problems (bad flags or flag values),
//! 2 for data problems (unreadable or malformed inputs), 3 for runtime
//! failures such as a benchmark checksum mismatch.

use crate::bandit::{BanditError, BanditState};
use crate::dataset::{
    load_csv, load_hardware_csv, write_csv, write_hardware_csv, Dataset, DatasetError,
    ReplayEnvironment,
};
use crate::experiment::{
    linear_regression_baseline, run_repeated, ExperimentConfig, ExperimentError,
    ExperimentReport,
};
use crate::synth::{
    bench_matmul, default_scenario, generate_dataset, MatmulGrid, Scenario, SynthError,
    MATMUL_FEATURES,
};
use crate::types::FeatureVector;
use crate::BanditConfig;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable consulted when `--threads` is not given.
pub const THREADS_ENV: &str = "BANDITWARE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(err: DatasetError) -> Self {
        match err {
            DatasetError::InstanceOutOfRange(_) => CliError::Runtime(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(err: SynthError) -> Self {
        match err {
            SynthError::InvalidGrid(_) => CliError::Usage(err.to_string()),
            SynthError::ChecksumMismatch { .. } => CliError::Runtime(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<BanditError> for CliError {
    fn from(err: BanditError) -> Self {
        match err {
            BanditError::InvalidConfig(_)
            | BanditError::FeatureMismatch
            | BanditError::UnknownHardwareId(_)
            | BanditError::MissingHistory => CliError::Usage(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(err: ExperimentError) -> Self {
        match err {
            ExperimentError::Config(_) => CliError::Usage(err.to_string()),
            ExperimentError::Bandit(inner) => inner.into(),
            ExperimentError::Dataset(inner) => inner.into(),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "banditware",
    version,
    about = "Hardware recommendation via a decaying epsilon-greedy bandit",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for repeated simulations (falls back to the
    /// BANDITWARE_THREADS environment variable, then to 1).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay a runtime dataset through repeated bandit simulations.
    Simulate(SimulateArgs),
    /// Generate a synthetic runtime dataset from a scenario file.
    Synth(SynthArgs),
    /// Benchmark matrix squaring across worker counts on this machine.
    BenchMatmul(BenchMatmulArgs),
    /// Fit repeated small-sample linear regressions as a reference point.
    Baseline(BaselineArgs),
    /// Recommend hardware for one feature vector using a saved model.
    Recommend(RecommendArgs),
    /// Convert an experiment report to CSV curves.
    Report(ReportArgs),
}

/// Flags shared by every subcommand that reads a runtime CSV.
#[derive(Debug, Args)]
struct TableArgs {
    /// Runtime dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Feature columns, comma separated. Defaults to every column that is
    /// not the instance, hardware, or runtime column.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Column holding the hardware id.
    #[arg(long, default_value = "hardware")]
    hardware_column: String,
    /// Column holding the observed runtime in seconds.
    #[arg(long, default_value = "runtime_seconds")]
    runtime_column: String,
    /// Column grouping rows into task instances. Defaults to a column named
    /// "instance" when one exists, otherwise rows are grouped by their
    /// feature values.
    #[arg(long)]
    instance_column: Option<String>,
}

#[derive(Debug, Args)]
struct BanditFlags {
    /// Multiplicative epsilon decay per round.
    #[arg(long, default_value_t = 0.99)]
    alpha: f64,
    /// Initial exploration probability.
    #[arg(long, default_value_t = 1.0)]
    epsilon0: f64,
    /// Relative slowdown tolerated when trading speed for frugality.
    #[arg(long, default_value_t = 0.0)]
    tolerance_ratio: f64,
    /// Absolute slowdown in seconds tolerated on top of the ratio.
    #[arg(long, default_value_t = 0.0)]
    tolerance_seconds: f64,
    /// Ridge regularization applied to every model fit.
    #[arg(long, default_value_t = 1e-8)]
    ridge_lambda: f64,
}

impl BanditFlags {
    fn to_config(&self) -> BanditConfig {
        BanditConfig {
            alpha: self.alpha,
            epsilon0: self.epsilon0,
            tolerance_ratio: self.tolerance_ratio,
            tolerance_seconds: self.tolerance_seconds,
            ridge_lambda: self.ridge_lambda,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    table: TableArgs,
    /// Hardware description CSV (columns id, cpus, memory_gb, optional
    /// cost_weight). Every hardware id in the dataset must appear here.
    #[arg(long)]
    hardware: PathBuf,
    /// Selection rounds per simulation.
    #[arg(long, default_value_t = 50)]
    rounds: usize,
    /// Independent simulations to aggregate.
    #[arg(long, default_value_t = 100)]
    sims: usize,
    /// Experiment seed; simulation i runs on a seed mixed from this and i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    bandit: BanditFlags,
    /// Relative slack when judging a recommendation correct.
    #[arg(long, default_value_t = 0.0)]
    eval_tolerance_ratio: f64,
    /// Absolute slack in seconds when judging a recommendation correct.
    #[arg(long, default_value_t = 0.0)]
    eval_tolerance_seconds: f64,
    /// Replay only the first N dataset rows.
    #[arg(long)]
    subsample: Option<usize>,
    /// Keep instances that lack runtimes on some hardware. They still count
    /// for prediction error, but never get replayed or scored for accuracy.
    #[arg(long)]
    keep_incomplete: bool,
    /// Record every selection into the report.
    #[arg(long)]
    log_decisions: bool,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the metric curves as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Save the first simulation's trained model here.
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// With --save-model, omit per-arm observation histories. A stripped
    /// model can recommend but cannot absorb further updates.
    #[arg(long, requires = "save_model")]
    strip_history: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scenario TOML; omit to use the bundled four-machine scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Task instances to draw.
    #[arg(long, default_value_t = 80)]
    instances: usize,
    /// Multiplier on every arm's noise level (0 disables noise).
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the scenario's hardware table here.
    #[arg(long)]
    hardware_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchMatmulArgs {
    /// Matrix sizes to benchmark.
    #[arg(long, value_delimiter = ',', required_unless_present = "filter_input")]
    sizes: Vec<usize>,
    /// Fractions of entries forced to zero.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0])]
    sparsities: Vec<f64>,
    /// Smallest entry values; paired positionally with --max-values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0i64])]
    min_values: Vec<i64>,
    /// Largest entry values; paired positionally with --min-values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [100i64])]
    max_values: Vec<i64>,
    /// Worker thread counts to compare.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    workers: Vec<usize>,
    /// Repetitions per matrix configuration.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Rows per work unit handed to a worker.
    #[arg(long, default_value_t = 64)]
    tile_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write one hardware row per worker count here.
    #[arg(long)]
    hardware_out: Option<PathBuf>,
    /// Filter an existing benchmark CSV instead of running: keep only rows
    /// with at least --min-size.
    #[arg(long)]
    filter_input: Option<PathBuf>,
    /// Smallest matrix size kept by --filter-input.
    #[arg(long, requires = "filter_input")]
    min_size: Option<usize>,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[command(flatten)]
    table: TableArgs,
    /// Training rows drawn (without replacement) for each model.
    #[arg(long, default_value_t = 25)]
    samples: usize,
    /// Number of models to fit.
    #[arg(long, default_value_t = 100)]
    models: usize,
    #[arg(long, default_value_t = 1e-8)]
    ridge_lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the statistics JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    /// Saved model JSON (from simulate --save-model).
    #[arg(long)]
    model: PathBuf,
    /// Feature values as name=value pairs, comma separated.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    /// Also print every arm's runtime estimate to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Experiment report JSON produced by simulate.
    #[arg(long, value_name = "PATH")]
    r#in: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which metric curves to include.
    #[arg(long, value_enum, default_value_t = MetricChoice::All)]
    metric: MetricChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricChoice {
    Rmse,
    Accuracy,
    All,
}

/// Parses `argv` and runs the chosen subcommand, returning the process exit
/// code instead of exiting, so tests can drive the full CLI in-process.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    let threads = match resolve_threads(cli.threads) {
        Ok(threads) => threads,
        Err(err) => {
            eprintln!("error: {err}");
            return err.exit_code();
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args, threads),
        Command::Synth(args) => cmd_synth(args),
        Command::BenchMatmul(args) => cmd_bench_matmul(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Recommend(args) => cmd_recommend(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<usize, CliError> {
    let threads = match flag {
        Some(threads) => threads,
        None => match std::env::var(THREADS_ENV) {
            Ok(raw) => raw.trim().parse::<usize>().map_err(|_| {
                CliError::Usage(format!(
                    "{THREADS_ENV} must be a positive integer, got '{raw}'"
                ))
            })?,
            Err(_) => 1,
        },
    };
    if threads == 0 {
        return Err(CliError::Usage(
            "thread count must be at least 1".to_string(),
        ));
    }
    Ok(threads)
}

fn read_header(path: &Path) -> Result<Vec<String>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("failed to read {}: {e}", path.display())))?;
    Ok(reader
        .headers()
        .map_err(|e| CliError::Data(format!("failed to read {}: {e}", path.display())))?
        .iter()
        .map(|h| h.to_string())
        .collect())
}

/// Loads a runtime table, defaulting the feature and instance columns from
/// the header when they were not spelled out.
fn load_table(args: &TableArgs) -> Result<Dataset, CliError> {
    let header = read_header(&args.data)?;
    let instance_column = match &args.instance_column {
        Some(column) => Some(column.clone()),
        None => header.iter().find(|h| *h == "instance").cloned(),
    };
    let features = match &args.features {
        Some(features) => features.clone(),
        None => header
            .iter()
            .filter(|h| {
                **h != args.hardware_column
                    && **h != args.runtime_column
                    && Some(*h) != instance_column.as_ref()
            })
            .cloned()
            .collect(),
    };
    if features.is_empty() {
        return Err(CliError::Usage(format!(
            "no feature columns remain in {}; pass --features explicitly",
            args.data.display()
        )));
    }
    Ok(load_csv(
        &args.data,
        &features,
        &args.hardware_column,
        &args.runtime_column,
        instance_column.as_deref(),
    )?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Data(format!("failed to write {}: {e}", path.display())))
}

fn emit_json(out: &Option<PathBuf>, mut text: String) -> Result<(), CliError> {
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_simulate(args: SimulateArgs, threads: usize) -> Result<(), CliError> {
    let mut dataset = load_table(&args.table)?;
    if let Some(n) = args.subsample {
        dataset = dataset.subsample(n)?;
    }
    let hardware = load_hardware_csv(&args.hardware)?;
    for (i, hw) in hardware.iter().enumerate() {
        if hardware[..i].iter().any(|other| other.id == hw.id) {
            return Err(CliError::Data(format!(
                "hardware file lists '{}' twice",
                hw.id
            )));
        }
    }
    let missing: Vec<&String> = dataset
        .hardware_ids
        .iter()
        .filter(|id| hardware.iter().all(|hw| hw.id != **id))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "hardware file {} lacks ids present in the dataset: {}",
            args.hardware.display(),
            missing
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }

    let env = ReplayEnvironment::from_dataset(&dataset, !args.keep_incomplete)?;
    if env.dropped_incomplete > 0 {
        eprintln!(
            "dropped {} instance(s) without runtimes on every hardware",
            env.dropped_incomplete
        );
    }
    let config = ExperimentConfig {
        n_rounds: args.rounds,
        n_sims: args.sims,
        seed: args.seed,
        bandit: args.bandit.to_config(),
        eval_tolerance_ratio: args.eval_tolerance_ratio,
        eval_tolerance_seconds: args.eval_tolerance_seconds,
        log_decisions: args.log_decisions,
    };
    let (report, sims) = run_repeated(&env, &hardware, &config, threads)?;

    if let Some(path) = &args.save_model {
        let model_json = sims[0].final_state.to_json(!args.strip_history);
        write_text(path, &model_json)?;
    }
    if let Some(path) = &args.csv {
        let file = std::fs::File::create(path)
            .map_err(|e| CliError::Data(format!("failed to write {}: {e}", path.display())))?;
        write_report_csv(&report, MetricChoice::All, file)?;
    }

    let last_rmse = report.rmse.last().expect("at least one round");
    let last_acc = report.accuracy.last().expect("at least one round");
    eprintln!(
        "{} sims x {} rounds on {} instances: rmse {:.4} (all-data fit {:.4}), \
         accuracy {:.4} (all-data fit {:.4})",
        config.n_sims,
        config.n_rounds,
        report.n_instances,
        last_rmse.mean,
        report.full_fit.rmse,
        last_acc.mean,
        report.full_fit.accuracy
    );

    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(format!("report serialization failed: {e}")))?;
    emit_json(&args.out, text)
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let scenario = match &args.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("failed to read {}: {e}", path.display())))?;
            Scenario::from_toml(&text)?
        }
        None => default_scenario(),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let dataset = generate_dataset(&scenario, args.instances, args.noise, &mut rng)
        .map_err(|err| match err {
            // Bad instance counts and noise scales are flag mistakes, not
            // broken input files.
            SynthError::InvalidScenario(msg)
                if msg.contains("instance") || msg.contains("noise") =>
            {
                CliError::Usage(msg)
            }
            other => other.into(),
        })?;
    write_csv(&dataset, &args.out)?;
    if let Some(path) = &args.hardware_out {
        write_hardware_csv(&scenario.hardware(), path)?;
    }
    eprintln!(
        "wrote {} runs ({} instances x {} arms) to {}",
        dataset.len(),
        args.instances,
        scenario.arms.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_bench_matmul(args: BenchMatmulArgs) -> Result<(), CliError> {
    if let Some(input) = &args.filter_input {
        let min_size = args.min_size.ok_or_else(|| {
            CliError::Usage("--filter-input requires --min-size".to_string())
        })?;
        return filter_benchmark_csv(input, min_size, &args.out);
    }

    if args.min_values.len() != args.max_values.len() {
        return Err(CliError::Usage(format!(
            "--min-values and --max-values must pair up ({} vs {} entries)",
            args.min_values.len(),
            args.max_values.len()
        )));
    }
    let grid = MatmulGrid {
        sizes: args.sizes.clone(),
        sparsities: args.sparsities.clone(),
        value_ranges: args
            .min_values
            .iter()
            .copied()
            .zip(args.max_values.iter().copied())
            .collect(),
        workers: args.workers.clone(),
        repetitions: args.reps,
        tile_size: args.tile_size,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let (dataset, hardware) = bench_matmul(&grid, &mut rng, |line| eprintln!("{line}"))?;
    write_csv(&dataset, &args.out)?;
    if let Some(path) = &args.hardware_out {
        write_hardware_csv(&hardware, path)?;
    }
    eprintln!(
        "wrote {} timed runs to {}",
        dataset.len(),
        args.out.display()
    );
    Ok(())
}

fn filter_benchmark_csv(input: &Path, min_size: usize, out: &Path) -> Result<(), CliError> {
    let features: Vec<String> = MATMUL_FEATURES.iter().map(|s| s.to_string()).collect();
    let dataset = load_csv(
        input,
        &features,
        "hardware",
        "runtime_seconds",
        Some("instance"),
    )?;
    let records: Vec<_> = dataset
        .records
        .iter()
        .filter(|r| r.features[0] >= min_size as f64)
        .cloned()
        .collect();
    let kept = records.len();
    if kept == 0 {
        return Err(CliError::Data(format!(
            "no rows in {} have size >= {min_size}",
            input.display()
        )));
    }
    let filtered = Dataset::new(records, dataset.feature_names.clone())?;
    write_csv(&filtered, out)?;
    eprintln!(
        "kept {kept} of {} rows (size >= {min_size})",
        dataset.len()
    );
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<(), CliError> {
    let dataset = load_table(&args.table)?;
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let stats = linear_regression_baseline(
        &dataset,
        args.samples,
        args.models,
        args.ridge_lambda,
        &mut rng,
    )?;
    eprintln!(
        "{} models on {} samples each: rmse {:.4} to {:.4} (mean {:.4}, range {:.4})",
        stats.n_models,
        stats.samples_per_model,
        stats.rmse.min,
        stats.rmse.max,
        stats.rmse.mean,
        stats.rmse.range
    );
    let text = serde_json::to_string_pretty(&stats)
        .map_err(|e| CliError::Runtime(format!("stats serialization failed: {e}")))?;
    emit_json(&args.out, text)
}

fn cmd_recommend(args: RecommendArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| CliError::Data(format!("failed to read {}: {e}", args.model.display())))?;
    let model = BanditState::from_json(&text)?;
    let assignments = parse_feature_assignments(&args.features)?;

    let names = model.feature_names().clone();
    let mut values = Vec::with_capacity(names.len());
    for name in names.iter() {
        let matched: Vec<f64> = assignments
            .iter()
            .filter(|(k, _)| k == name)
            .map(|&(_, v)| v)
            .collect();
        match matched.as_slice() {
            [value] => values.push(*value),
            [] => {
                return Err(CliError::Usage(format!(
                    "missing feature '{name}' (the model expects: {})",
                    names.join(", ")
                )))
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "feature '{name}' was given more than once"
                )))
            }
        }
    }
    for (key, _) in &assignments {
        if !names.iter().any(|n| n == key) {
            return Err(CliError::Usage(format!(
                "unknown feature '{key}' (the model expects: {})",
                names.join(", ")
            )));
        }
    }

    let x = FeatureVector::new(names, values).map_err(|e| CliError::Usage(e.to_string()))?;
    if args.verbose {
        for estimate in model.estimate_all(&x)? {
            eprintln!(
                "{}\t{:.6}",
                estimate.hardware_id, estimate.estimate_seconds
            );
        }
    }
    println!("{}", model.recommend(&x)?);
    Ok(())
}

fn parse_feature_assignments(items: &[String]) -> Result<Vec<(String, f64)>, CliError> {
    if items.is_empty() {
        return Err(CliError::Usage(
            "pass --features name=value[,name=value...]".to_string(),
        ));
    }
    items
        .iter()
        .map(|item| {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("feature '{item}' is not in name=value form"))
            })?;
            let parsed: f64 = value.trim().parse().map_err(|_| {
                CliError::Usage(format!("feature '{key}' has non-numeric value '{value}'"))
            })?;
            Ok((key.trim().to_string(), parsed))
        })
        .collect()
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.r#in)
        .map_err(|e| CliError::Data(format!("failed to read {}: {e}", args.r#in.display())))?;
    let report: ExperimentReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("malformed report {}: {e}", args.r#in.display())))?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::Data(format!("failed to write {}: {e}", path.display())))?;
            write_report_csv(&report, args.metric, file)
        }
        None => {
            let stdout = std::io::stdout();
            write_report_csv(&report, args.metric, stdout.lock())
        }
    }
}

/// Writes metric curves as CSV rows, one per (metric, round), with the
/// all-data baseline appended as reference rows carrying no round number.
fn write_report_csv<W: std::io::Write>(
    report: &ExperimentReport,
    metric: MetricChoice,
    writer: W,
) -> Result<(), CliError> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record(["metric", "round", "mean", "sd", "n"])?;
    let mut write_curve = |name: &str, points: &[crate::experiment::CurvePoint]| {
        for point in points {
            let record = [
                name.to_string(),
                point.round.to_string(),
                point.mean.to_string(),
                point.sd.to_string(),
                point.n.to_string(),
            ];
            if let Err(err) = csv_writer.write_record(&record) {
                return Err(CliError::from(err));
            }
        }
        Ok(())
    };
    if metric != MetricChoice::Accuracy {
        write_curve("rmse", &report.rmse)?;
    }
    if metric != MetricChoice::Rmse {
        write_curve("accuracy", &report.accuracy)?;
    }
    if metric != MetricChoice::Accuracy {
        csv_writer.write_record([
            "full_fit_rmse",
            "",
            &report.full_fit.rmse.to_string(),
            "",
            "",
        ])?;
    }
    if metric != MetricChoice::Rmse {
        csv_writer.write_record([
            "full_fit_accuracy",
            "",
            &report.full_fit.accuracy.to_string(),
            "",
            "",
        ])?;
    }
    csv_writer
        .flush()
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_resolution_prefers_the_flag() {
        assert_eq!(resolve_threads(Some(7)).unwrap(), 7);
        assert!(matches!(
            resolve_threads(Some(0)).unwrap_err(),
            CliError::Usage(_)
        ));
    }

    #[test]
    fn feature_assignments_parse_and_reject() {
        let parsed =
            parse_feature_assignments(&["a=1.5".to_string(), "b=2".to_string()]).unwrap();
        assert_eq!(parsed, vec![("a".to_string(), 1.5), ("b".to_string(), 2.0)]);
        assert!(parse_feature_assignments(&["broken".to_string()]).is_err());
        assert!(parse_feature_assignments(&["a=x".to_string()]).is_err());
        assert!(parse_feature_assignments(&[]).is_err());
    }

    #[test]
    fn exit_codes_map_by_error_class() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Data(String::new()).exit_code(), 2);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 3);
        let checksum: CliError = SynthError::ChecksumMismatch {
            size: 4,
            workers: 2,
            expected: 1,
            actual: 2,
        }
        .into();
        assert_eq!(checksum.exit_code(), 3);
    }

    #[test]
    fn cli_structure_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
