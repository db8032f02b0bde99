//! `hawkes-watch`: simulate event streams, run the change-point detector,
//! fit influence matrices, compute thresholds and run the benchmarks.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (bad input files,
//! configs or parameters), 3 numerical failure.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod config;

use config::{MethodName, ThresholdSource};

/// Bad input data or configuration (exit code 2).
#[derive(Debug)]
pub struct DataError(pub String);

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

/// Invalid command-line usage detected after parsing (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "hawkes-watch",
    version,
    about = "Change-point detection for networked event streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a change scenario and write the events.
    Simulate(SimulateArgs),
    /// Run the online detector over an event file and write its trace.
    Detect(DetectArgs),
    /// Fit the influence matrix on one window of an event file.
    Estimate(EstimateArgs),
    /// Threshold for a target ARL from the analytic approximation.
    Threshold(ThresholdArgs),
    /// Threshold for a target ARL by Monte Carlo on null streams.
    Calibrate(CalibrateArgs),
    /// Monte Carlo benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Check model parameters in a config file.
    Validate(ValidateArgs),
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Detection delay of one synthetic case preset.
    Edd(EddArgs),
    /// Average run length at a fixed threshold.
    Arl(ArlArgs),
    /// ROC AUC of sequence classification presets.
    Auc(AucArgs),
    /// Analytic thresholds against Monte Carlo ARL.
    ThresholdAccuracy(AccuracyArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Synthetic case preset (1 to 7).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub case: Option<u8>,
    /// Config with [model], [post] and [scenario] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Output path, `-` for standard output.
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
    /// Output format; inferred from the output extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug, Serialize)]
pub struct DetectArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Event file, `-` for standard input.
    #[arg(long, short, default_value = "-")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Trace output path, `-` for standard output.
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
    /// Threshold overriding the config.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Seed for Monte Carlo thresholds; overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON-lines file receiving the fitted matrix at every refresh.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// Sort unsorted input instead of rejecting it.
    #[arg(long)]
    pub allow_unsorted: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, short, default_value = "-")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Window start; defaults to the end minus the configured window length.
    #[arg(long)]
    pub from: Option<f64>,
    /// Window end; defaults to the stream horizon.
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub allow_unsorted: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SettingArg {
    /// One-dimensional Poisson null, Hawkes alternative.
    #[value(name = "poi2haw1d")]
    Poi2Haw1d,
    /// One-dimensional Hawkes null with known alpha.
    #[value(name = "haw2haw1d")]
    Haw2Haw1d,
    /// Multivariate Poisson null from --config.
    #[value(name = "poi2haw")]
    Poi2Haw,
    /// Multivariate Hawkes null from --config.
    #[value(name = "haw2haw")]
    Haw2Haw,
}

#[derive(Args, Debug, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub setting: Option<SettingArg>,
    /// Base rate of a one-dimensional setting.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Null self-excitation of `haw2haw1d`.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Config whose [model] gives the null (multivariate settings).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Window length; defaults to the config's, else 10.
    #[arg(short = 'L', long = "window")]
    pub window: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Target average run length.
    #[arg(long)]
    pub arl: f64,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 401)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 10_000)]
    pub mc_samples: usize,
    /// Seed of the Monte Carlo integration (multivariate settings).
    #[arg(long, default_value_t = 0x5eed)]
    pub integration_seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub arl: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "glr")]
    pub method: MethodName,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    /// Length of every null stream.
    #[arg(long, default_value_t = 2000.0)]
    pub horizon: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    All,
    Glr,
    Baseline1,
    Baseline2,
}

#[derive(Args, Debug, Serialize)]
pub struct EddArgs {
    #[arg(long)]
    pub case: u8,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodChoice,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1e4)]
    pub arl: f64,
    /// Threshold source of the network GLR; baselines always use Monte Carlo.
    #[arg(long, value_enum, default_value = "theory")]
    pub primary_threshold: ThresholdSource,
    #[arg(long, default_value_t = 200)]
    pub calibration_replicates: usize,
    #[arg(long, default_value_t = 2000.0)]
    pub calibration_horizon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ArlArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Threshold overriding the config.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    /// Runs without an alarm stop here and count as censored.
    #[arg(long, default_value_t = 10_000.0)]
    pub horizon: f64,
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AucArgs {
    /// Presets A.1 to D.3; repeat for several.
    #[arg(long = "preset", required = true)]
    pub presets: Vec<String>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_values = ["glr", "baseline1"])]
    pub methods: Vec<MethodName>,
    #[arg(long, default_value_t = 500)]
    pub sequences: usize,
    #[arg(long, default_value_t = hawkes_watch::bench::AUC_WINDOW)]
    pub window: f64,
    #[arg(long, default_value_t = hawkes_watch::bench::AUC_HORIZON)]
    pub horizon: f64,
    #[arg(long, default_value_t = hawkes_watch::bench::AUC_KAPPA)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    /// Also score the no-change control of every preset.
    #[arg(long)]
    pub control: bool,
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AccuracyArgs {
    /// Panels a to h; repeat for several.
    #[arg(long = "panel", required = true)]
    pub panels: Vec<char>,
    /// Target ARLs; repeat for several.
    #[arg(long = "arl", required = true)]
    pub arls: Vec<f64>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    #[arg(long, default_value_t = 10_000.0)]
    pub horizon: f64,
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ValidateArgs {
    /// Config with a [model] table and optionally [post].
    #[arg(long)]
    pub params: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<hawkes_watch::Error>() {
            return match e {
                hawkes_watch::Error::Numeric(_) | hawkes_watch::Error::Degenerate { .. } => 3,
                _ => 2,
            };
        }
        if cause.is::<UsageError>() {
            return 1;
        }
        if cause.is::<DataError>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    2
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("HAWKES_WATCH_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| UsageError(format!("HAWKES_WATCH_THREADS={v:?} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = init_threads().and_then(|_| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
