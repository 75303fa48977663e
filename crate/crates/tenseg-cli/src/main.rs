//! `tenseg`: tensor time-series change-point detection from the command line.
//!
//! Subcommands cover the full pipeline — scenario simulation, CP/HOSVD
//! decomposition, NORMO rank selection, detection, Monte Carlo benchmarks,
//! and evaluation. Flags can be preloaded from a flat key=value config file
//! (`--config`); explicit flags win. stdout carries data only; diagnostics
//! go to stderr. Exit codes: 0 success, 2 configuration error, 3 I/O error,
//! 4 numeric failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use tenseg_core::error::TensegError;

/// Errors surfaced to the user, partitioned by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Inconsistent or missing configuration (exit 2).
    Config(String),
    /// Filesystem trouble outside the core library (exit 3).
    Io(String),
    /// Anything the core library reports (exit 2, 3, or 4 by kind).
    Core(TensegError),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<TensegError> for CliError {
    fn from(e: TensegError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                TensegError::InvalidArgument(_) | TensegError::DimensionMismatch(_) => 2,
                TensegError::Io(_) | TensegError::Parse(_) => 3,
                TensegError::Numeric(_) => 4,
            },
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tenseg",
    version,
    about = "Tensor time-series change-point detection",
    propagate_version = true
)]
struct Cli {
    /// Flat key=value defaults file; explicit flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// More stderr detail (-v progress, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a benchmark scenario tensor (TSR1) and its truth CSV.
    Simulate(SimulateArgs),
    /// Fit a CP or HOSVD model and export the factor time series.
    Decompose(DecomposeArgs),
    /// Sweep CP ranks and report the NORMO redundancy selection.
    Normo(NormoArgs),
    /// Detect change-points in a tensor (TSR1) or a p x T series (CSV).
    Detect(DetectCmdArgs),
    /// Monte Carlo benchmark: simulate, detect, tabulate N-hat minus N.
    Bench(BenchArgs),
    /// Score an estimate against a truth file, or tabulate bench records.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    /// T = 200, no change-points.
    Cp0,
    /// T = 200, one change-point at 100.
    Cp1,
    /// T = 300, change-points at 100, 150, 200, 250.
    Cp4,
    /// T = 660, change-points at 60, 120, ..., 600.
    Cp10,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StructureArg {
    /// Chain (AR(1)-style) precision within each spatial mode.
    Ar,
    /// Star-block precision.
    Sb,
    /// Erdos-Renyi random-graph precision.
    Er,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MagnitudeArg {
    Standard,
    /// Weaker between-segment contrast (AR structure only).
    Small,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum NoiseArg {
    Iid,
    /// Serially correlated noise, AR(1) with coefficient --alpha.
    Ar1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DecompArg {
    /// Canonical polyadic decomposition via alternating least squares.
    Cp,
    /// Higher-order SVD with a uniform clamped multilinear rank.
    Hosvd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum NormArg {
    /// Scaled Euclidean aggregation of the panel CUSUMs.
    L2,
    /// Max aggregation.
    Linf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StopArg {
    /// Keep everything above the threshold.
    Threshold,
    /// Overestimate, then minimize an information criterion.
    Ic,
}

// The config-file loader parses the same spellings clap accepts.
macro_rules! value_enum_from_str {
    ($($ty:ty),+ $(,)?) => {$(
        impl std::str::FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                <$ty as ValueEnum>::from_str(s, true)
            }
        }
    )+};
}
value_enum_from_str!(
    ScenarioArg,
    StructureArg,
    MagnitudeArg,
    NoiseArg,
    DecompArg,
    NormArg,
    StopArg,
);

/// Scenario-grid selectors shared by `simulate` and `bench`.
#[derive(Args, Default)]
struct ScenarioArgs {
    /// Scenario shape (cp0 | cp1 | cp4 | cp10).
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    /// Network family [default: ar].
    #[arg(long, value_enum)]
    structure: Option<StructureArg>,
    /// Change size profile [default: standard].
    #[arg(long, value_enum)]
    magnitude: Option<MagnitudeArg>,
    /// Serial noise structure [default: iid].
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
    /// AR(1) coefficient of the serial noise [default: 0.7].
    #[arg(long, value_name = "A")]
    alpha: Option<f64>,
}

/// Decomposition selectors shared by `decompose`, `detect`, and `bench`.
#[derive(Args, Default)]
struct DecompArgs {
    /// Decomposition backing the factor series [default: cp].
    #[arg(long, value_enum)]
    decomp: Option<DecompArg>,
    /// Fixed component count.
    #[arg(long, conflicts_with = "auto_rank")]
    rank: Option<usize>,
    /// Choose the rank by the NORMO sweep (requires --rmax).
    #[arg(long)]
    auto_rank: bool,
    /// Upper end of the NORMO rank sweep.
    #[arg(long)]
    rmax: Option<usize>,
    /// NORMO redundancy threshold [default: 0.7].
    #[arg(long)]
    delta: Option<f64>,
    /// ALS iteration cap [default: 25 in pipelines, 100 standalone].
    #[arg(long)]
    iters: Option<usize>,
    /// ALS relative-error tolerance [default: 1e-5 in pipelines, 1e-6 standalone].
    #[arg(long)]
    tol: Option<f64>,
    /// ALS restarts, best fit kept [default: 2 in pipelines, 1 standalone].
    #[arg(long)]
    restarts: Option<usize>,
}

/// Detector knobs shared by `detect` and `bench`.
#[derive(Args, Default)]
struct DetectArgs {
    /// CUSUM aggregation norm [default: l2].
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    /// Stopping rule [default: ic].
    #[arg(long, value_enum)]
    stop: Option<StopArg>,
    /// Threshold constant C [default: the calibrated per-norm constant].
    #[arg(long = "const", value_name = "C")]
    constant: Option<f64>,
    /// Interval expansion step [default: 3].
    #[arg(long, value_name = "L")]
    lambda_t: Option<usize>,
    /// Minimum admissible segment length [default: 10 on tensors, lambda-t on raw series].
    #[arg(long)]
    min_segment: Option<usize>,
    /// Information-criterion penalty scale [default: calibrated constant].
    #[arg(long)]
    penalty_alpha: Option<f64>,
    /// Detect on every s-th point with majority voting across offsets.
    #[arg(long, value_name = "S")]
    subsample: Option<usize>,
    /// Votes required to keep a subsampled cluster [default: majority].
    #[arg(long, value_name = "Q")]
    quorum: Option<usize>,
    /// Replace the series by non-overlapping window means of width W.
    #[arg(long, value_name = "W")]
    preaverage: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for tensor.tsr1 and truth.csv [default: .].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Input tensor (TSR1).
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    #[command(flatten)]
    decomp: DecompArgs,
    /// ALS / NORMO seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the model, series.csv, and normo.csv [default: .].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NormoArgs {
    /// Input tensor (TSR1).
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Upper end of the rank sweep.
    #[arg(long)]
    rmax: Option<usize>,
    /// Redundancy threshold [default: 0.7].
    #[arg(long)]
    delta: Option<f64>,
    /// ALS iteration cap [default: 100].
    #[arg(long)]
    iters: Option<usize>,
    /// ALS relative-error tolerance [default: 1e-6].
    #[arg(long)]
    tol: Option<f64>,
    /// ALS restarts per rank [default: 1].
    #[arg(long)]
    restarts: Option<usize>,
    /// Sweep seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DetectCmdArgs {
    /// Input: .tsr1 tensor (decomposed first) or .csv p x T series (fed
    /// straight to the detector).
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    #[command(flatten)]
    decomp: DecompArgs,
    #[command(flatten)]
    det: DetectArgs,
    /// Decomposition seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for change_points.csv and summary.json [default: .].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    decomp: DecompArgs,
    #[command(flatten)]
    det: DetectArgs,
    /// Monte Carlo replications [default: 100].
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed; each replication derives its own [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: the global thread pool].
    #[arg(long)]
    workers: Option<usize>,
    /// Also write the summary table to this CSV file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write one CSV row per replication to this file.
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// True change-points CSV (pair mode, with --est and --t-len).
    #[arg(long, value_name = "FILE", requires = "est", requires = "t_len")]
    truth: Option<PathBuf>,
    /// Estimated change-points CSV.
    #[arg(long, value_name = "FILE")]
    est: Option<PathBuf>,
    /// Series length the change-points refer to.
    #[arg(long)]
    t_len: Option<usize>,
    /// Bench per-replication records to tabulate (table mode).
    #[arg(long, value_name = "FILE", conflicts_with = "truth")]
    records: Option<PathBuf>,
    /// Method label for the table row [default: tenseg].
    #[arg(long)]
    method: Option<String>,
    /// Model label for the table row [default: -].
    #[arg(long)]
    model: Option<String>,
    /// Components label for the table row [default: -].
    #[arg(long)]
    components: Option<String>,
}

fn init_logger(verbosity: u8) {
    let level = match verbosity {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() {
    let cli = Cli::parse();
    init_logger(cli.verbose);
    if let Err(e) = commands::run(cli) {
        eprintln!("tenseg: {e}");
        std::process::exit(e.exit_code());
    }
}
