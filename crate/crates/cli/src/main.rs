//! `homn`: prepare datasets, train and evaluate the interferometric neuron and
//! its classical baselines, simulate shot-noise inference and tabulate photon
//! budgets.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use homn_core::artifact::ModelKind;
use homn_core::trainer::{GradientMode, Init};
use homn_core::Domain;

#[derive(Debug, Parser)]
#[command(name = "homn", version, about = "Hong-Ou-Mandel optical neuron simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert MNIST, CIFAR-10 or synthetic bars into a binary dataset artifact.
    Prepare(PrepareArgs),
    /// Train a model on a prepared dataset.
    Train(TrainArgs),
    /// Classify one item, exactly or from simulated photon counts.
    Infer(InferArgs),
    /// Accuracy and loss of a model on a dataset split.
    Eval(EvalArgs),
    /// Photon budgets across resolutions as CSV.
    Budget(BudgetArgs),
    /// Run the numerical invariant suite.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    Mnist,
    Cifar10,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DomainArg {
    Spatial,
    Fourier,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Spatial => Domain::Spatial,
            DomainArg::Fourier => Domain::Fourier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Qon,
    Classical,
    Analog,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Qon => ModelKind::Qon,
            ModelArg::Classical => ModelKind::Classical,
            ModelArg::Analog => ModelKind::Analog,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Scaled,
    Uniform01,
    Constant,
}

impl From<InitArg> for Init {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Scaled => Init::Scaled,
            InitArg::Uniform01 => Init::Uniform01,
            InitArg::Constant => Init::Constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GradientArg {
    Exact,
    Approx,
}

impl From<GradientArg> for GradientMode {
    fn from(g: GradientArg) -> Self {
        match g {
            GradientArg::Exact => GradientMode::Exact,
            GradientArg::Approx => GradientMode::Approx,
        }
    }
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long, value_enum)]
    source: SourceArg,
    /// Original labels mapped to targets 0 and 1, e.g. `3,5`.
    /// Defaults: MNIST 0,1; CIFAR-10 3,5 (cat, dog).
    #[arg(long, value_parser = parse_classes)]
    classes: Option<(u8, u8)>,
    /// Root holding `mnist/` and `cifar-10-batches-bin/`.
    #[arg(long, env = "HOMN_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Output directory for `manifest.json` and the `.homd` splits.
    #[arg(long)]
    out: PathBuf,
    /// Default encoding recorded in the manifest.
    #[arg(long, value_enum, default_value = "spatial")]
    domain: DomainArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthetic training items.
    #[arg(long, default_value_t = 400)]
    count: usize,
    /// Synthetic test items.
    #[arg(long, default_value_t = 200)]
    test_count: usize,
    /// Synthetic image side.
    #[arg(long, default_value_t = 8)]
    side: usize,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct TrainArgs {
    /// Dataset manifest written by `prepare`.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for `model.json` and `history.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "qon")]
    model: ModelArg,
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input encoding (default: the manifest's).
    #[arg(long, value_enum)]
    domain: Option<DomainArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    eta_lambda: Option<f64>,
    #[arg(long)]
    eta_b: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long, value_enum)]
    gradient: Option<GradientArg>,
}

#[derive(Debug, Args)]
struct ItemArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset manifest written by `prepare`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[command(flatten)]
    item: ItemArgs,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Photon pairs to simulate; accepts `1e6`. Omit for the exact output.
    #[arg(long, value_parser = parse_count)]
    shots: Option<u64>,
    /// Seed of the photon-count simulation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    item: ItemArgs,
    /// Include every item's prediction in the output.
    #[arg(long)]
    per_item: bool,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct BudgetArgs {
    /// Pixel counts N, each a perfect square.
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
    /// Target half-width of the classification estimate.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Target per-pixel standard deviation of classical imaging.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Mean grey level of the synthetic base image.
    #[arg(long, default_value_t = 1.0)]
    mean_brightness: f64,
    #[arg(long, default_value_t = 256)]
    depth: u32,
    /// Sigmoid steepness for the classification cost (default: the model's,
    /// else 1).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Trained classical model to cost instead of the synthetic one.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    /// Dataset providing the base image for `--model`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per gradient check.
    #[arg(long, default_value_t = 100)]
    instances: usize,
}

fn parse_classes(s: &str) -> Result<(u8, u8), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two labels like 3,5, got {s:?}"))?;
    let label = |t: &str| {
        t.trim()
            .parse::<u8>()
            .map_err(|e| format!("bad label {t:?}: {e}"))
    };
    Ok((label(a)?, label(b)?))
}

fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("not a count: {s:?}"))?;
    if x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= 9.007_199_254_740_992e15 {
        Ok(x as u64)
    } else {
        Err(format!("not a whole number of shots: {s:?}"))
    }
}

/// A failed command, classified by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<homn_core::Error> for Failure {
    fn from(e: homn_core::Error) -> Self {
        use homn_core::Error as E;
        let msg = e.to_string();
        if e.is_numeric() {
            Failure::Numeric(msg)
        } else if matches!(e, E::Config(_) | E::Domain(_)) {
            Failure::Usage(msg)
        } else {
            Failure::Data(msg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Train(a) => commands::train(a),
        Command::Infer(a) => commands::infer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Budget(a) => commands::budget(a),
        Command::Selfcheck(a) => commands::selfcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("homn: {f}");
            ExitCode::from(f.code())
        }
    }
}
