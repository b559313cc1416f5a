//! `twseg` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use twseg::eval::{AggregateMode, F1Average};
use twseg::pipeline::{KPolicy, Method};

#[derive(Parser, Debug)]
#[command(name = "twseg", version, about = "Training-free temporal action segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment one feature file or every video of a manifest.
    Segment(SegmentArgs),
    /// Score predicted partitions against ground truth.
    Eval(EvalArgs),
    /// Time segmentation over increasing lengths and fit the scaling slope.
    Bench(BenchArgs),
    /// Draw ground truth and predictions as SVG color bars.
    Plot(PlotArgs),
    /// Write a synthetic dataset with a manifest.
    Synth(SynthArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum MethodArg {
    Twfinch,
    Finch,
    Kmeans,
    Equalsplit,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Twfinch => Method::Twfinch,
            MethodArg::Finch => Method::Finch,
            MethodArg::Kmeans => Method::Kmeans,
            MethodArg::Equalsplit => Method::Equalsplit,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum AggregateArg {
    Video,
    Frame,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum F1Arg {
    Micro,
    Macro,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct KArgs {
    /// Fixed number of segments for every video.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    /// Rounded mean number of ground-truth labels over each activity.
    #[arg(long)]
    k_activity_avg: bool,
    /// Number of ground-truth labels of each video.
    #[arg(long)]
    k_per_video_gt: bool,
}

impl KArgs {
    fn policy(&self) -> KPolicy {
        match self.k {
            Some(k) => KPolicy::Fixed(k as usize),
            None if self.k_activity_avg => KPolicy::ActivityAverage,
            None => KPolicy::PerVideoGt,
        }
    }
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct InputArgs {
    /// Single feature file (binary, or CSV by extension).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Dataset manifest (JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Label file for --features; needed by --k-per-video-gt and --tau.
    #[arg(long, requires = "features")]
    labels: Option<PathBuf>,
    #[command(flatten)]
    k: KArgs,
    #[arg(long, value_enum, default_value = "twfinch")]
    method: MethodArg,
    /// Fraction of background frames removed before segmenting.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Background label name used with --features.
    #[arg(long, default_value = "SIL")]
    background: String,
    #[arg(long, env = "TWSEG_WORKERS", default_value_t = default_workers())]
    workers: usize,
    /// Output directory for `<video_id>.txt` partitions and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding `<video_id>.txt` predicted partitions.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Match clusters to labels once per activity instead of per video.
    #[arg(long)]
    match_per_activity: bool,
    #[arg(long, value_enum, default_value = "video")]
    aggregate: AggregateArg,
    #[arg(long, value_enum, default_value = "micro")]
    f1: F1Arg,
    #[arg(long, env = "TWSEG_WORKERS", default_value_t = default_workers())]
    workers: usize,
    /// JSON report path; the text report always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = twseg::bench::DEFAULT_SIZES)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "TWSEG_WORKERS", default_value_t = default_workers())]
    workers: usize,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Ground-truth label file.
    #[arg(long)]
    gt: PathBuf,
    /// Predicted partition, as `NAME=PATH` or `PATH` (named after the file).
    #[arg(long = "pred", required = true)]
    preds: Vec<String>,
    #[arg(long, default_value = "SIL")]
    background: String,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    videos: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    d: usize,
    /// Class separation in units of the noise scale.
    #[arg(long, default_value_t = 8.0)]
    sep: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    background_frac: f64,
    /// Segment order such as "A B A"; sets k.
    #[arg(long, conflicts_with = "suite")]
    pattern: Option<String>,
    /// Draw each video from the mixed suite with repeated appearances.
    #[arg(long)]
    suite: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_OUTPUT: u8 = 3;
pub const EXIT_INVARIANT: u8 = 4;

impl From<twseg::Error> for Failure {
    fn from(e: twseg::Error) -> Self {
        let code = if e.is_input_error() {
            EXIT_INPUT
        } else {
            EXIT_INVARIANT
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn output(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_OUTPUT,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Segment(a) => commands::segment(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Plot(a) => commands::plot(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("twseg: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

impl From<AggregateArg> for AggregateMode {
    fn from(a: AggregateArg) -> Self {
        match a {
            AggregateArg::Video => AggregateMode::Video,
            AggregateArg::Frame => AggregateMode::Frame,
        }
    }
}

impl From<F1Arg> for F1Average {
    fn from(a: F1Arg) -> Self {
        match a {
            F1Arg::Micro => F1Average::Micro,
            F1Arg::Macro => F1Average::Macro,
        }
    }
}
