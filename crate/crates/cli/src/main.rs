//! `rdpscope`: file-based front end to the activity detection pipeline.

mod commands;
mod meta;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rdpscope_core::ensemble::TransportProfile;
use rdpscope_core::synthgen::SynthTransport;

/// Exit status 1: the request itself is wrong (flags, missing or malformed
/// inputs). Exit status 2: a module failed while processing valid inputs.
#[derive(Debug)]
pub enum CliError {
    Validation(anyhow::Error),
    Processing(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Processing(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser, Serialize)]
#[command(name = "rdpscope", version, about = "Activity detection and side-channel analysis for RDP captures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Capture plus labels (or a synthetic corpus directory) to a feature CSV.
    Extract(ExtractArgs),
    /// Feature CSV to an augmented CSV with dct_col, svd* and ica* columns.
    Transform(TransformArgs),
    /// Per-class Shapley attribution of a feature CSV.
    Rank(RankArgs),
    /// Fits the per-class committees on a base feature CSV.
    Train(TrainArgs),
    /// Nested cross-validation, or scoring of a saved model.
    Evaluate(EvaluateArgs),
    /// Keystroke and mouse side-channel report for a capture.
    Detect(DetectArgs),
    /// Writes a labelled synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Transport {
    Tcp,
    Udp,
}

impl Transport {
    fn profile(self) -> TransportProfile {
        match self {
            Transport::Tcp => TransportProfile::Tcp,
            Transport::Udp => TransportProfile::Udp,
        }
    }

    fn synth(self) -> SynthTransport {
        match self {
            Transport::Tcp => SynthTransport::Tcp,
            Transport::Udp => SynthTransport::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RankerKind {
    Rf,
    Tree,
    Knn,
    Ada,
}

#[derive(Debug, Args, Serialize)]
struct ExtractArgs {
    /// A pcap file, or a directory written by `synth`.
    #[arg(long)]
    input: PathBuf,
    /// Per-window label CSV; required for a single capture.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Client address, `a.b.c.d` or `a.b.c.d:port`. Defaults to the
    /// synthetic client for corpus directories.
    #[arg(long)]
    local_ip: Option<String>,
    #[arg(long, default_value_t = 30)]
    window_sec: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TransformArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    dct_index: usize,
    #[arg(long, default_value_t = 20)]
    components: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct RankArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output directory for `attribution_<class>.csv` and `selection.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = RankerKind::Rf)]
    model: RankerKind,
    /// Permutations sampled per target row.
    #[arg(long, default_value_t = 8)]
    samples: usize,
    /// Training rows attributed per class.
    #[arg(long, default_value_t = 100)]
    targets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.90)]
    select_mass: f64,
    #[arg(long, default_value_t = 20)]
    select_cap: usize,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Base feature CSV as written by `extract`.
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Transport::Tcp)]
    transport: Transport,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-validation folds used to rank the candidate models.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    dct_index: usize,
    #[arg(long, default_value_t = 20)]
    components: usize,
    #[arg(long, default_value_t = 0.90)]
    select_mass: f64,
    #[arg(long, default_value_t = 20)]
    select_cap: usize,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    /// Base feature CSV as written by `extract`.
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Score this saved model instead of cross-validating.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Transport::Tcp)]
    transport: Transport,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Outer cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Folds used inside each training split to rank candidate models.
    #[arg(long, default_value_t = 10)]
    inner_folds: usize,
    #[arg(long, default_value_t = 1)]
    dct_index: usize,
    #[arg(long, default_value_t = 20)]
    components: usize,
    #[arg(long, default_value_t = 0.90)]
    select_mass: f64,
    #[arg(long, default_value_t = 20)]
    select_cap: usize,
}

#[derive(Debug, Args, Serialize)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    local_ip: String,
    #[arg(long, default_value_t = 30)]
    window_sec: u64,
    /// Frame-size tolerance in bytes.
    #[arg(long, default_value_t = 0)]
    tolerance: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// JSON list of activity profiles. Without it, a corpus mirroring the
    /// label-combination table of `--transport` is generated.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Transport::Tcp)]
    transport: Transport,
    /// Total windows of the table-shaped corpus.
    #[arg(long, default_value_t = 600)]
    windows: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: &Cli) -> CliResult<()> {
    let hash = meta::config_hash(cli);
    match &cli.command {
        Command::Extract(a) => commands::extract(a, &hash),
        Command::Transform(a) => commands::transform(a, &hash),
        Command::Rank(a) => commands::rank(a, &hash),
        Command::Train(a) => commands::train(a, &hash),
        Command::Evaluate(a) => commands::evaluate(a, &hash),
        Command::Detect(a) => commands::detect(a, &hash),
        Command::Synth(a) => commands::synth(a, &hash),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let (CliError::Validation(err) | CliError::Processing(err)) = e;
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
