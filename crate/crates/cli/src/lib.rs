//! The `hstream` command line: synthetic data, pose decoding, featurization,
//! training, evaluation, PCKh scoring and gradient checks.
//!
//! Every run prints its resolved configuration and stores it as
//! `run_config.json` next to its outputs; `hstream rerun run_config.json`
//! repeats the run.

mod commands;
mod gradcheck;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hstream_core::dataset::Split;
use hstream_core::model::JointSource;
use serde::{Deserialize, Serialize};

pub use commands::{DecodedSequence, EvalReport, FeatureIndex, FeatureSplit, PosesFile, RunReport};
pub use gradcheck::{gradcheck_suite, reduced_model, CheckResult, GradcheckSummary, DENSE_TOLERANCE, HEAD_TOLERANCE};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] hstream_core::Error),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    /// 1 for usage errors, 2 for data and contract errors.
    pub fn exit_code(&self) -> i32 {
        use hstream_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::Argument(_) | E::Config(_)) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "hstream", version, about = "Two-stream hockey action recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate a synthetic dataset with planted poses and flows.
    Synth(SynthArgs),
    /// Decode one pose per frame from each sequence's part maps.
    Decode(DecodeArgs),
    /// Write latent feature matrices for every split.
    Featurize(FeaturizeArgs),
    /// Train a classifier and rank its epochs by validation accuracy.
    Train(TrainArgs),
    /// Score the top checkpoints of one or more training runs.
    Eval(EvalArgs),
    /// Score decoded poses against the annotations.
    Pckh(PckhArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Repeat a run from its run_config.json.
    #[serde(skip)]
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, env = "HSTREAM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Also render confidence maps and PAFs for every frame.
    #[arg(long)]
    pub with_maps: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DecodeArgs {
    /// Manifest file or the directory holding it.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Limb tree as `parent child` lines; defaults to the dataset's.
    #[arg(long)]
    pub limbs: Option<PathBuf>,
    /// Only decode this split.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// `gt` for annotations, `pred` to decode part maps first.
    #[arg(long, default_value = "gt")]
    pub joints: JointSource,
    #[arg(long)]
    pub no_stick: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub no_stick: bool,
    #[arg(long)]
    pub no_flow: bool,
    #[arg(long, env = "HSTREAM_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.3)]
    pub dropout: f32,
    /// Number of best epochs to keep in the ranking.
    #[arg(long, default_value_t = 3)]
    pub keep_top: usize,
    /// Side of the square flow input.
    #[arg(long, default_value_t = 56)]
    pub flow_size: usize,
    /// Joint source for validation inputs.
    #[arg(long, default_value = "gt")]
    pub val_joints: JointSource,
    /// Train on the raw sequences without flips, similarity transforms or jitter.
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoint directories written by `train`.
    #[arg(long, num_args = 1.., required = true)]
    pub ckpts: Vec<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub top: usize,
    /// JSON report; a text rendering is written next to it as `.txt`.
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
    #[arg(long, default_value = "gt")]
    pub joints: JointSource,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PckhArgs {
    /// Poses written by `decode`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "pckh.json")]
    pub report: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GradcheckArgs {
    #[arg(long, env = "HSTREAM_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Directory for gradcheck.json and run_config.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct RerunArgs {
    pub config: PathBuf,
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::ALL
        .into_iter()
        .find(|x| x.name() == s)
        .ok_or_else(|| format!("expected train, val or test, got {s:?}"))
}

/// Contents of `run_config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: String,
    pub invocation: Command,
    /// Every setting the run used, defaults included.
    pub resolved: serde_json::Value,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| hstream_core::Error::Dataset(format!("{}: {e}", path.display())).into())
    }
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(hstream_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> CliResult<()> {
    let command = match command {
        Command::Rerun(a) => RunConfig::load(&a.config)?.invocation,
        c => c,
    };
    let cwd = std::env::current_dir().map_err(|e| io_err(Path::new("."), e))?;
    let command = commands::absolutize(command, &cwd);
    match &command {
        Command::Synth(a) => commands::synth(a, &command),
        Command::Decode(a) => commands::decode(a, &command),
        Command::Featurize(a) => commands::featurize(a, &command),
        Command::Train(a) => commands::train(a, &command),
        Command::Eval(a) => commands::eval(a, &command),
        Command::Pckh(a) => commands::pckh(a, &command),
        Command::Gradcheck(a) => commands::gradcheck(a, &command),
        Command::Rerun(_) => Err(CliError::Usage("a run config cannot hold another rerun".into())),
    }
}
