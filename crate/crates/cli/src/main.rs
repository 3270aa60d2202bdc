mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] idan_core::Error),
}

impl CliError {
    /// 2 for arguments and config, 3 for data, 4 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        use idan_core::Error as E;
        fn core(e: &E) -> u8 {
            match e {
                E::InvalidArgument(_) => 2,
                E::Shape { .. } | E::Parse { .. } | E::Io { .. } | E::Image { .. } | E::Data(_) => 3,
                E::NonFinite(_) => 4,
                E::BackwardTwice | E::NonScalarLoss(_) => 1,
                E::Stage { source, .. } => core(source),
            }
        }
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(e) => core(e),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "idan", version, about = "Bi-temporal change detection with difference-map priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cut co-registered scenes into windows and write a split dataset.
    Tile(TileArgs),
    /// Build the FD-map and ED-map of one image pair.
    Diffmap(DiffmapArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Score a checkpoint on the test split of a dataset.
    Eval(EvalArgs),
    /// Predict the change mask of one pair.
    Infer(InferArgs),
    /// Per-layer FLOP table of the configured model.
    Flops(FlopsArgs),
    /// Write a synthetic change-detection dataset.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct TileArgs {
    #[arg(long, required_unless_present = "dry_run")]
    pub a: Option<PathBuf>,
    #[arg(long, required_unless_present = "dry_run")]
    pub b: Option<PathBuf>,
    #[arg(long, required_unless_present = "dry_run")]
    pub label: Option<PathBuf>,
    #[arg(long, required_unless_present = "dry_run")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Window side in pixels [default: 512].
    #[arg(long)]
    pub window: Option<usize>,
    /// Step between windows [default: 512].
    #[arg(long)]
    pub stride: Option<usize>,
    /// Every k-th tile goes to the test split [default: 5].
    #[arg(long)]
    pub test_every: Option<usize>,
    /// Count tiles from `--width`/`--height` without reading pixels.
    #[arg(long, requires_all = ["width", "height"])]
    pub dry_run: bool,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DiffmapArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub edge: Option<config::EdgeKind>,
    /// `random:<seed>:<c_p>` or `file:<path>[,<path>]`.
    #[arg(long)]
    pub extractor: Option<String>,
    #[arg(long)]
    pub kernel: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path; the run config is written next to it as `<out>.cfg`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub threshold: Option<f32>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Binary mask PNG; the overlay goes to `<stem>_overlay.png` beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f32>,
}

#[derive(Args, Debug)]
pub struct FlopsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the 64-channel, depth-4 backbone instead of the configured one.
    #[arg(long)]
    pub full_scale: bool,
    /// Drop the FDA and EC blocks.
    #[arg(long)]
    pub no_modules: bool,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 250]
    #[arg(long)]
    pub count: Option<usize>,
    /// Image side in pixels [default: 64].
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// [default: 5]
    #[arg(long)]
    pub test_every: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tile(a) => commands::tile(a),
        Command::Diffmap(a) => commands::diffmap(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Infer(a) => commands::infer(a),
        Command::Flops(a) => commands::flops(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
