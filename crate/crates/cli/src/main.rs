//! `motenc`: synthesise motion, train temporal encoders, evaluate them.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 data or
//! parse error, 4 numeric failure during training.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use motenc::data::SynthAction;
use motenc::eval::Aggregation;
use motenc::model::{ArchKind, Tap};
use motenc::Error;

#[derive(Parser, Debug)]
#[command(
    name = "motenc",
    version,
    about = "Feedforward temporal encoders for skeletal motion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML run configuration; flags override its values
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: out]
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed recorded in every output [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic labelled recordings
    Synth(SynthArgs),
    /// Train a temporal encoder
    Train(TrainArgs),
    /// Prediction error at fixed horizons
    Eval(EvalArgs),
    /// Whole-sequence action classification from encoder features
    Classify(ClassifyArgs),
    /// Spike-triggered average poses of sigmoid units
    Sta(StaArgs),
    /// Predict the next window of a recording
    Predict(PredictArgs),
    /// Principal-component trajectory of tap features
    Latent(LatentArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Actions to generate (walk, wave, box, squat, turn; comma separated) or "all"
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_actions)]
    pub action: Vec<ActionSet>,
    /// Recordings per action
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Seconds per recording
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 30)]
    pub fps: u32,
    /// Write the binary format (.mrec) instead of text (.motion)
    #[arg(long)]
    pub binary: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone)]
pub struct ActionSet(pub Vec<SynthAction>);

fn parse_actions(s: &str) -> Result<ActionSet, String> {
    if s == "all" {
        return Ok(ActionSet(SynthAction::ALL.to_vec()));
    }
    s.parse::<SynthAction>()
        .map(|a| ActionSet(vec![a]))
        .map_err(|_| format!("unknown action {s:?}; expected walk, wave, box, squat, turn or all"))
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Architecture [default: hte]
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<ArchKind>,
    /// Motion files or directories
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Training epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate [default: 0.01]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Momentum [default: 0.9]
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Weight decay [default: 0.0005]
    #[arg(long)]
    pub decay: Option<f64>,
    /// Mini-batch size [default: 400; 300 to 500 recommended]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Use every n-th window pair [default: 1]
    #[arg(long)]
    pub stride: Option<usize>,
    /// Greedy layerwise pretraining before joint training
    #[arg(long)]
    pub pretrain: bool,
    /// Fine-tune this checkpoint instead of training from scratch
    #[arg(long, value_name = "FROM.ckpt")]
    pub finetune: Option<PathBuf>,
    /// Also append the epoch log to this file [default: OUT/train.log]
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

fn parse_arch(s: &str) -> Result<ArchKind, String> {
    match s {
        "ste" => Ok(ArchKind::Ste),
        "cte" => Ok(ArchKind::Cte),
        "hte" => Ok(ArchKind::Hte),
        _ => Err(format!("unknown architecture {s:?}; expected ste, cte or hte")),
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Horizons in ms [default: 80,160,320,560,1000,1600]
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<f64>>,
    /// Zero this limb in every input window
    #[arg(long)]
    pub mask_limb: Option<String>,
    /// Also report the persistence baseline
    #[arg(long)]
    pub baseline: bool,
    /// Evaluate every n-th window position [default: 1]
    #[arg(long)]
    pub stride: Option<usize>,
    /// Worker threads [default: 1]
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Trained temporal encoder
    #[arg(long)]
    pub te: PathBuf,
    /// Trained classifier; one is trained on --train when absent
    #[arg(long)]
    pub clf: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub train: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub test: Vec<PathBuf>,
    /// Feature tap [default: middle]
    #[arg(long)]
    pub tap: Option<Tap>,
    /// Seconds of each test sequence used [default: 8]
    #[arg(long)]
    pub window_seconds: Option<f64>,
    /// mean (softmax average) or vote [default: mean]
    #[arg(long)]
    pub aggregation: Option<Aggregation>,
    /// Classifier training epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Use every n-th training window as a sample [default: 1]
    #[arg(long)]
    pub feature_stride: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct StaArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Sigmoid layer name [default: lower]
    #[arg(long)]
    pub layer: Option<String>,
    /// Unit indices [default: 0]
    #[arg(long, value_delimiter = ',')]
    pub units: Option<Vec<usize>>,
    /// Activity threshold [default: 0.8]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Use every n-th window [default: 1]
    #[arg(long)]
    pub stride: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Zero-based last frame of the input window [default: last frame]
    #[arg(long)]
    pub at: Option<usize>,
    /// Feed predictions back as inputs for this many windows (open-loop extension)
    #[arg(long, default_value_t = 1)]
    pub rollout: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct LatentArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = Tap::Middle)]
    pub tap: Tap,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    #[command(flatten)]
    pub common: Common,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Param(_) | Error::Shape { .. } => 2,
        Error::Numeric(_) => 4,
        Error::Data(_) | Error::Parse { .. } | Error::Eval(_) | Error::Checkpoint(_) | Error::Io { .. } => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Classify(a) => commands::classify(a),
        Command::Sta(a) => commands::sta(a),
        Command::Predict(a) => commands::predict(a),
        Command::Latent(a) => commands::latent(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
