//! Command-line surface. Every argument struct is also the serialized form
//! recorded in run manifests, so all defaults are materialized values.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "polsar",
    version,
    about = "Complex-valued 3D CNN for PolSAR pixel classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate a synthetic Wishart scene with ground truth.
    Synth(SynthArgs),
    /// Train a network on a T3 directory and label file.
    Train(TrainArgs),
    /// Classify every pixel of a T3 directory with a checkpoint.
    Classify(ClassifyArgs),
    /// Score a predicted label map against a reference.
    Eval(EvalArgs),
    /// Repeat train/eval over a list of window sizes or training ratios.
    Sweep(SweepArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value = "stripes", value_parser = ["stripes", "checkerboard"])]
    pub layout: String,
    /// Scene size as HxW.
    #[arg(long, default_value = "64x64")]
    pub size: String,
    #[arg(long, default_value_t = 4)]
    pub looks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Model and optimizer flags shared by `train` and `sweep`.
#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct TrainOpts {
    /// Fraction of each class used for training.
    #[arg(long, default_value_t = 0.01)]
    pub ratio: f64,
    #[arg(long, default_value_t = 13)]
    pub window: usize,
    /// Comma-separated subset of S, M, D.
    #[arg(long, default_value = "S,M,D")]
    pub branches: String,
    #[arg(long, default_value = "after", value_parser = ["none", "before", "after"])]
    pub attention: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 250)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub t3: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub opts: TrainOpts,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub t3: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write 3x3 median-filtered variants of the map and image.
    #[arg(long)]
    pub median_filter: bool,
    /// Patches per inference batch.
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub t3: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = ["window", "ratio"])]
    pub mode: String,
    /// Comma-separated values of the swept setting.
    #[arg(long)]
    pub values: String,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub opts: TrainOpts,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output location; defaults to the one next to the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
