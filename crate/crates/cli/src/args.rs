use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use repsense_core::{Exercise, MetricKind};
use repsense_train::SplitMode;

#[derive(Debug, Parser)]
#[command(name = "repsense", version, about = "Exercise-quality assessment from wrist IMU recordings")]
pub struct Cli {
    /// Seed for generation, splits and training (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML or JSON file with `seed`, `out_dir`, `preset` and the sections
    /// `synth`, `segmentation`, `metrics`, `model`, `train`.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory for every file a command writes.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic corpus.
    Synth(SynthArgs),
    /// Propose repetition cuts for a recording.
    Segment(SegmentArgs),
    /// Split a recording and compute per-segment quality labels.
    Label(LabelArgs),
    /// Build within-subject similarity pairs for a corpus.
    Pairs(PairsArgs),
    /// Train on one fold of a split and save a checkpoint.
    Train(TrainArgs),
    /// Cross-validate and write report, CSV and confusion matrices.
    Eval(EvalArgs),
    /// Similarity between two segments under a trained checkpoint.
    Score(ScoreArgs),
    /// Energy overlay of a recording, or confusion heatmaps of a report.
    Plot(PlotArgs),
}

pub fn parse_exercise(s: &str) -> Result<Exercise, String> {
    s.parse().map_err(|e: repsense_core::Error| e.to_string())
}

pub fn parse_metric(s: &str) -> Result<MetricKind, String> {
    s.parse().map_err(|e: repsense_core::Error| e.to_string())
}

pub fn parse_split(s: &str) -> Result<SplitMode, String> {
    s.parse().map_err(|e: repsense_train::TrainError| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = parse_exercise)]
    pub exercise: Option<Exercise>,
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Recordings per (subject, ROM class, tremor level) cell.
    #[arg(long)]
    pub per_cell: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub tremor_levels: Option<Vec<f64>>,
    /// Repetitions per recording.
    #[arg(long)]
    pub reps: Option<usize>,
}

/// Metadata for a CSV that has no sidecar JSON next to it.
#[derive(Debug, Args)]
pub struct RecordingMeta {
    #[arg(long, value_parser = parse_exercise, default_value = "sa")]
    pub exercise: Exercise,
    #[arg(long, default_value = "unknown")]
    pub subject: String,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Recording CSV (`t,ax,ay,az,gx,gy,gz`).
    pub input: PathBuf,
    #[command(flatten)]
    pub meta: RecordingMeta,
    /// Accelerometer axis weights `wx,wy,wz`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fail unless this many repetitions are found; keeps the strongest cuts.
    #[arg(long)]
    pub expected_reps: Option<usize>,
    /// Minimum distance between cuts, in samples.
    #[arg(long)]
    pub min_gap: Option<usize>,
    /// Also write the energy overlay SVG.
    #[arg(long)]
    pub plot: bool,
    /// Also write the energy series as CSV.
    #[arg(long)]
    pub energy: bool,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub meta: RecordingMeta,
    /// Cut file; defaults to `<stem>.cuts.json` next to the CSV, or no cuts.
    #[arg(long)]
    pub cuts: Option<PathBuf>,
    /// Corpus manifest with ROM annotations; defaults to `manifest.json`
    /// next to the CSV.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Range of motion in degrees, when no manifest annotates the recording.
    #[arg(long)]
    pub rom: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// Corpus directory holding `manifest.json`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Metrics to build pairs for; all by default.
    #[arg(long, value_parser = parse_metric, value_delimiter = ',')]
    pub metric: Vec<MetricKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size network.
    Default,
    /// Reduced width for CPU cross-validation.
    Desk,
    /// Smallest network, for smoke tests.
    Tiny,
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    /// Starting model configuration before `[model]` overrides.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Cross-entropy weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub pair_fraction: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Disable the attention block.
    #[arg(long)]
    pub no_attention: bool,
    /// Disable the convolutional block.
    #[arg(long)]
    pub no_spatial: bool,
    /// Disable the LSTM block.
    #[arg(long)]
    pub no_temporal: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<MetricKind>,
    #[arg(long, value_parser = parse_split, default_value = "loocv")]
    pub split: SplitMode,
    /// Fold name (`loocv-s03`, `standard`); the first fold by default.
    #[arg(long)]
    pub fold: Option<String>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Metrics to evaluate; `rom,stability` by default.
    #[arg(long, value_parser = parse_metric, value_delimiter = ',')]
    pub metric: Vec<MetricKind>,
    #[arg(long, value_parser = parse_split, default_value = "loocv")]
    pub split: SplitMode,
    /// Folds trained in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Segment CSV scored as the signal.
    pub signal: PathBuf,
    /// Segment CSV used as the anchor.
    pub anchor: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Also print the predicted class of the signal.
    #[arg(long)]
    pub classify: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Recording CSV for an energy overlay.
    #[arg(required_unless_present = "report", conflicts_with = "report")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub meta: RecordingMeta,
    /// Cuts to draw instead of proposing new ones.
    #[arg(long)]
    pub cuts: Option<PathBuf>,
    /// Evaluation report JSON; writes one confusion heatmap per metric.
    #[arg(long)]
    pub report: Option<PathBuf>,
}
