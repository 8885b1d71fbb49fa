//! `simtrace`: representation similarity and calibration analysis over run
//! manifests.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use simtrace::calibration::BinScheme;
use simtrace::correlate::FitTarget;
use simtrace::knn::Metric;
use simtrace::similarity::DEFAULT_SEED;
use simtrace::simspace::{LayerSelector, LossSource};
use simtrace::tensor_io::Pooling;
use simtrace::trajectory::Spread;
use simtrace::{Error, ErrorClass};

#[derive(Parser, Debug)]
#[command(name = "simtrace", version, about = "Similarity, calibration and k-NN analysis of model checkpoints")]
pub struct Cli {
    /// Seed for every stochastic step (RBF bandwidth subsampling).
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write output here instead of stdout (atomically, via rename).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// CKA between two checkpoints, per selected layer.
    Cka(CkaArgs),
    /// Expected calibration error of a prediction set.
    Ece(EceArgs),
    /// k-nearest-neighbour classification of a query set against a gallery.
    Knn(KnnArgs),
    /// Similarity-space membership of candidate checkpoints.
    Space(SpaceArgs),
    /// Similarity-to-reference trajectories across runs and epochs.
    Traj(TrajArgs),
    /// Similarity vs metric correlation over trajectory records.
    Corr(CorrArgs),
    /// Check a manifest (and every file it references) or a single array file.
    Validate(ValidateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Linear,
    Rbf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Biased,
    Unbiased,
}

#[derive(Args, Debug, Clone)]
pub struct SimilarityArgs {
    /// final, mean, all, or a layer name.
    #[arg(long, default_value = "final")]
    pub layer: LayerSelector,
    #[arg(long, value_enum, default_value_t = KernelArg::Linear)]
    pub kernel: KernelArg,
    /// Fixed RBF bandwidth; the median pairwise distance when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Biased)]
    pub estimator: EstimatorArg,
    /// Minibatch size (at least 4).
    #[arg(long)]
    pub batch: Option<usize>,
    /// Reduction for raw token layers: cls or patch_mean.
    #[arg(long, default_value = "cls")]
    pub pooling: Pooling,
}

#[derive(Args, Debug)]
pub struct CkaArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub cand: PathBuf,
    /// Reference epoch; the last checkpoint when omitted.
    #[arg(long)]
    pub ref_epoch: Option<u64>,
    #[arg(long)]
    pub cand_epoch: Option<u64>,
    #[command(flatten)]
    pub sim: SimilarityArgs,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["manifest", "logits", "knn_result"])))]
pub struct EceArgs {
    /// Manifest whose checkpoint carries predictions.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    pub epoch: Option<u64>,
    /// `n × c` logits array; needs --labels.
    #[arg(long, requires = "labels")]
    pub logits: Option<PathBuf>,
    #[arg(long, requires = "logits")]
    pub labels: Option<PathBuf>,
    /// JSON output of `simtrace knn`; scores its predictions.
    #[arg(long)]
    pub knn_result: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    pub bins: usize,
    #[arg(long, default_value = "equal_width")]
    pub scheme: BinScheme,
}

#[derive(Args, Debug)]
pub struct KnnArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub gallery_epoch: Option<u64>,
    #[arg(long)]
    pub query_epoch: Option<u64>,
    /// final or a layer name.
    #[arg(long, default_value = "final")]
    pub layer: LayerSelector,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value = "cosine")]
    pub metric: Metric,
    /// Softmax vote temperature.
    #[arg(long, default_value_t = 0.07, conflicts_with = "uniform")]
    pub tau: f64,
    /// One vote per neighbour instead of temperature-weighted votes.
    #[arg(long)]
    pub uniform: bool,
    #[arg(long, default_value = "cls")]
    pub pooling: Pooling,
}

#[derive(Args, Debug)]
pub struct SpaceArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub ref_epoch: Option<u64>,
    /// Candidate manifests.
    #[arg(long = "cand", required = true, num_args = 1..)]
    pub candidates: Vec<PathBuf>,
    /// Treat every checkpoint of each candidate manifest as a candidate.
    #[arg(long)]
    pub all_checkpoints: bool,
    #[arg(long)]
    pub eta: f64,
    #[arg(long)]
    pub epsilon: f64,
    /// error_rate or loss.
    #[arg(long, default_value = "error_rate")]
    pub loss: LossSource,
    #[command(flatten)]
    pub sim: SimilarityArgs,
}

#[derive(Args, Debug)]
pub struct TrajArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub ref_epoch: Option<u64>,
    /// Run manifests.
    #[arg(long = "run", required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    /// population or sample.
    #[arg(long, default_value = "population")]
    pub spread: Spread,
    /// Histogram bins for the final-similarity distribution.
    #[arg(long, default_value_t = 20)]
    pub hist_bins: usize,
    #[command(flatten)]
    pub sim: SimilarityArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutlierArg {
    Iqr,
    None,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FitOnArg {
    Intervals,
    Raw,
}

impl From<FitOnArg> for FitTarget {
    fn from(v: FitOnArg) -> Self {
        match v {
            FitOnArg::Intervals => FitTarget::Intervals,
            FitOnArg::Raw => FitTarget::Raw,
        }
    }
}

#[derive(Args, Debug)]
pub struct CorrArgs {
    /// Records CSV files (as written by `simtrace traj --format csv`).
    #[arg(long = "records", required = true, num_args = 1..)]
    pub records: Vec<PathBuf>,
    /// Metric column to correlate with cka (accuracy, ece, or an extra column).
    #[arg(long)]
    pub metric: String,
    /// Restrict to one layer id; required when records hold several.
    #[arg(long)]
    pub layer: Option<String>,
    /// Use only each run's last epoch.
    #[arg(long)]
    pub final_only: bool,
    #[arg(long, default_value_t = 0.01)]
    pub width: f64,
    #[arg(long, value_enum, default_value_t = OutlierArg::Iqr)]
    pub outliers: OutlierArg,
    #[arg(long, default_value_t = 1.5)]
    pub iqr_k: f64,
    #[arg(long, value_enum, default_value_t = FitOnArg::Intervals)]
    pub fit_on: FitOnArg,
    /// Weight interval means by their point counts.
    #[arg(long)]
    pub weighted: bool,
    /// Fit separately per value of this manifest metadata key (needs --manifest).
    #[arg(long, requires = "manifests")]
    pub group_by: Option<String>,
    #[arg(long = "manifest", num_args = 1..)]
    pub manifests: Vec<PathBuf>,
    /// Similarity values at which to project the metric.
    #[arg(long, num_args = 1..)]
    pub project: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// A manifest (.json) or an array file (.npy).
    pub path: PathBuf,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Validation => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Io => 4,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("SIMTRACE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("SIMTRACE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<(), Error> {
        configure_threads()?;
        let out = commands::run(&cli)?;
        let bytes = match cli.format {
            Format::Json => output::to_json_bytes(&out.envelope),
            Format::Csv => {
                for w in &out.envelope.warnings {
                    eprintln!("warning: {w}");
                }
                out.table.into_bytes()
            }
        };
        output::emit(&bytes, cli.output.as_deref())
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            ExitCode::from(exit_code(e.class()))
        }
    }
}
