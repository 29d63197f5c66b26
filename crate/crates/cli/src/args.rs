use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ridgecast::evaluation::MetricKind;
use ridgecast::model::{Adaptation, BackboneKind, Strategy};
use serde::de::DeserializeOwned;

#[derive(Debug, Parser)]
#[command(name = "ridgecast", version, about = "Global-local autoregressive forecasting with a closed-form ridge head")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a source dataset.
    Train(TrainArgs),
    /// Forecast every series of a target dataset with a trained model.
    Forecast(ForecastArgs),
    /// Score forecast files against a target dataset.
    Evaluate(EvaluateArgs),
    /// Random search over the hyperparameter space.
    Search(SearchArgs),
    /// Train and score the 18 backbone/adaptation/strategy variants.
    Ablate(AblateArgs),
    /// Compare pipeline gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

/// Options shared by every command. Each mirrors a key of the config file.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Flat TOML file with run and training keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; derives the initialization and batching seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Allow values outside the searched hyperparameter ranges.
    #[arg(long)]
    pub unchecked: bool,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub num_steps: Option<usize>,
    #[arg(long)]
    pub minibatch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub context_mult: Option<f64>,
    #[arg(long)]
    pub rep_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub min_history: Option<usize>,
    #[arg(long)]
    pub seed_init: Option<u64>,
    #[arg(long)]
    pub seed_batch: Option<u64>,
    /// iterated | teacher_forced
    #[arg(long, value_parser = enum_value::<Strategy>)]
    pub strategy: Option<Strategy>,
    /// rnn | ff | linear
    #[arg(long, value_parser = enum_value::<BackboneKind>)]
    pub backbone: Option<BackboneKind>,
    /// meta | global_head | ada
    #[arg(long, value_parser = enum_value::<Adaptation>)]
    pub adaptation: Option<Adaptation>,
    #[arg(long)]
    pub zoneout: Option<f64>,
    #[arg(long)]
    pub no_log_scale_covariate: bool,
    #[arg(long)]
    pub normalize_age: bool,
    #[arg(long)]
    pub no_warmup_through_padding: bool,
    #[arg(long)]
    pub ada_gamma: Option<f64>,
    #[arg(long)]
    pub ada_anchor: bool,
}

fn enum_value<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Source dataset (JSON lines with a metadata sidecar).
    #[arg(long)]
    pub source: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Forecast past the end of each series instead of its last horizon.
    #[arg(long)]
    pub future: bool,
    /// Accept a target whose frequency differs from the model's.
    #[arg(long)]
    pub allow_freq_mismatch: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Forecast files; more than one adds the mean, interval and median ensemble.
    #[arg(long, num_args = 1.., required = true)]
    pub forecasts: Vec<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// smape | nd | mape
    #[arg(long)]
    pub metric: Option<MetricKind>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// When given, the median of the top-k models forecasts this dataset.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub topk: Option<usize>,
    /// Series scored per trial.
    #[arg(long)]
    pub selection_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub metric: Option<MetricKind>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset to draw the two series from; synthetic series otherwise.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}
