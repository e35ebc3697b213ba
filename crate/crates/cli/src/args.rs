use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uda_select::metrics::{MetricName, MetricSeeds};
use uda_select::synth::Family;

#[derive(Debug, Parser)]
#[command(name = "uda-select", version, about = "Label-free model selection for unsupervised domain adaptation")]
pub struct Cli {
    /// Base seed for probes, k-means, sampling and synthetic data.
    #[arg(long, global = true, env = "UDA_SELECT_SEED", default_value_t = 17)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score bundles with the metric registry.
    Compute(ComputeArgs),
    /// Correlation and best-model deviation of each metric against ground truth.
    Rank(RankArgs),
    /// Hyperparameter search driven by a label-free metric.
    Search(SearchArgs),
    /// Write a synthetic model sweep as bundle files.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Args)]
pub struct MetricFlags {
    /// SND softmax temperature.
    #[arg(long, default_value_t = 0.05)]
    pub snd_tau: f64,
    /// L-BFGS iterations per probe.
    #[arg(long, default_value_t = 200)]
    pub probe_steps: usize,
    /// Folds for held-out probe predictions.
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
}

impl MetricFlags {
    pub fn seeds(&self, seed: u64) -> MetricSeeds {
        MetricSeeds {
            seed,
            snd_tau: self.snd_tau,
            probe_steps: self.probe_steps,
            folds: self.folds,
            ..MetricSeeds::default()
        }
    }
}

pub fn parse_metric(s: &str) -> Result<MetricName, String> {
    s.parse()
}

pub fn parse_family(s: &str) -> Result<Family, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct ComputeArgs {
    /// UDAB1 bundle files.
    #[arg(required = true)]
    pub bundles: Vec<PathBuf>,
    /// Metrics to compute (repeatable or comma-separated); default: the full registry.
    #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
    pub metric: Vec<MetricName>,
    #[command(flatten)]
    pub flags: MetricFlags,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// UDAB1 bundle files carrying true_target_accuracy.
    #[arg(required = true)]
    pub bundles: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
    pub metric: Vec<MetricName>,
    /// Hyperparameter used to group models; groups get their own rows.
    #[arg(long, default_value = "method")]
    pub group_by: String,
    #[command(flatten)]
    pub flags: MetricFlags,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Search space JSON file.
    #[arg(long)]
    pub hp_space: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Use the in-process synthetic objective instead of a trainer command.
    #[arg(long, value_parser = parse_family)]
    pub synthetic: Option<Family>,
    /// Scenario JSON for --synthetic; the built-in benchmark when absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Parameter that sets the synthetic sweep position.
    #[arg(long, default_value = "lambda")]
    pub param: String,
    /// Metric used as the trial objective.
    #[arg(long, default_value = "acm", value_parser = parse_metric)]
    pub metric: MetricName,
    #[command(flatten)]
    pub flags: MetricFlags,
    #[arg(long, default_value_t = 10)]
    pub n_startup: usize,
    #[arg(long, default_value_t = 0.25)]
    pub gamma: f64,
    #[arg(long, default_value_t = 24)]
    pub n_candidates: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup_epochs: u32,
    #[arg(long, default_value_t = 5)]
    pub min_trials: usize,
    #[arg(long)]
    pub no_prune: bool,
    /// Directory for history.jsonl and summary.json; an existing history is resumed.
    #[arg(long, default_value = "uda-search")]
    pub out: PathBuf,
    /// Trainer command, after `--`.
    #[arg(last = true)]
    pub trainer: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario JSON; the built-in benchmark when absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long, default_value_t = 20)]
    pub models: usize,
    /// Output directory for model_XX.udab files and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}
