use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fishersft", version, about = "Information-gain data selection for fine-tuning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and its true parameters.
    #[command(args_override_self = true)]
    Gen(GenArgs),
    /// Select a subset of sentences.
    #[command(args_override_self = true)]
    Select(SelectArgs),
    /// Fit the softmax model on a selection.
    #[command(args_override_self = true)]
    Fit(FitArgs),
    /// Measure prediction error of fitted parameters.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Compare lazy and naive greedy on one dataset.
    #[command(args_override_self = true)]
    Bench(BenchArgs),
    /// Run the full select, fit and evaluate grid.
    #[command(args_override_self = true)]
    Pipeline(PipelineArgs),
}

/// Flags shared by the single-step commands.
#[derive(Debug, Args)]
pub struct Common {
    /// Read defaults from an audit file written by an earlier run; flags on
    /// the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Worker threads (all cores when unset).
    #[arg(long, env = "FISHERSFT_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset output; `.jsonl` selects the JSON-lines format.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the true parameters.
    #[arg(long)]
    pub theta_out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 5000)]
    pub corpus_size: usize,
    #[arg(long, default_value_t = 5)]
    pub len_min: usize,
    #[arg(long, default_value_t = 20)]
    pub len_max: usize,
    /// Clip token vectors to unit length.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Word vectors (`word v1 ... vD` per line) to draw the vocabulary from
    /// instead of Gaussian vectors.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// With `--embeddings`: write the chosen words, one per line.
    #[arg(long)]
    pub words_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: Common,
    /// Not needed for `ask-llm` unless the text count should be checked.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// fisher-sft, greedy-naive, uniform, sentence-od, density, clustered
    /// or ask-llm.
    #[arg(long, default_value = "fisher-sft")]
    pub method: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Selection JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// inverse or proportional.
    #[arg(long, default_value = "inverse")]
    pub density_mode: String,
    #[arg(long, default_value_t = 50)]
    pub density_rows: usize,
    #[arg(long, default_value_t = 1024)]
    pub density_bins: usize,
    #[arg(long, default_value_t = 10)]
    pub clusters: usize,
    #[arg(long, default_value_t = 2.0)]
    pub cluster_z: f64,
    /// Candidate texts for `ask-llm`: one per line, or one JSON string per
    /// line for `.jsonl` files.
    #[arg(long)]
    pub texts: Option<PathBuf>,
    /// Scorer executable speaking JSON over stdin and stdout.
    #[arg(long)]
    pub scorer_cmd: Option<PathBuf>,
    /// Scorer endpoint accepting JSON POSTs.
    #[arg(long)]
    pub scorer_url: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    pub scorer_timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Selection JSON; the whole dataset when omitted.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    /// Parameter file output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    /// barzilai-borwein or backtracking.
    #[arg(long, default_value = "barzilai-borwein")]
    pub step_rule: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub theta_star: PathBuf,
    #[arg(long)]
    pub theta_hat: PathBuf,
    /// Metrics CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one error per sentence.
    #[arg(long)]
    pub per_sentence: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// A synthetic corpus is generated when omitted.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub corpus_size: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Experiment config (`key = value` lines); flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the CSVs and the resolved config.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated method names.
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated budgets.
    #[arg(long)]
    pub n_grid: Option<String>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Use a fixed corpus instead of synthetic data; needs `--theta-star`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub theta_star: Option<PathBuf>,
    #[arg(long)]
    pub density_mode: Option<String>,
    /// Synthetic corpora only.
    #[arg(long)]
    pub normalize: bool,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, env = "FISHERSFT_THREADS")]
    pub threads: Option<usize>,
}
