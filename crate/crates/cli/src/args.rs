use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "mpu-embed",
    version,
    about = "Heterogeneous graph embeddings from reusable meta-path units"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load and validate a graph, print its summary.
    Ingest(IngestArgs),
    /// Train every MPU and write a checkpoint.
    Train(TrainArgs),
    /// Rank nodes similar to one node under a meta-path plan.
    Query(QueryArgs),
    /// Link prediction, classification or retrieval metrics.
    Eval(EvalArgs),
    /// Time store-based reconstruction against full retraining.
    Bench(BenchArgs),
    /// Write a planted two-community graph in HGB layout.
    GenSynthetic(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Hgb,
    EdgeList,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Cascaded,
    Cumulative,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Task {
    Link,
    Class,
    Retrieval,
}

#[derive(Args, Debug)]
pub struct GraphArgs {
    /// Graph directory (HGB) or edge-list file.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value = "hgb")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Meta-path as type labels, e.g. AMDMA. Repeat for cumulative plans.
    #[arg(long = "path", required = true)]
    pub paths: Vec<String>,
    #[arg(long, value_enum, default_value = "cascaded")]
    pub mode: Mode,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_intra_attn: bool,
    #[arg(long)]
    pub no_inter_attn: bool,
    /// Checkpoint path; a JSON manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-MPU walk corpora.
    #[arg(long)]
    pub dump_corpus: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long)]
    pub node: usize,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Also export every anchor embedding under the plan to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum)]
    pub task: Task,
    /// Required for link and retrieval; classification without a path
    /// uses meta-path-free embeddings.
    #[arg(long = "path")]
    pub paths: Vec<String>,
    #[arg(long, value_enum, default_value = "cascaded")]
    pub mode: Mode,
    /// Node labels (`id \t label` or HGB label.dat); defaults to the
    /// graph's label.dat for classification.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Seed of the evaluation sampler.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Each path is timed as its own cascaded plan.
    #[arg(long = "path", required = true)]
    pub paths: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated type labels; edges join consecutive types.
    #[arg(long, default_value = "A,M", value_delimiter = ',')]
    pub types: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub nodes_per_type: usize,
    #[arg(long, default_value_t = 0.3)]
    pub p_intra: f64,
    #[arg(long, default_value_t = 0.02)]
    pub p_inter: f64,
}
