//! `ssg`: build, train and query incremental 3D semantic scene graphs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure (non-finite values, divergence).

mod commands;
mod config;
mod dot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::EmbeddingMethod;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("frame {index} ({}): {source}", .path.display())]
    Frame {
        index: usize,
        path: PathBuf,
        #[source]
        source: ssg_core::Error,
    },

    #[error(transparent)]
    Core(#[from] ssg_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        let core = match self {
            CliError::Usage(_) | CliError::Config(_) => return 1,
            CliError::Io { .. } => return 2,
            CliError::Frame { source, .. } => source,
            CliError::Core(e) => e,
        };
        match core {
            e if e.is_numeric() => 3,
            ssg_core::Error::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ssg",
    version,
    about = "Incremental 3D semantic scene graphs with context and knowledge expectations"
)]
struct Cli {
    /// Engine configuration file (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuse a frame sequence into a persistent scene graph.
    Build(BuildArgs),
    /// Parse an assertion dump and extract the n-hop neighbourhood of seed classes.
    KgExtract(KgExtractArgs),
    /// Attach concept embeddings to an extracted knowledge graph.
    KgEmbed(KgEmbedArgs),
    /// Train the classifier on a generated dataset.
    Train(TrainArgs),
    /// Run the full pipeline with a trained classifier.
    Infer(InferArgs),
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Print node / edge counts of a serialized graph.
    Stats(StatsArgs),
    /// Convert a serialized graph to Graphviz DOT.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Output directory (graph.json, report.json, local/).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Edge proposal distance, meters.
    #[arg(long)]
    pub edge_threshold: Option<f64>,
    /// Frame files, processed in the given order.
    pub frames: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KgExtractArgs {
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Output knowledge graph JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated seed class names.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<String>,
    #[arg(long)]
    pub hops: Option<u32>,
    #[arg(long)]
    pub max_nodes: Option<usize>,
    #[arg(long)]
    pub language: Option<String>,
    #[arg(long, value_enum)]
    pub embedding: Option<EmbeddingMethod>,
    /// Word-vector table for `--embedding numberbatch`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct KgEmbedArgs {
    /// Input knowledge graph JSON.
    #[arg(long)]
    pub kg: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<EmbeddingMethod>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss curve output; defaults to `<out>.losses.txt`.
    #[arg(long)]
    pub losses: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train with the generator's objects as global context.
    #[arg(long)]
    pub context: bool,
    #[arg(long)]
    pub label_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Knowledge graph JSON to ground global objects in.
    #[arg(long)]
    pub kg: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress cross-layer messages.
    #[arg(long)]
    pub no_context: bool,
    pub frames: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Base scene spec (TOML); flags override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub scenes: usize,
    /// Seed of the first scene; scene i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub supporters: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub graph: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub graph: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = config::EngineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Build(a) => commands::build(config, a),
        Command::KgExtract(a) => commands::kg_extract(config, a),
        Command::KgEmbed(a) => commands::kg_embed(config, a),
        Command::Train(a) => commands::train(config, a),
        Command::Infer(a) => commands::infer(config, a),
        Command::Gen(a) => commands::gen(a),
        Command::Stats(a) => commands::stats(a),
        Command::Export(a) => commands::export(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
