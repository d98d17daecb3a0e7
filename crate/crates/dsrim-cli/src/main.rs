//! `dsrim` — knowledge-resource-aware neural re-ranking pipeline.
//!
//! Eight staged commands share one configuration (file plus flag
//! overrides) and exchange artifacts through the output directory; a ninth
//! generates a synthetic corpus fixture for end-to-end runs.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::GenFixtureArgs;
use crate::config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "dsrim",
    about = "Deep semantic re-ranking with knowledge-resource input vectors",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Stage options: a config file plus per-key override flags.
#[derive(Args)]
struct StageArgs {
    /// Key-value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

impl StageArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        ExperimentConfig::resolve(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, graph, annotations, and qrels.
    GenFixture(GenFixtureArgs),
    /// Load and validate the knowledge graph; write its cache.
    BuildGraph(StageArgs),
    /// Train text embeddings over documents and queries.
    TrainEmbeddings(StageArgs),
    /// Cluster graph objects into the k-cluster referential.
    BuildReferential(StageArgs),
    /// Assemble network input vectors for all texts.
    Vectorize(StageArgs),
    /// Cross-validated training and re-ranking; writes runs and checkpoints.
    Train(StageArgs),
    /// Score the stored runs: MAP report, per-query AP, input/output similarity.
    Evaluate(StageArgs),
    /// Pivotal-document separation analysis of the referential.
    AnalyzeRepr(StageArgs),
    /// Query difficulty classes from baseline AP.
    Difficulty(StageArgs),
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::GenFixture(args) => commands::cmd_gen_fixture(args),
        Command::BuildGraph(args) => commands::cmd_build_graph(&args.resolve()?),
        Command::TrainEmbeddings(args) => commands::cmd_train_embeddings(&args.resolve()?),
        Command::BuildReferential(args) => commands::cmd_build_referential(&args.resolve()?),
        Command::Vectorize(args) => commands::cmd_vectorize(&args.resolve()?),
        Command::Train(args) => commands::cmd_train(&args.resolve()?),
        Command::Evaluate(args) => commands::cmd_evaluate(&args.resolve()?),
        Command::AnalyzeRepr(args) => commands::cmd_analyze_repr(&args.resolve()?),
        Command::Difficulty(args) => commands::cmd_difficulty(&args.resolve()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
