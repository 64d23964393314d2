use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use isl::harness::stages::{run_stage, Stage};
use isl::harness::ExperimentConfig;

#[derive(Parser)]
#[command(name = "isl", about = "Inverse statics learning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment TOML.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the static torque space and build its boundary.
    SstExplore(Common),
    /// Collect level sets and derive the symmetry group and BCTS.
    DiscoverSym(Common),
    /// Train an LLM with goal babbling and evaluate it on the task grid.
    GoalBabble(Common),
    /// Train an LLM with direction sampling.
    DirectionSample(Common),
    /// Train the batch network on BCTS samples and compare with full-space training.
    BatchLearn(Common),
    /// Evaluate a stored learner on the configured targets.
    Evaluate(Common),
    /// Run the rows listed under [table1] and write table1.csv.
    Report(Common),
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (stage, c) = match cli.cmd {
        Cmd::SstExplore(c) => (Stage::SstExplore, c),
        Cmd::DiscoverSym(c) => (Stage::DiscoverSym, c),
        Cmd::GoalBabble(c) => (Stage::GoalBabble, c),
        Cmd::DirectionSample(c) => (Stage::DirectionSample, c),
        Cmd::BatchLearn(c) => (Stage::BatchLearn, c),
        Cmd::Evaluate(c) => (Stage::Evaluate, c),
        Cmd::Report(c) => (Stage::Report, c),
    };
    let cfg = ExperimentConfig::load(&c.config).with_context(|| format!("loading {}", c.config.display()))?;
    let summary = run_stage(stage, &cfg, c.seed, &c.out).with_context(|| format!("{} failed", stage.name()))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
