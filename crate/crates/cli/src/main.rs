//! `mmlab`: a deterministic market-making laboratory.
//!
//! Subcommands cover the full experiment families: single-agent training
//! and greedy testing, the risk-aversion and selection-weight sweeps, the
//! reward-function benchmark, the non-stationary context sequence with its
//! policy-weighting scheduler, multi-objective metrics, and report
//! regeneration.

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

use mmlab_cli::commands;
use mmlab_cli::config::{Config, Scale};

#[derive(Parser)]
#[command(name = "mmlab", version, about = "Deterministic market-making laboratory")]
struct Cli {
    /// Path to a TOML config file layered over the scale defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config's seed list with this single seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Default-parameter bundle: desk or paper.
    #[arg(long, global = true)]
    scale: Option<Scale>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learning market maker against the baseline lineup.
    Train,
    /// Greedy evaluation of a saved checkpoint.
    Test {
        /// Checkpoint file produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and test one agent per risk-aversion factor.
    SweepAiif,
    /// Weight sweeps for the dual-head agent and the scalarized
    /// comparison; emits objective points for `metrics`.
    SweepMorl,
    /// Compare reward functions under shared market streams.
    BenchmarkRewards,
    /// Run the non-stationary context sequence with a chosen method.
    ContextSeq {
        /// Adaptation method, e.g. `powdts`, `single-policy:0`,
        /// `cl-ewc:1`, `optimal-mp` (defaults to the config's method).
        #[arg(long)]
        method: Option<String>,
    },
    /// Context sequence with the policy-weighting scheduler (shorthand
    /// for `context-seq --method powdts`).
    Powdts,
    /// Multi-objective metrics over labeled point sets.
    Metrics {
        /// points.json produced by `sweep-morl`.
        #[arg(long)]
        points: PathBuf,
    },
    /// Regenerate rolling averages and summaries from a run directory.
    Report {
        /// Directory containing sessions.csv.
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    let mut cfg = Config::load(cli.config.as_deref(), cli.scale)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.run.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.out = out.display().to_string();
    }

    match &cli.command {
        Command::Train => commands::cmd_train(&cfg),
        Command::Test { checkpoint } => commands::cmd_test(&cfg, checkpoint),
        Command::SweepAiif => commands::cmd_sweep_aiif(&cfg),
        Command::SweepMorl => commands::cmd_sweep_morl(&cfg),
        Command::BenchmarkRewards => commands::cmd_benchmark_rewards(&cfg),
        Command::ContextSeq { method } => commands::cmd_context_seq(&cfg, method.as_deref()),
        Command::Powdts => commands::cmd_context_seq(&cfg, Some("powdts")),
        Command::Metrics { points } => commands::cmd_metrics(&cfg, points),
        Command::Report { run } => commands::cmd_report(run),
    }
}
