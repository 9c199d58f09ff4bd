use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use boundbench::pipeline::{Pipeline, PipelineConfig, PipelineError, SimulateOptions, StageOutcome};

/// Chess moves scored against a deep and a shallow engine, then
/// fixed-effects regressions of the deviations.
#[derive(Debug, Parser)]
#[command(name = "boundbench", version)]
struct Cli {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding artifacts, cache and run manifest.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    /// Engine sessions per pool; overrides the configuration.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Simulation seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse PGN files or directories into game records.
    Ingest {
        /// PGN files or directories; the configured paths when omitted.
        inputs: Vec<PathBuf>,
    },
    /// Analyse eligible positions with both engines (resumable).
    Evaluate,
    /// Build the move-level dataset from cached evaluations.
    Measures,
    /// Estimate regression tables.
    Regress {
        /// Table names; the configured list when omitted.
        #[arg(long = "spec")]
        specs: Vec<String>,
    },
    /// Run the identification simulation.
    Simulate {
        /// Agent preset: restricted, null, constant, extensive, intensive.
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Render text tables and binned-effect plot data.
    Report,
}

fn run(cli: Cli) -> Result<StageOutcome, PipelineError> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::defaults_at(&std::env::current_dir().map_err(|e| PipelineError::Io(e.to_string()))?),
    };
    if let Some(w) = cli.workers {
        config.engines.workers = w;
    }
    let workers = config.engines.workers;
    let mut pipeline = Pipeline::open(&cli.run_dir, config, workers)?;
    match cli.command {
        Command::Ingest { inputs } => pipeline.ingest(&inputs),
        Command::Evaluate => pipeline.evaluate(),
        Command::Measures => pipeline.measures(),
        Command::Regress { specs } => pipeline.regress(&specs),
        Command::Simulate { agent, replications } => {
            pipeline.simulate(&SimulateOptions { agent, replications }, cli.seed)
        }
        Command::Report => pipeline.report(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
