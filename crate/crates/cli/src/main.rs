use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::{BenchArgs, ConfigFile, ExperimentArgs, GenerateArgs, HistogramArgs, IngestArgs, ServeArgs, StatsArgs, TallyArgs};

/// A problem with how the command was invoked. Exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Parser)]
#[command(name = "colfi", version, about = "Collaborative filtering engine: data tools, benchmarks, servers")]
struct Cli {
    /// TOML file with one table per subcommand; flags win over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read rating and gender CSV files into a snapshot
    Ingest(IngestArgs),
    /// Print the dataset overview of a snapshot
    Stats(StatsArgs),
    /// Write a seeded synthetic snapshot
    Generate(GenerateArgs),
    /// Run a validation protocol for one or more algorithms
    Bench(BenchArgs),
    /// Similarity-weight histogram of a snapshot
    Histogram(HistogramArgs),
    /// Run the recommender, data and stats services
    Serve(ServeArgs),
    /// Run the blind list-comparison experiment gateway
    Experiment(ExperimentArgs),
    /// Recompute the duel tally from an experiment event log
    Tally(TallyArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Ingest(a) => commands::ingest(a.merged(file.ingest)),
        Command::Stats(a) => commands::stats(a.merged(file.stats)),
        Command::Generate(a) => commands::generate(a.merged(file.generate)),
        Command::Bench(a) => commands::bench(a.merged(file.bench)),
        Command::Histogram(a) => commands::histogram(a.merged(file.histogram)),
        Command::Serve(a) => commands::serve(a.merged(file.serve)),
        Command::Experiment(a) => commands::experiment(a.merged(file.experiment)),
        Command::Tally(a) => commands::tally(a.merged(file.tally)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<Usage>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
