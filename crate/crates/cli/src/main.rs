use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinesim::{run, Command, Overrides};

#[derive(Parser)]
#[command(name = "spinesim", version, about = "Branching Markov process simulator and verification battery")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Eigentriple, criterion and diagnostics of each model.
    Spectral(Common),
    /// Simulate trees and write their dumps.
    Simulate(Common),
    /// Run the Monte Carlo suites against the exact oracles.
    Verify(Common),
    /// Law of the martingale over a horizon grid, with the contrast check.
    Dichotomy(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, c) = match cli.command {
        Cmd::Spectral(c) => (Command::Spectral, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Dichotomy(c) => (Command::Dichotomy, c),
    };
    let overrides = Overrides {
        seed: c.seed,
        replicas: c.replicas,
        workers: c.workers,
        out_dir: c.out,
    };
    ExitCode::from(run(command, &c.config, &overrides) as u8)
}
