//! Command-line experiment runner: `run` executes one configuration,
//! `sweep` fans a base configuration out over a grid, and `summarize`
//! aggregates finished runs into the per-(method, M) accuracy table.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdfl_cli::{config, runner, summary, sweep};

#[derive(Parser)]
#[command(name = "pdfl", about = "Decentralized personalization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a grid of experiments derived from a base config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Sweep axis: neighbor_cap or mu_grid.
        #[arg(long)]
        axis: sweep::SweepAxis,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
    },
    /// Aggregate summary.json files under a directory into one table.
    Summarize {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = config::parse_config(&config)?;
            let output = runner::run_experiment(&cfg)?;
            println!(
                "{}: mean test accuracy {:.4} +- {:.4} over {} clients x {} repeats",
                cfg.method.as_str(),
                output.summary.mean_accuracy,
                output.summary.std_accuracy,
                cfg.m,
                cfg.n_repeats
            );
            println!("artifacts: {}", output.dir.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let cfg = config::parse_config(&config)?;
            let output = sweep::run_sweep(&cfg, axis, &values)?;
            println!(
                "swept {} grid points; results: {}",
                output.summaries.len(),
                output.dir.display()
            );
        }
        Command::Summarize { dir } => {
            let table = summary::summarize_dir(&dir)?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {:#}", err);
            ExitCode::FAILURE
        }
    }
}
