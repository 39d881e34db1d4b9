use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use piag::experiment::{report_summary, run_experiment, ExperimentConfig};
use piag::Error;

/// Run PIAG experiments and certify their convergence.
#[derive(Debug, Parser)]
#[command(name = "piag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every cell of an experiment config (TOML, or JSON by extension).
    Run {
        config: PathBuf,
        /// Worker threads for independent cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Problem seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the summary table for the reports in a directory.
    Summarize { dir: PathBuf },
}

fn run(config: PathBuf, jobs: usize, out: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_path(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("piag: invalid config: {e}");
            return ExitCode::from(2);
        }
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    match run_experiment(&cfg, out.as_deref(), jobs) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for c in outcome.cells.iter().filter(|c| c.report.failed()) {
                if let Some(d) = &c.report.diagnostic {
                    eprintln!("piag: cell {}: {d}", c.report.cell);
                }
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(Error::Config(e)) => {
            eprintln!("piag: invalid config: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("piag: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, jobs, out, seed } => run(config, jobs, out, seed),
        Command::Summarize { dir } => match report_summary(&dir) {
            Ok(s) => {
                print!("{}", s.text);
                ExitCode::from(s.exit_code() as u8)
            }
            Err(e) => {
                eprintln!("piag: {e}");
                ExitCode::from(1)
            }
        },
    }
}
