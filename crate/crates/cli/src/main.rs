use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use gum_cli::commands;
use gum_cli::exit_code;

#[derive(Parser)]
#[command(name = "gum", version, about = "Run and verify GUM optimizer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single-problem experiment and write its trace.
    RunSynthetic {
        #[arg(long)]
        config: PathBuf,
        /// Master seed; repeat or comma-separate for a parallel sweep.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a multi-block experiment and report per-block assignment frequencies.
    RunBlockwise {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo unbiasedness check for both update variants.
    VerifyUnbiased {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Optimizer-state scalar counts for a list of block shapes.
    MemoryReport {
        /// One "m n" pair per line.
        #[arg(long)]
        shapes: PathBuf,
        /// GaLore rank.
        #[arg(long)]
        rank: usize,
        /// GUM rank.
        #[arg(long)]
        rank_prime: usize,
        /// Expected number of full-rank blocks.
        #[arg(long, default_value_t = 0)]
        gamma: usize,
        /// Full-rank probability, overriding gamma / number of blocks.
        #[arg(long)]
        q: Option<f64>,
    },
    /// Singular values and stable ranks of the weights in a checkpoint.
    AnalyzeSpectrum {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a config and compare against a reference trace.
    GoldenCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::RunSynthetic { config, seed, out: dir } => {
            commands::run_experiment(&config, &seed, dir.as_deref(), None, out)
        }
        Command::RunBlockwise { config, seed, out: dir } => {
            commands::run_experiment(&config, &seed, dir.as_deref(), Some(2), out)
        }
        Command::VerifyUnbiased { trials, draws, seed } => commands::verify_unbiased_cmd(trials, draws, seed, out),
        Command::MemoryReport {
            shapes,
            rank,
            rank_prime,
            gamma,
            q,
        } => commands::memory_report_cmd(&shapes, rank, rank_prime, gamma, q, out),
        Command::AnalyzeSpectrum { checkpoint, out: dir } => {
            commands::analyze_spectrum_cmd(&checkpoint, dir.as_deref(), out)
        }
        Command::GoldenCheck { config, reference } => commands::golden_check_cmd(&config, &reference, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match dispatch(cli.command, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
