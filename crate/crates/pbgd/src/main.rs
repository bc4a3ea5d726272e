//! Command-line harness: `pbgd run|probe|svm|list`.

use clap::{Parser, Subcommand};
use pbgd::error::Error;
use pbgd::harness;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pbgd",
    about = "Penalty-based gradient descent toolkit for bilevel optimization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one algorithm run from a config file.
    Run {
        /// Flat key=value config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the diagnostics over an x-grid and gamma list.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVM hyperparameter runs over seeded train/val/test splits.
    Svm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of seeded splits (overrides the config).
        #[arg(long)]
        seeds: Option<usize>,
        /// Use the synthetic two-Gaussian fallback dataset.
        #[arg(long)]
        synthetic: bool,
    },
    /// List the built-in problem catalog.
    List,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config { .. }
        | Error::Argument(_)
        | Error::Ingestion { .. }
        | Error::Data(_)
        | Error::Unsupported(_)
        | Error::Precondition(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out } => harness::cmd_run(&config, out.as_deref()).map(|art| {
            println!(
                "run finished: terminal={} iterations={} gg={:.3e}",
                art.record.terminal, art.record.outer_iterations, art.record.final_gg_metric
            );
            println!("trajectory: {}", art.trajectory_csv.display());
            println!("summary:    {}", art.summary_json.display());
        }),
        Command::Probe { config, out } => {
            harness::cmd_probe(&config, out.as_deref()).map(|art| {
                println!("probe finished: {} rows", art.rows);
                println!("csv: {}", art.probe_csv.display());
            })
        }
        Command::Svm { config, out, seeds, synthetic } => {
            harness::cmd_svm(&config, out.as_deref(), seeds, synthetic).map(|art| {
                println!(
                    "svm finished: mean test accuracy {:.4} +- {:.4} over {} seeds",
                    art.mean_test_accuracy,
                    art.std_test_accuracy,
                    art.results.len()
                );
                println!("per-seed: {}", art.per_seed_csv.display());
                println!("summary:  {}", art.summary_json.display());
            })
        }
        Command::List => {
            print!("{}", harness::cmd_list());
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
