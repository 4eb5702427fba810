//! Command-line entry point wiring the pipeline into reproducible runs.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "symdistill",
    version,
    about = "Simulate particle systems, train sparse graph networks, and distill them into closed-form expressions"
)]
struct Cli {
    /// JSON config file whose keys mirror the long flag names; explicit
    /// flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker thread count (also SYMDISTILL_WORKERS); defaults to the
    /// available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an N-body dataset under one force law.
    Simulate(commands::SimulateArgs),
    /// Train a graph network variant (or the Hamiltonian variant) on a
    /// dataset file.
    Train(commands::TrainArgs),
    /// Fit learned messages to linear combinations of true forces.
    Probe(commands::ProbeArgs),
    /// Distill a trained checkpoint into symbolic expressions.
    Distill(commands::DistillArgs),
    /// Run symbolic regression on a CSV table.
    Symreg(commands::SymregArgs),
    /// Halo-catalog operations: predict, refit, ood.
    Cosmo(commands::CosmoArgs),
    /// High-dimensional factorization demo on synthetic data.
    Demo(commands::DemoArgs),
    /// Chain simulate -> train -> probe -> distill for one setting and
    /// write a summary.
    Repro(commands::ReproArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let workers = cli
        .workers
        .or_else(|| {
            std::env::var("SYMDISTILL_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    std::env::set_var("MATMUL_NUM_THREADS", workers.to_string());
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global();

    let config = match cli.config {
        Some(path) => match commands::load_config(&path) {
            Ok(c) => Some(c),
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
        },
        None => None,
    };

    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args, config.as_ref()),
        Command::Train(args) => commands::train(args, config.as_ref()),
        Command::Probe(args) => commands::probe(args, config.as_ref()),
        Command::Distill(args) => commands::distill(args, config.as_ref()),
        Command::Symreg(args) => commands::symreg(args, config.as_ref()),
        Command::Cosmo(args) => commands::cosmo(args, config.as_ref()),
        Command::Demo(args) => commands::demo(args, config.as_ref()),
        Command::Repro(args) => commands::repro(args, config.as_ref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
