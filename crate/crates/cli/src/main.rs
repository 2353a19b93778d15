use std::panic;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lyakrylov_cli::commands::{self, Outcome};
use lyakrylov_cli::config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "lyakrylov",
    version,
    about = "Block Krylov experiments for large Lyapunov equations A X + X A^T + C C^T = 0",
    after_help = "Exit status: 0 converged, 2 not converged, 1 error.\n\
                  LYAKRYLOV_DENSE_CAP overrides the largest Kronecker system solved densely."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method and log every iteration.
    Solve(Overrides),
    /// Run several methods on the same problem.
    Compare(Overrides),
    /// Iteration and time ratios against Galerkin over a list of ranks.
    Sweep(Overrides),
    /// Compress-and-restart under a column budget.
    Restart(Overrides),
    /// Compare NKS with MR on a 1D Laplacian, iteration by iteration.
    KronConj(Overrides),
    /// Ritz-value function, distance bounds and solution spectra per iteration.
    Diagnose(Overrides),
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let (flags, default_problem, command): (_, _, fn(&ExperimentConfig) -> anyhow::Result<Outcome>) = match &cli.command {
        Command::Solve(f) => (f, None, commands::solve),
        Command::Compare(f) => (f, None, commands::compare),
        Command::Sweep(f) => (f, None, commands::sweep),
        Command::Restart(f) => (f, None, commands::restart),
        Command::KronConj(f) => (f, Some("laplacian_1d:50"), commands::kron_conj),
        Command::Diagnose(f) => (f, None, commands::diagnose),
    };
    let cfg = ExperimentConfig::resolve(flags, default_problem)?;
    command(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match panic::catch_unwind(|| run(cli)) {
        Ok(Ok(outcome)) => ExitCode::from(outcome.exit_code()),
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(1)
        }
    }
}
