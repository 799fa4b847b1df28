use std::path::PathBuf;
use std::process::ExitCode;

use bsgd::experiment::{cmd_phantom, cmd_rates, cmd_run, cmd_sweep, Overrides};
use clap::{Args, Parser, Subcommand};

/// Stochastic gradient descent for inverse problems in L^r spaces.
#[derive(Parser)]
#[command(name = "bsgd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single reconstruction run.
    Run(Common),
    /// One run per value of the configured sweep axis.
    Sweep(Common),
    /// Convergence-rate study; exits with status 2 if a tolerance fails.
    Rates(Common),
    /// Writes the configured ground truth.
    Phantom(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides `solver.seed`.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides `solver.epochs`.
    #[arg(long, value_name = "N")]
    epochs: Option<u64>,
    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            epochs: self.epochs,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run(c) | Command::Sweep(c) | Command::Rates(c) | Command::Phantom(c) => c,
    };
    let level = if common.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let overrides = common.overrides();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(&c.config, &overrides).map(|r| {
            log::info!(
                "{} iterations in {:.2} s; best {} {:.6e} at iteration {}",
                r.iterations,
                r.wall_time_s,
                match r.best_by {
                    bsgd::solver::BestBy::RelativeError => "relative error",
                    bsgd::solver::BestBy::Residual => "residual",
                },
                r.best_value,
                r.best_iter
            );
            true
        }),
        Command::Sweep(c) => cmd_sweep(&c.config, &overrides).map(|rows| {
            for r in rows {
                log::info!("value {}: median best {:.6e} over {} seeds", r.value, r.median_best, r.n_seeds);
            }
            true
        }),
        Command::Rates(c) => cmd_rates(&c.config, &overrides).map(|r| {
            if !common.quiet {
                print!("{}", r.summary);
            }
            r.passed
        }),
        Command::Phantom(c) => cmd_phantom(&c.config, &overrides).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("rate study outside tolerance");
            ExitCode::from(2)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
