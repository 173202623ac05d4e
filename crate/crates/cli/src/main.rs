//! `hawkesn`: simulate, fit and evaluate HawkesN and SIR diffusion models.

mod commands;
mod io;
mod params;

use clap::{Parser, Subcommand};

use commands::{FitArgs, HoldoutArgs, NStatArgs, SimulateArgs, SizeDistArgs};

#[derive(Debug, Parser)]
#[command(name = "hawkesn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a cascade, an SIR realization or an SIR trajectory.
    Simulate(SimulateArgs),
    /// Fit a model to a cascade or realization and print the fit report.
    Fit(FitArgs),
    /// Final-size distribution, a priori or given an observed prefix.
    Sizedist(SizeDistArgs),
    /// Fit on a prefix and score the held-out suffix.
    Holdout(HoldoutArgs),
    /// Identifiability statistic and root search for N.
    Nstat(NStatArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Sizedist(a) => commands::sizedist(a),
        Command::Holdout(a) => commands::holdout(a),
        Command::Nstat(a) => commands::nstat(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
