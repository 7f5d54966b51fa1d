use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vdeffuant_cli::{commands, CliError, Settings};

#[derive(Parser)]
#[command(name = "vdeffuant", version = env!("VDEFFUANT_VERSION"), about = "Vectorial Deffuant model on a one-dimensional lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long, value_name = "FILE", global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// One replicate: density time series, summary and optional logs.
    Simulate(Common),
    /// Probability that sites at distance d agree, over replicates.
    ClusterProb(Common),
    /// Phase label, exact expected weight and survival statistics per (F, theta, rho).
    Sweep(Common),
    /// Checks of the initial measure: pile histogram, changeovers, edge pairs.
    Stats(Common),
    /// Exact weight laws, expectations and bounds for one (F, theta).
    Weights(Common),
    /// Phase region of one cell or a grid.
    Phase(Common),
}

type Handler = fn(&Settings) -> Result<(), CliError>;

fn dispatch(command: Command) -> Result<(), CliError> {
    let (run, common): (Handler, Common) = match command {
        Command::Simulate(c) => (commands::simulate, c),
        Command::ClusterProb(c) => (commands::cluster_prob, c),
        Command::Sweep(c) => (commands::sweep, c),
        Command::Stats(c) => (commands::stats, c),
        Command::Weights(c) => (commands::weights, c),
        Command::Phase(c) => (commands::phase, c),
    };
    let settings = Settings::resolve(common.config.as_deref(), common.settings)?;
    run(&settings)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vdeffuant: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
