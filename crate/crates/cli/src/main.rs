use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prodnet_cli::{run, Command};

/// Growth-panel cleaning and production-network reconstruction.
#[derive(Parser)]
#[command(name = "prodnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rescale growth rates and remove the market mode.
    Clean { config: PathBuf },
    /// Average correlation on a network, with null-model benchmarks and distance decay.
    Netcorr { config: PathBuf },
    /// Reconstruct the network from a cleaned panel.
    Reconstruct { config: PathBuf },
    /// Generate a planted instance.
    Synth { config: PathBuf },
    /// Compare a predicted network with the truth.
    Eval { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, config) = match cli.command {
        Cmd::Clean { config } => (Command::Clean, config),
        Cmd::Netcorr { config } => (Command::Netcorr, config),
        Cmd::Reconstruct { config } => (Command::Reconstruct, config),
        Cmd::Synth { config } => (Command::Synth, config),
        Cmd::Eval { config } => (Command::Eval, config),
    };
    match run(command, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
