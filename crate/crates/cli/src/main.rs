use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tpmhd::commands::{cmd_converge, cmd_kh, cmd_spinodal, RunError};
use tpmhd::config::parse_config;

#[derive(Parser)]
#[command(name = "tpmhd", version, about = "Two-phase MHD finite element experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Manufactured-solution convergence table.
    Converge(RunArgs),
    /// Spinodal decomposition from seeded noise.
    Spinodal(RunArgs),
    /// Kelvin-Helmholtz shear layer.
    Kh(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, cmd): (&RunArgs, fn(&_, &_) -> Result<PathBuf, RunError>) = match &cli.command {
        Command::Converge(a) => (a, cmd_converge),
        Command::Spinodal(a) => (a, cmd_spinodal),
        Command::Kh(a) => (a, cmd_kh),
    };
    let result = parse_config(&args.config).map_err(RunError::from).and_then(|cfg| {
        let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        cmd(&cfg, &out)
    });
    match result {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
