use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use mxlqr_cli::{exit, Subcommand};

/// Optimal boundary control experiments for the 2D TM Maxwell system.
#[derive(Parser)]
#[command(name = "mxlqr", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (`key = value` with dotted sections, or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = mxlqr_cli::init_threads() {
        eprintln!("config error: {e}");
        return ExitCode::from(exit::CONFIG_ERROR);
    }
    ExitCode::from(mxlqr_cli::execute(cli.subcommand, &cli.common.config, cli.common.out, cli.common.seed))
}
