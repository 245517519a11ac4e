use std::process::ExitCode;

use clap::Parser;
use srmd3d_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match srmd3d_cli::run(cli.command) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
