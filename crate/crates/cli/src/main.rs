use std::process::ExitCode;

use clap::Parser;
use srde_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("srde: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
