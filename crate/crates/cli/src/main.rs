use std::process::ExitCode;

use clap::Parser;
use taoi_sim::cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    taoi_sim::init_logging();
    match execute(cli.command, &mut std::io::stdout().lock()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
