use std::process::ExitCode;

use clap::Parser;
use lsvl_cli::{dispatch, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lsvl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
