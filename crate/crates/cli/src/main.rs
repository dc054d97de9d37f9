use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = itoo_cli::Cli::parse();
    match itoo_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
