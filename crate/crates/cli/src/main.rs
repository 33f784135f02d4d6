use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = stratq::Cli::parse();
    match stratq::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
