use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = drivechar_cli::Cli::parse();
    match drivechar_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
