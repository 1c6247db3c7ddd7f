use std::process::ExitCode;

use clap::Parser;
use msa::config::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match msa::commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
