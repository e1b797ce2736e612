use std::process::ExitCode;

use clap::Parser;

use dualgrad_cli::{execute, Cli};
use dualgrad_core::with_big_stack;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = with_big_stack(|| execute(cli, &mut std::io::stdout().lock()));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
