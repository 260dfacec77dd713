use std::process::ExitCode;

use clap::Parser;
use zo_adamu_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(zo_adamu_cli::exit_code(&err))
        }
    }
}
