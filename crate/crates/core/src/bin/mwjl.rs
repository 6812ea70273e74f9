use std::process::ExitCode;

use clap::Parser;
use modewise_jl::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let invocation = std::env::args().collect::<Vec<_>>().join(" ");
    let stdout = std::io::stdout();
    match run(cli, &invocation, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
