use std::process::ExitCode;

use clap::Parser;
use pricevol::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("report: {}", outcome.report.display());
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: estimation did not converge");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
