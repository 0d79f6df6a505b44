use clap::Parser;

use bwmr::cli::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(args) => bwmr::cli::run_fit(args),
        Command::Simulate(args) => bwmr::cli::run_simulate(args),
    };
    if let Err(failure) = result {
        // One machine-parsable line on the diagnostic stream.
        eprintln!(
            "{}",
            serde_json::json!({ "error": failure.message, "exit_code": failure.exit_code })
        );
        std::process::exit(failure.exit_code);
    }
}
