use std::process::ExitCode;

use clap::Parser;
use monoamr_cli::{config, run};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = config::Cli::parse();
    let cfg = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run::run(&cfg) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(run::RunError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(run::RunError::Solver(e)) => {
            eprintln!("solver failure: {e}");
            ExitCode::from(1)
        }
    }
}
