use std::process::ExitCode;

use clap::Parser;
use newsgauge_service::cli::{run, Cli, CliFailure};
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // structured platform errors go out as the API error body
        Err(e) => match e.downcast_ref::<CliFailure>() {
            Some(f) => {
                eprintln!("{f}");
                ExitCode::from(2)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}
