//! `plab`: command-line driver for the persistence, boundary and
//! manifold-alignment experiments.
//!
//! Every command writes its tables, plots, the resolved configuration and a
//! manifest into `--out`. `plab rerun <dir>/config.json` repeats a run.

mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Exit code for a failure, chosen from the library error underneath it.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<plab::Error>() {
            return if e.is_data_error() {
                3
            } else if e.is_numeric_error() {
                4
            } else {
                2
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
