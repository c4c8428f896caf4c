//! `defocus`: blur-map estimation, refinement and map-driven applications
//! from the command line.

mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use args::Cli;

/// A mistake in the invocation rather than in the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.downcast_ref::<UsageError>().is_some()
            || e
                .downcast_ref::<defocus_core::Error>()
                .is_some_and(defocus_core::Error::is_argument_error)
    });
    if usage {
        2
    } else {
        1
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    match threads {
        Some(0) => Err(UsageError("invalid --threads: must be at least 1".into()).into()),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
            Ok(())
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => {
            log::info!("built without the parallel feature; --threads has no effect");
            Ok(())
        }
        None => Ok(()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads(cli.threads)?;
    commands::dispatch(cli.command)
}

fn main() -> ExitCode {
    let cli = match config::parse(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(config::ParseFailure::Clap(e)) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
        Err(config::ParseFailure::Config(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
