//! Experiment runner for the `dirlab` command.
//!
//! Each subcommand resolves its flags against an optional JSON config,
//! runs inside a rayon pool of the requested size and writes its outputs
//! together with a `manifest.json` holding their SHA-256 checksums.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod selftest;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command};
pub use commands::Outcome;
pub use error::CliError;

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(job))
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Systole(flags) => {
            let a = args::resolve(flags.clone(), flags.config.as_deref())?;
            let threads = args::thread_count(a.threads.as_deref())?;
            in_pool(threads, || commands::systole(&a, threads))?
        }
        Command::Equidist(flags) => {
            let a = args::resolve(flags.clone(), flags.config.as_deref())?;
            let threads = args::thread_count(a.threads.as_deref())?;
            in_pool(threads, || commands::equidist(&a, threads))?
        }
        Command::Counterexample(flags) => {
            let a = args::resolve(flags.clone(), flags.config.as_deref())?;
            let threads = args::thread_count(a.threads.as_deref())?;
            in_pool(threads, || commands::counterexample(&a, threads))?
        }
        Command::Selftest(flags) => {
            let a = args::resolve(flags.clone(), flags.config.as_deref())?;
            let threads = args::thread_count(a.threads.as_deref())?;
            in_pool(threads, || commands::selftest(&a).map(|(outcome, _)| outcome))?
        }
    }
}

/// Parses an argument list (program name first) and runs it.
pub fn run_from<I, T>(argv: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}
