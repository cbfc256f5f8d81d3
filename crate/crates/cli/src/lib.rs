//! Command-line driver for the partsim pipeline:
//! `stats → split → fit → eval → bench / sweep / hpo`.
//!
//! Every command writes its outputs plus a `run.manifest.json` (effective
//! configuration, input digests, seed, worker count, split reads by stage,
//! output digests) under `--out DIR`.

pub mod access;
pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod registry;

use std::ffi::OsString;

use clap::Parser;

pub use error::CliError;

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
