//! Command-line front end for the `gmmamp` library.
//!
//! Every run writes its outputs plus a `manifest.json` recording the full
//! configuration, the seed and the library version. Exit codes: 0 success,
//! 1 I/O failure, 2 usage error, 3 numerical failure, 4 non-convergence.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;
pub mod reproduce;
pub mod svg;

use std::ffi::OsString;
use std::fmt;
use std::fs;

use anyhow::{Context, Result};
use clap::Parser;

use crate::args::{Cli, Command};
use crate::config::{config_path, merge_config, parse_kv_config};
use crate::output::write_manifest;

pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NON_CONVERGENCE: i32 = 4;

/// Arguments that parse but make no sense together.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// AMP stopped at its iteration cap; outputs were still written.
#[derive(Debug)]
struct NotConverged(usize);

impl fmt::Display for NotConverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no convergence after {} iterations", self.0)
    }
}

impl std::error::Error for NotConverged {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    use gmmamp::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<config::ConfigError>() {
            return EXIT_USAGE;
        }
        if cause.is::<NotConverged>() {
            return EXIT_NON_CONVERGENCE;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidParams(_)
                | E::Shape(_)
                | E::Parse(_)
                | E::Json(_)
                | E::NotFirstOrder { .. } => EXIT_USAGE,
                E::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
                E::Io(_) => EXIT_IO,
                _ => EXIT_NUMERICAL,
            };
        }
    }
    EXIT_IO
}

/// Apply `--config`, then parse. Parse failures are reported by clap, which
/// exits with the usage code.
pub fn parse_args(argv: Vec<OsString>) -> Result<Cli> {
    let argv = match config_path(&argv) {
        Some(path) => {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading config {}", path.to_string_lossy()))?;
            merge_config(&argv, &parse_kv_config(&text)?)
        }
        None => argv,
    };
    Ok(Cli::parse_from(argv))
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("threads must be at least 1".into()).into());
        }
        // a second call in one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let out = cli.out.as_path();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut pending = None;
    let files = match &cli.command {
        Command::Generate(a) => commands::generate(a, cli.seed, out)?,
        Command::Amp(a) => {
            let (files, converged) = commands::amp(a, cli.seed, out, cli.format)?;
            if !converged {
                pending = Some(NotConverged(a.max_iters));
            }
            files
        }
        Command::Se(a) => commands::se(a, cli.seed, out, cli.format)?,
        Command::PhaseDiagram(a) => commands::phase(a, cli.seed, out, cli.format)?,
        Command::Pca(a) => commands::pca(a, cli.seed, out, cli.format)?,
        Command::Reproduce(a) => reproduce::run(a, cli.seed, out, cli.format)?,
    };
    let config = serde_json::to_value(cli)?;
    write_manifest(out, cli.command.name(), cli.seed, config, files)?;
    match pending {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// Parse, run and map the outcome to an exit code.
pub fn run(argv: Vec<OsString>) -> i32 {
    let result = parse_args(argv).and_then(|cli| execute(&cli));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
