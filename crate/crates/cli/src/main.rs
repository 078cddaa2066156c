//! `dysonlab` command-line driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use serde_json::json;

use crate::config::{ExperimentConfig, Overrides};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Check the algebraic identities at random configurations.
    VerifyIdentities,
    /// Check the Nash, HJB and master-equation residuals.
    VerifyNash,
    /// Simulate the equilibrium dynamics and estimate ergodic costs.
    Simulate,
    /// Sample the invariant ensemble with MALA chains.
    Sample,
    /// Tabulate a limit statistic against N.
    Stats,
    /// Compare the closed- and open-loop equilibria over a C2 grid.
    CompareLoops,
    /// Snapshots of a planar gas relaxing to equilibrium.
    CoulombRelax,
    /// Predicted locations of spiral-ordered planar particles.
    GinibreLocations,
}

#[derive(Debug, Parser)]
#[command(
    name = "dysonlab",
    version,
    about = "Dyson and Coulomb N-player game experiments"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML file with the same keys as the flags, grouped in the tables
    /// params, sde, chain, grid and run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Error with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_ACCEPTANCE: u8 = 4;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            kind: "config",
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERICAL,
            kind: "numerical",
            message: message.into(),
        }
    }

    pub fn acceptance(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_ACCEPTANCE,
            kind: "acceptance",
            message: message.into(),
        }
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        CliError::numerical(e.to_string())
    }
}

impl From<dysonlab::Error> for CliError {
    fn from(e: dysonlab::Error) -> Self {
        use dysonlab::Error::*;
        match e {
            InvalidConfig(_) | UnknownName(_) | Domain(_) | Index { .. } => {
                CliError::config(e.to_string())
            }
            _ => CliError::numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::numerical(format!("i/o: {e}"))
    }
}

fn command_name(c: Command) -> String {
    c.to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let name = command_name(cli.command);
    let merged = config::load(cli.config.as_deref(), &cli.overrides)?;
    let cfg = ExperimentConfig::resolve(&name, merged)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot start {} workers: {e}", cfg.workers)))?;

    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let mut out = output::Outputs::new(&cfg.output);
    let result = match cli.command {
        Command::VerifyIdentities => commands::verify_identities(&cfg, &mut out),
        Command::VerifyNash => commands::verify_nash(&cfg, &mut out),
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::Sample => commands::sample(&cfg, &mut out),
        Command::Stats => commands::stats(&cfg, &mut out),
        Command::CompareLoops => commands::compare_loops(&cfg, &mut out),
        Command::CoulombRelax => commands::coulomb_relax(&cfg, &mut out),
        Command::GinibreLocations => commands::ginibre_locations(&cfg, &mut out),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => e.kind.to_string(),
    };
    out.manifest(&cfg, &status)?;
    out.json(
        "timing.json",
        &json!({ "started_unix_s": started, "wall_time_s": clock.elapsed().as_secs_f64() }),
    )?;
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config(e.to_string().trim().to_string());
            eprintln!(
                "{}",
                json!({ "error": { "code": err.code, "kind": err.kind, "message": err.message } })
            );
            return ExitCode::from(err.code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": { "code": e.code, "kind": e.kind, "message": e.message } })
            );
            ExitCode::from(e.code)
        }
    }
}
