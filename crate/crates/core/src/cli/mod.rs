//! Command-line front end: JSON configuration with flag overrides, one
//! subcommand per experiment, deterministic output files.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::presets::Preset;
use config::{ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("hypothesis check failed: {0}")]
    Hypothesis(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) | CliError::Hypothesis(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hardsphere",
    version,
    about = "Soft and hard two-sphere collision experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the reference potential and print its certified constants.
    ValidatePotential,
    /// Integrate the soft equations and write the trajectory table.
    Simulate,
    /// Build the hard-sphere trajectory and sample it.
    Surgery,
    /// Soft scattering map at a single ε.
    Scatter,
    /// Hardening sweep over the ε grid plus variation diagnostics.
    Sweep,
    /// Variation and L¹ diagnostics over the ε grid.
    Variation,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub preset: Option<Preset>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long = "tol-rel", global = true)]
    pub tol_rel: Option<f64>,
    #[arg(long = "tol-abs", global = true)]
    pub tol_abs: Option<f64>,
    #[arg(long = "quad-tol", global = true)]
    pub quad_tol: Option<f64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            eps: self.eps,
            beta: self.beta,
            preset: self.preset,
            out: self.out.clone(),
            rel_tol: self.tol_rel,
            abs_tol: self.tol_abs,
            quad_tol: self.quad_tol,
            threads: self.threads,
        }
    }

    pub fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.common.load()?;
    match cli.command {
        Command::ValidatePotential => commands::validate_potential(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Surgery => commands::surgery(&cfg),
        Command::Scatter => commands::scatter(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Variation => commands::variation(&cfg),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
