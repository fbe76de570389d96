//! Command-line pipeline driver.
//!
//! Each command is one stage reading the previous stages' files from the
//! output directory and writing its own, plus a manifest listing every
//! output with its SHA-256.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::assign::AssignError;
use crate::estimate::EstimateError;
use crate::ingest::IngestError;
use crate::metrics::MetricsError;
use crate::netbuild::NetError;

pub use commands::{run, Artifacts};
pub use config::{
    AssignSection, EstimateSection, IngestSection, MetricsSection, NetworkSection, ReliabilitySection, ReportSection,
    RunConfig, ZoningSection, OUT_DIR_ENV,
};
pub use manifest::{Manifest, ManifestEntry};

/// Exit status for every failure.
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("missing upstream artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("{0}")]
    UndefinedDelta(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error(transparent)]
    Estimate(EstimateError),
    #[error("{0}")]
    Io(String),
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::UndefinedDelta(_) => CliError::UndefinedDelta(e.to_string()),
            other => CliError::Estimate(other),
        }
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingArtifact(_) => "missing-artifact",
            CliError::UndefinedDelta(_) => "undefined-delta",
            CliError::Net(_) => "network",
            CliError::Ingest(_) => "ingest",
            CliError::Metrics(_) => "metrics",
            CliError::Assign(_) => "assign",
            CliError::Estimate(_) => "estimate",
            CliError::Io(_) => "io",
        }
    }

    pub(crate) fn io(path: &Path, e: impl fmt::Display) -> CliError {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// `error: kind=<kind> command=<command> detail="<message>"` on one line.
    pub fn render(&self, command: Command) -> String {
        format!("error: kind={} command={} detail={:?}", self.kind(), command, self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Parse the OSM extract into network/nodes.csv and network/links.csv.
    BuildNetwork,
    /// Partition the network into grid zones.
    BuildZones,
    /// Merge observation files and provider records into one panel.
    Ingest,
    /// Unique-update counts and their histogram.
    Reliability,
    /// Moving-window CoV and congestion series plus the CoV hue map.
    Metrics,
    /// User-equilibrium assignment of the configured OD matrix.
    Assign,
    /// Genetic OD estimation for each configured date.
    Estimate,
    /// Day-over-day comparison table from the estimation statistics.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::BuildNetwork => "build-network",
            Command::BuildZones => "build-zones",
            Command::Ingest => "ingest",
            Command::Reliability => "reliability",
            Command::Metrics => "metrics",
            Command::Assign => "assign",
            Command::Estimate => "estimate",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Parser)]
#[command(name = "netpulse", version, about = "Road-network disruption analytics pipeline")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "netpulse.toml")]
    pub config: PathBuf,
    /// Output directory; overrides the environment and the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// GA seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Loads the config, applies flag overrides and runs the command inside a
/// thread pool of the requested size.
pub fn execute(cli: &Cli) -> Result<Artifacts, CliError> {
    let started = Instant::now();
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.ga.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let out = cfg.out_dir(cli.out.as_deref());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("workers: {e}")))?;
    let artifacts = pool.install(|| run(cli.command, &cfg, &out))?;
    manifest::write(cli.command, &cfg, &out, &artifacts, started.elapsed())?;
    Ok(artifacts)
}

/// Process entry: parses `args`, runs, and returns the exit status. Errors
/// go to stderr as a single machine-parsable line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{}", e.render(cli.command));
            EXIT_FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_line_is_single_line() {
        let e = CliError::Config("bad\nvalue \"x\"".into());
        let line = e.render(Command::Estimate);
        assert!(!line.contains('\n'));
        assert!(line.starts_with("error: kind=config command=estimate detail=\""));
    }

    #[test]
    fn parses_global_flags_after_command() {
        let cli = Cli::try_parse_from(["netpulse", "metrics", "--config", "c.toml", "--seed", "9", "--workers", "2"]).unwrap();
        assert_eq!(cli.command, Command::Metrics);
        assert_eq!(cli.seed, Some(9));
        assert_eq!(cli.workers, Some(2));
    }
}
