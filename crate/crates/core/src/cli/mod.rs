//! Command-line driver for the experiment suites.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use config::{Experiment, ExperimentConfig, RawConfig};
pub use run::{run_experiment, Check, ExperimentReport};

use crate::error::{Error, Result};

/// Runs one experiment suite and writes report.json plus CSV outputs.
///
/// Exit status: 0 when every check passes, 1 when a check fails, 2 on a
/// usage or configuration error.
#[derive(Debug, Parser)]
#[command(name = "cluster-limits", version)]
pub struct Args {
    /// File of `key = value` lines; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// theorem1 | compound-poisson | remark1 | remark2 | oracle
    #[arg(long)]
    pub experiment: Option<String>,
    /// delta:k | geometric:p | zeta:s | custom:<path>
    #[arg(long)]
    pub law: Option<String>,
    /// finite-mean | censored (default censored)
    #[arg(long)]
    pub construction: Option<String>,
    /// Path length (default 100000).
    #[arg(long)]
    pub n: Option<String>,
    /// Cluster-rate schedule: expected exceeding cycles per path (default 5).
    #[arg(long)]
    pub rho: Option<String>,
    /// Tail-rate schedule: target n P(X > u).
    #[arg(long)]
    pub lambda: Option<String>,
    /// Replications (default 100).
    #[arg(long)]
    pub reps: Option<String>,
    /// Base seed (default 0).
    #[arg(long)]
    pub seed: Option<String>,
    /// Runs declustering gap (default 1).
    #[arg(long = "runs-gap")]
    pub runs_gap: Option<String>,
    /// Block length for the extremal index (default ceil(sqrt(n))).
    #[arg(long = "block-len")]
    pub block_len: Option<String>,
    /// Windows of the count process (default 10).
    #[arg(long)]
    pub windows: Option<String>,
    /// Output directory (default ./out).
    #[arg(long)]
    pub out: Option<String>,
    /// Worker threads (default 1).
    #[arg(long)]
    pub threads: Option<String>,
}

impl Args {
    fn overrides(&self) -> Result<RawConfig> {
        let mut raw = RawConfig::default();
        let pairs = [
            ("experiment", &self.experiment),
            ("law", &self.law),
            ("construction", &self.construction),
            ("n", &self.n),
            ("rho", &self.rho),
            ("lambda", &self.lambda),
            ("reps", &self.reps),
            ("seed", &self.seed),
            ("runs-gap", &self.runs_gap),
            ("block-len", &self.block_len),
            ("windows", &self.windows),
            ("out", &self.out),
            ("threads", &self.threads),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                raw.set(key, v)?;
            }
        }
        Ok(raw)
    }

    pub fn into_config(self) -> Result<ExperimentConfig> {
        let mut raw = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
                RawConfig::parse_file_contents(&text)?
            }
            None => RawConfig::default(),
        };
        raw.merge(self.overrides()?);
        raw.into_config()
    }
}

pub fn parse_config<I, T>(args: I) -> Result<ExperimentConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = Args::try_parse_from(args)?;
    args.into_config()
        .map_err(|e| clap::Error::raw(clap::error::ErrorKind::ValueValidation, format!("{e}\n")))
}

/// Parses arguments, runs the experiment and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match parse_config(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_experiment(&config) {
        Ok(report) => {
            for c in &report.checks {
                let verdict = if c.pass { "PASS" } else { "FAIL" };
                let stat = c.statistic.map_or(String::new(), |s| format!(" {s:.6}"));
                let note = c
                    .note
                    .as_deref()
                    .map_or(String::new(), |n| format!(" ({n})"));
                println!("{verdict} {}{stat}{note}", c.name);
            }
            println!(
                "report written to {}",
                config.out.join("report.json").display()
            );
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
