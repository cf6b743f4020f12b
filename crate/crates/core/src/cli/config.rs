//! Experiment configuration: `key = value` files and command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exceed::LevelSchedule;
use crate::laws::{Aperiodicity, ClusterLaw, LawDescriptor};
use crate::pathgen::Construction;

pub const KEYS: [&str; 13] = [
    "experiment",
    "law",
    "construction",
    "n",
    "rho",
    "lambda",
    "reps",
    "seed",
    "runs-gap",
    "block-len",
    "windows",
    "out",
    "threads",
];

pub const DEFAULT_N: u64 = 100_000;
pub const DEFAULT_RHO: f64 = 5.0;
pub const DEFAULT_REPS: u64 = 100;
pub const DEFAULT_WINDOWS: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Theorem1,
    CompoundPoisson,
    Remark1,
    Remark2,
    Oracle,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Theorem1,
        Experiment::CompoundPoisson,
        Experiment::Remark1,
        Experiment::Remark2,
        Experiment::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Theorem1 => "theorem1",
            Experiment::CompoundPoisson => "compound-poisson",
            Experiment::Remark1 => "remark1",
            Experiment::Remark2 => "remark2",
            Experiment::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
                format!(
                    "unknown experiment `{s}`; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

fn parse_construction(s: &str) -> Result<Construction, String> {
    match s {
        "finite-mean" => Ok(Construction::FiniteMean),
        "censored" => Ok(Construction::Censored),
        _ => Err(format!(
            "unknown construction `{s}`; expected finite-mean or censored"
        )),
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub law: LawDescriptor,
    pub construction: Construction,
    pub n: u64,
    pub schedule: LevelSchedule,
    pub reps: u64,
    pub seed: u64,
    pub runs_gap: u64,
    /// `None` means `⌈√n⌉` at every horizon used.
    pub block_len: Option<u64>,
    pub windows: u64,
    pub out: PathBuf,
    pub threads: usize,
}

impl ExperimentConfig {
    /// A config with every optional key at its default.
    pub fn new(experiment: Experiment, law: LawDescriptor) -> Self {
        ExperimentConfig {
            experiment,
            law,
            construction: Construction::Censored,
            n: DEFAULT_N,
            schedule: LevelSchedule::ClusterRate(DEFAULT_RHO),
            reps: DEFAULT_REPS,
            seed: 0,
            runs_gap: 1,
            block_len: None,
            windows: DEFAULT_WINDOWS,
            out: PathBuf::from("out"),
            threads: 1,
        }
    }

    pub fn block_len_for(&self, n: u64) -> u64 {
        self.block_len
            .unwrap_or_else(|| (n as f64).sqrt().ceil() as u64)
            .max(1)
    }

    /// The law in the form the experiment needs: the oracle accepts
    /// periodic supports, simulations do not.
    pub fn cluster_law(&self) -> Result<ClusterLaw> {
        let aperiodicity = match self.experiment {
            Experiment::Oracle => Aperiodicity::Allow,
            _ => Aperiodicity::Require,
        };
        ClusterLaw::new(&self.law, aperiodicity).map_err(|e| Error::config("law", e.to_string()))
    }

    /// Checks invariants that span several keys.
    pub fn validate(&self) -> Result<()> {
        let law = self.cluster_law()?;
        if self.construction == Construction::FiniteMean && !law.has_finite_mean() {
            return Err(Error::config(
                "construction",
                format!(
                    "finite-mean needs a law with finite mean; {} has infinite mean",
                    self.law
                ),
            ));
        }
        let positive = [
            ("n", self.n >= 2, "must be at least 2"),
            ("reps", self.reps >= 1, "must be positive"),
            ("runs-gap", self.runs_gap >= 1, "must be positive"),
            ("block-len", self.block_len != Some(0), "must be positive"),
            ("windows", self.windows >= 1, "must be positive"),
            ("threads", self.threads >= 1, "must be positive"),
        ];
        for (key, ok, msg) in positive {
            if !ok {
                return Err(Error::config(key, msg));
            }
        }
        let (key, rate) = match self.schedule {
            LevelSchedule::ClusterRate(r) => ("rho", r),
            LevelSchedule::TailRate(l) => ("lambda", l),
        };
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::config(key, "must be positive and finite"));
        }
        Ok(())
    }
}

/// Raw `key → value` pairs, later entries overriding earlier ones.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawConfig(BTreeMap<String, String>);

impl RawConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_file_contents(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {}", i + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            raw.set(key.trim(), value.trim())?;
        }
        Ok(raw)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::config(key, "unknown key"));
        }
        self.0.insert(key, value.to_string());
        Ok(())
    }

    pub fn merge(&mut self, overrides: RawConfig) {
        self.0.extend(overrides.0);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn typed<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>> {
        self.get(key)
            .map(|v| parse(v).map_err(|m| Error::config(key, m)))
            .transpose()
    }

    pub fn into_config(self) -> Result<ExperimentConfig> {
        let experiment = self
            .typed("experiment", |s| s.parse::<Experiment>())?
            .ok_or_else(|| Error::config("experiment", "missing"))?;
        let law = self
            .typed("law", |s| {
                LawDescriptor::parse(s).map_err(|e| e.to_string())
            })?
            .ok_or_else(|| Error::config("law", "missing"))?;
        let mut c = ExperimentConfig::new(experiment, law);
        if let Some(v) = self.typed("construction", parse_construction)? {
            c.construction = v;
        }
        if let Some(v) = self.typed("n", parse_count)? {
            c.n = v;
        }
        let rho = self.typed("rho", parse_real)?;
        let lambda = self.typed("lambda", parse_real)?;
        c.schedule = match (rho, lambda) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "lambda",
                    "give either rho or lambda, not both",
                ))
            }
            (Some(r), None) => LevelSchedule::ClusterRate(r),
            (None, Some(l)) => LevelSchedule::TailRate(l),
            (None, None) => LevelSchedule::ClusterRate(DEFAULT_RHO),
        };
        if let Some(v) = self.typed("reps", parse_count)? {
            c.reps = v;
        }
        if let Some(v) = self.typed("seed", parse_count)? {
            c.seed = v;
        }
        if let Some(v) = self.typed("runs-gap", parse_count)? {
            c.runs_gap = v;
        }
        c.block_len = self.typed("block-len", parse_count)?;
        if let Some(v) = self.typed("windows", parse_count)? {
            c.windows = v;
        }
        if let Some(v) = self.get("out") {
            c.out = PathBuf::from(v);
        }
        if let Some(v) = self.typed("threads", parse_count)? {
            c.threads = usize::try_from(v).map_err(|_| Error::config("threads", "too large"))?;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Nonnegative integer, also accepting integral scientific notation such as `1e6`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64 => Ok(x as u64),
        _ => Err(format!("expected a nonnegative integer, got `{s}`")),
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .map_err(|_| format!("expected a number, got `{s}`"))
}
