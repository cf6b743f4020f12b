//! Experiment execution: replication fan-out, checks and output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::exceed::{
    resolve_level, write_clusters_csv, write_counts_csv, ClusterRecord, CountAccumulator,
    CountProcess, CycleClusterer, LevelSchedule, RunsClusterer,
};
use crate::laws::{ClusterLaw, Pmf};
use crate::oracle::{
    oracle_report, write_oracle_csv, ConditionalClusterLaw, MarginalLaw, OracleGrid,
};
use crate::pathgen::{segments, Construction, Model};
use crate::seed::{replication_rng, SimRng};
use crate::stats::{
    chi_square_gof, dispersion_index, extremal_index_blocks, ks_exponential_gaps,
    ks_statistic_weighted, maxima_check, sup_distance, tv_distance, BlockAccumulator, BlockCounts,
    EmpiricalPmf,
};

pub const SEED_DERIVATION: &str = "ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(rep)))";

pub const TV_TOLERANCE: f64 = 0.03;
pub const P_VALUE_FLOOR: f64 = 0.001;
pub const DISPERSION_RANGE: (f64, f64) = (0.9, 1.1);
pub const MARGINAL_KS_TOLERANCE: f64 = 0.005;
/// Relative half-width of the accepted interval around `1/μ`.
pub const THETA_RELATIVE_TOLERANCE: f64 = 0.1;
pub const MAXIMA_BIAS_ALLOWANCE: f64 = 0.02;
pub const THETA_ZERO_CEILING: f64 = 0.1;
pub const MAXIMA_MIN_REPS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub statistic: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
    pub note: Option<String>,
}

impl Check {
    fn range(name: &str, statistic: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        let pass = lower.is_none_or(|l| statistic >= l) && upper.is_none_or(|u| statistic <= u);
        Check {
            name: name.into(),
            statistic: Some(statistic),
            lower,
            upper,
            pass,
            note: None,
        }
    }

    fn below(name: &str, statistic: f64, upper: f64) -> Self {
        let mut c = Self::range(name, statistic, None, Some(upper));
        c.pass = statistic < upper;
        c
    }

    fn above(name: &str, statistic: f64, lower: f64) -> Self {
        let mut c = Self::range(name, statistic, Some(lower), None);
        c.pass = statistic > lower;
        c
    }

    fn flag(name: &str, pass: bool, note: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            statistic: None,
            lower: None,
            upper: None,
            pass,
            note: Some(note.into()),
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigSummary {
    pub experiment: Experiment,
    pub law: String,
    pub construction: Construction,
    pub n: u64,
    pub schedule: LevelSchedule,
    pub reps: u64,
    pub seed: u64,
    pub seed_derivation: &'static str,
    pub runs_gap: u64,
    pub block_len: Option<u64>,
    pub windows: u64,
    pub threads: usize,
}

impl ConfigSummary {
    fn new(c: &ExperimentConfig) -> Self {
        ConfigSummary {
            experiment: c.experiment,
            law: c.law.to_string(),
            construction: c.construction,
            n: c.n,
            schedule: c.schedule,
            reps: c.reps,
            seed: c.seed,
            seed_derivation: SEED_DERIVATION,
            runs_gap: c.runs_gap,
            block_len: c.block_len,
            windows: c.windows,
            threads: c.threads,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub config: ConfigSummary,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub results: serde_json::Value,
    /// Files written, `report.json` last.
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn failing_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Outcome {
    checks: Vec<Check>,
    results: serde_json::Value,
}

/// Runs the configured experiment and writes its outputs under `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let law = config.cluster_law()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    fs::create_dir_all(&config.out)?;
    let mut files = Vec::new();
    let outcome = pool.install(|| match config.experiment {
        Experiment::Theorem1 => theorem1(config, &law, &mut files),
        Experiment::CompoundPoisson => compound_poisson(config, &law, &mut files),
        Experiment::Remark1 => remark1(config, &law),
        Experiment::Remark2 => remark2(config, &law),
        Experiment::Oracle => oracle(config, &law, &mut files),
    })?;
    let pass = outcome.checks.iter().all(|c| c.pass);
    let mut report = ExperimentReport {
        config: ConfigSummary::new(config),
        checks: outcome.checks,
        pass,
        results: outcome.results,
        files,
    };
    let path = config.out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text)?;
    report.files.push(path);
    Ok(report)
}

/// Runs `f` for every replication on the current pool; results come back in replication order.
fn replicate<T, F>(config: &ExperimentConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(SimRng) -> T + Sync,
{
    (0..config.reps)
        .into_par_iter()
        .map(|r| f(replication_rng(config.seed, r)))
        .collect()
}

fn model_and_level(config: &ExperimentConfig, law: &ClusterLaw, n: u64) -> Result<(Model, f64)> {
    let model = Model::new(law, config.construction)
        .map_err(|e| Error::config("construction", e.to_string()))?;
    let u =
        resolve_level(n, config.schedule, &model).map_err(|e| Error::config("n", e.to_string()))?;
    Ok((model, u))
}

fn create(path: &Path, files: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    files.push(path.to_path_buf());
    Ok(BufWriter::new(File::create(path)?))
}

fn write_pmf_csv<G: Pmf + ?Sized>(
    path: &Path,
    files: &mut Vec<PathBuf>,
    pmf: &EmpiricalPmf,
    target: &G,
) -> Result<()> {
    let mut out = create(path, files)?;
    writeln!(out, "size,empirical,target")?;
    for j in 1..=pmf.max_size().max(1) {
        writeln!(out, "{j},{},{}", pmf.prob(j), target.mass(j))?;
    }
    out.flush()?;
    Ok(())
}

fn write_replicated_csvs(
    config: &ExperimentConfig,
    files: &mut Vec<PathBuf>,
    clusters: &[Vec<ClusterRecord>],
    counts: &[CountProcess],
) -> Result<()> {
    let rows: Vec<(usize, &[ClusterRecord])> = clusters
        .iter()
        .enumerate()
        .map(|(r, c)| (r, c.as_slice()))
        .collect();
    let mut out = create(&config.out.join("clusters.csv"), files)?;
    write_clusters_csv(&mut out, &rows)?;
    out.flush()?;
    let rows: Vec<(usize, &CountProcess)> = counts.iter().enumerate().collect();
    let mut out = create(&config.out.join("counts.csv"), files)?;
    write_counts_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PmfRow {
    size: u64,
    empirical: f64,
    std_error: f64,
    target: f64,
}

fn pmf_rows<G: Pmf + ?Sized>(pmf: &EmpiricalPmf, target: &G) -> Vec<PmfRow> {
    (1..=pmf.max_size())
        .map(|j| PmfRow {
            size: j,
            empirical: pmf.prob(j),
            std_error: pmf.std_error(j),
            target: target.mass(j),
        })
        .collect()
}

fn theorem1(
    config: &ExperimentConfig,
    law: &ClusterLaw,
    files: &mut Vec<PathBuf>,
) -> Result<Outcome> {
    let (model, u) = model_and_level(config, law, config.n)?;
    let per_rep = replicate(config, |rng| -> Result<_> {
        let mut clusters = CycleClusterer::new(u);
        let mut counts = CountAccumulator::new(u, config.windows, config.n)?;
        for seg in segments(&model, config.n, rng) {
            clusters.push(&seg);
            counts.push(&seg);
        }
        Ok((clusters.finish(), counts.finish()))
    });
    let (clusters, counts): (Vec<_>, Vec<_>) = per_rep
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    write_replicated_csvs(config, files, &clusters, &counts)?;

    let pmf = EmpiricalPmf::from_sizes(
        clusters
            .iter()
            .flatten()
            .filter(|c| !c.delayed)
            .map(|c| c.size),
    );
    let delayed = clusters.iter().flatten().filter(|c| c.delayed).count();
    write_pmf_csv(&config.out.join("pmf.csv"), files, &pmf, law)?;

    let mut checks = Vec::new();
    let mut results = json!({
        "level": u,
        "clusters": pmf.total(),
        "delayed_clusters_dropped": delayed,
    });
    if pmf.total() == 0 {
        checks.push(Check::flag(
            "clusters",
            false,
            "no complete non-delayed clusters; lower the level or raise n",
        ));
        return Ok(Outcome { checks, results });
    }
    let tv = tv_distance(&pmf, law);
    let sup = sup_distance(&pmf, law, pmf.max_size());
    results["tv_distance"] = json!(tv);
    results["sup_distance"] = json!(sup);
    results["max_std_error"] = json!(pmf.max_std_error());
    match config.construction {
        Construction::FiniteMean => {
            checks.push(Check::below("tv-distance", tv, TV_TOLERANCE));
            match chi_square_gof(&pmf, law, 5.0) {
                Ok(t) => {
                    results["chi_square"] = json!(t);
                    checks.push(Check::above("chi-square-p-value", t.p_value, P_VALUE_FLOOR));
                }
                Err(Error::InsufficientData(msg)) => {
                    checks.push(Check::flag(
                        "chi-square-p-value",
                        true,
                        format!("degenerate: {msg}"),
                    ));
                }
                Err(e) => return Err(e),
            }
        }
        Construction::Censored => {
            let exact = ConditionalClusterLaw::new(law, u);
            let bound = exact.bound();
            let horizon = pmf.max_size().max(u.ceil() as u64 + 1);
            let exact_sup = sup_distance(&exact, law, horizon);
            results["bound"] = json!(bound);
            results["conditional_law_sup_distance"] = json!(exact_sup);
            results["conditional_law_mean"] = json!(exact.mean());
            results["sup_distance_to_conditional_law"] = json!(sup_distance(&pmf, &exact, horizon));
            let tolerance = bound + 3.0 * pmf.max_std_error();
            checks.push(Check::range("sup-distance", sup, None, Some(tolerance)));
            checks.push(Check::range(
                "conditional-law-bound",
                exact_sup,
                None,
                Some(bound),
            ));
        }
    }
    results["pmf"] = json!(pmf_rows(&pmf, law));
    Ok(Outcome { checks, results })
}

fn compound_poisson(
    config: &ExperimentConfig,
    law: &ClusterLaw,
    files: &mut Vec<PathBuf>,
) -> Result<Outcome> {
    let (model, u) = model_and_level(config, law, config.n)?;
    let per_rep = replicate(config, |rng| -> Result<_> {
        let mut runs = RunsClusterer::new(u, config.runs_gap)?;
        let mut cycles = 0u64;
        let mut counts = CountAccumulator::new(u, config.windows, config.n)?;
        for seg in segments(&model, config.n, rng) {
            runs.push(&seg);
            counts.push(&seg);
            cycles += u64::from(seg.value > u);
        }
        Ok((runs.finish(), counts.finish(), cycles))
    });
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    let mut clusters = Vec::with_capacity(per_rep.len());
    let mut counts = Vec::with_capacity(per_rep.len());
    let mut exceeding_cycles = 0;
    for (c, n, e) in per_rep {
        clusters.push(c);
        counts.push(n);
        exceeding_cycles += e;
    }
    write_replicated_csvs(config, files, &clusters, &counts)?;
    let pmf = EmpiricalPmf::from_sizes(clusters.iter().flatten().map(|c| c.size));
    write_pmf_csv(&config.out.join("pmf.csv"), files, &pmf, law)?;

    let per_path: Vec<u64> = clusters.iter().map(|c| c.len() as u64).collect();
    let starts: Vec<Vec<u64>> = clusters
        .iter()
        .map(|c| c.iter().map(|r| r.start).collect())
        .collect();
    let mut checks = Vec::new();
    let mut results = json!({
        "level": u,
        "clusters": pmf.total(),
        "exceeding_cycles": exceeding_cycles,
        "mean_clusters_per_path": per_path.iter().sum::<u64>() as f64 / per_path.len() as f64,
        "mean_cluster_size": pmf.mean(),
    });
    match dispersion_index(&per_path) {
        Ok(d) => {
            results["dispersion_index"] = json!(d);
            checks.push(Check::range(
                "dispersion-index",
                d,
                Some(DISPERSION_RANGE.0),
                Some(DISPERSION_RANGE.1),
            ));
        }
        Err(e) => checks.push(Check::flag("dispersion-index", false, e.to_string())),
    }
    match ks_exponential_gaps(&starts, config.n) {
        Ok(t) => {
            results["gap_ks"] = json!(t);
            checks.push(Check::above("gap-ks-p-value", t.p_value, P_VALUE_FLOOR));
        }
        Err(e) => checks.push(Check::flag("gap-ks-p-value", false, e.to_string())),
    }
    Ok(Outcome { checks, results })
}

fn remark1(config: &ExperimentConfig, law: &ClusterLaw) -> Result<Outcome> {
    let (model, _) = model_and_level(config, law, config.n)?;
    let per_rep = replicate(config, |rng| {
        segments(&model, config.n, rng)
            .map(|s| (s.value, s.len))
            .collect::<Vec<_>>()
    });
    let mut weighted: Vec<(f64, u64)> = per_rep.into_iter().flatten().collect();
    let statistic = match &model {
        Model::FiniteMean(_) => ks_statistic_weighted(&mut weighted, |x| 1.0 - (-x).exp()),
        Model::Censored(c) => {
            let marginal = MarginalLaw::new(c);
            ks_statistic_weighted(&mut weighted, |x| marginal.cdf(x))
        }
    };
    let samples: u64 = weighted.iter().map(|w| w.1).sum();
    let results = json!({
        "samples": samples,
        "distinct_values": weighted.len(),
        "ks_distance": statistic,
    });
    let checks = vec![Check::below(
        "marginal-ks-distance",
        statistic,
        MARGINAL_KS_TOLERANCE,
    )];
    Ok(Outcome { checks, results })
}

#[derive(Serialize)]
struct BlocksRun {
    n: u64,
    level: f64,
    block_len: u64,
    counts: BlockCounts,
    theta: Option<f64>,
    #[serde(skip)]
    maxima: Vec<f64>,
}

fn blocks_run(
    config: &ExperimentConfig,
    law: &ClusterLaw,
    n: u64,
) -> Result<(BlocksRun, Result<f64>)> {
    let (model, u) = model_and_level(config, law, n)?;
    let b = config.block_len_for(n);
    if b > n {
        return Err(Error::config(
            "block-len",
            format!("block length {b} exceeds horizon {n}"),
        ));
    }
    let per_rep = replicate(config, |rng| {
        let mut acc = BlockAccumulator::new(u, b, n);
        let mut max = f64::NEG_INFINITY;
        for seg in segments(&model, n, rng) {
            acc.push(&seg);
            max = max.max(seg.value);
        }
        (acc.finish(), max)
    });
    let mut pooled = BlockCounts {
        block_len: b,
        ..Default::default()
    };
    let mut maxima = Vec::with_capacity(per_rep.len());
    for (c, m) in per_rep {
        pooled.merge(&c);
        maxima.push(m);
    }
    let theta = extremal_index_blocks(&pooled, u, maxima.len()).map(|e| e.theta);
    let run = BlocksRun {
        n,
        level: u,
        block_len: b,
        counts: pooled,
        theta: theta.as_ref().ok().copied(),
        maxima,
    };
    Ok((run, theta))
}

fn remark2(config: &ExperimentConfig, law: &ClusterLaw) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut results = json!({});
    match law.mean() {
        Some(mu) => {
            let theta = 1.0 / mu;
            results["theta"] = json!(theta);
            let (run, estimate) = blocks_run(config, law, config.n)?;
            let half = THETA_RELATIVE_TOLERANCE * theta;
            match estimate {
                Ok(t) => checks.push(Check::range(
                    "extremal-index",
                    t,
                    Some(theta - half),
                    Some(theta + half),
                )),
                Err(e) => checks.push(Check::flag("extremal-index", false, e.to_string())),
            }
            if let LevelSchedule::TailRate(lambda) = config.schedule {
                if run.maxima.len() < MAXIMA_MIN_REPS {
                    results["maxima_skipped"] =
                        json!(format!("needs at least {MAXIMA_MIN_REPS} replications"));
                    results["blocks"] = json!([run]);
                    return Ok(Outcome { checks, results });
                }
                let m = maxima_check(&run.maxima, run.level, theta, lambda)?;
                let tolerance = MAXIMA_BIAS_ALLOWANCE + 3.0 * m.std_error;
                checks.push(
                    Check::below("maxima", (m.empirical - m.predicted).abs(), tolerance).with_note(
                        format!("P(M_n <= u_n) = {} against {}", m.empirical, m.predicted),
                    ),
                );
                results["maxima"] = json!(m);
            }
            results["blocks"] = json!([run]);
        }
        None => {
            let ladder = [config.n / 100, config.n / 10, config.n];
            if ladder[0] < 2 {
                return Err(Error::config(
                    "n",
                    "the horizon ladder n/100, n/10, n needs n of at least 200",
                ));
            }
            let mut runs = Vec::new();
            let mut thetas = Vec::new();
            for &n in &ladder {
                let (run, estimate) = blocks_run(config, law, n)?;
                match estimate {
                    Ok(t) => thetas.push(t),
                    Err(e) => checks.push(Check::flag(
                        &format!("extremal-index-n{n}"),
                        false,
                        e.to_string(),
                    )),
                }
                runs.push(run);
            }
            results["theta"] = json!(0.0);
            results["blocks"] = json!(runs);
            if thetas.len() == ladder.len() {
                let decreasing = thetas.windows(2).all(|w| w[1] < w[0]);
                checks.push(Check::flag(
                    "extremal-index-decreasing",
                    decreasing,
                    format!("estimates {thetas:?} at n = {ladder:?}"),
                ));
                checks.push(Check::below(
                    "extremal-index-top",
                    thetas[2],
                    THETA_ZERO_CEILING,
                ));
            }
        }
    }
    Ok(Outcome { checks, results })
}

fn oracle(
    config: &ExperimentConfig,
    law: &ClusterLaw,
    files: &mut Vec<PathBuf>,
) -> Result<Outcome> {
    let rows = oracle_report(law, &OracleGrid::default())?;
    let mut out = create(&config.out.join("oracle.csv"), files)?;
    write_oracle_csv(&mut out, &rows)?;
    out.flush()?;
    let failing: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    let mut checks: Vec<Check> = failing
        .iter()
        .map(|r| {
            Check::range(
                &format!("{}[{}]", r.check, r.param),
                r.abs_error,
                None,
                Some(r.tolerance),
            )
            .with_note("oracle row failed")
        })
        .map(|mut c| {
            c.pass = false;
            c
        })
        .collect();
    checks.push(Check::flag(
        "oracle-rows",
        failing.is_empty(),
        format!("{} of {} rows pass", rows.len() - failing.len(), rows.len()),
    ));
    let max_error = rows.iter().map(|r| r.abs_error).fold(0.0, f64::max);
    let results =
        json!({ "rows": rows.len(), "failing": failing.len(), "max_abs_error": max_error });
    Ok(Outcome { checks, results })
}
