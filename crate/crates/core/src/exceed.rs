//! Levels, exceedance counts and cluster extraction.
//!
//! Clusters can be read off the regeneration structure (one cluster per
//! cycle whose height exceeds the level) or, as an analyst without access to
//! the cycles would, by runs declustering of the exceedance indices.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::MarginalLaw;
use crate::pathgen::{Model, RegenerativePath, Segment};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", content = "parameter", rename_all = "kebab-case")]
pub enum LevelSchedule {
    /// Expected number of cycles per path with a height above the level.
    ClusterRate(f64),
    /// Target value of `n · P(X₀ > u)`.
    TailRate(f64),
}

impl LevelSchedule {
    pub fn parameter(self) -> f64 {
        match self {
            LevelSchedule::ClusterRate(r) | LevelSchedule::TailRate(r) => r,
        }
    }
}

/// Level `u_n` for horizon `n`.
///
/// The cluster-rate schedule gives `u = ln(n / (c ρ))` with `c` the mean
/// cycle length of the model. The tail-rate schedule solves
/// `n P(X₀ > u) = λ` with the exact marginal of `X`.
pub fn resolve_level(n: u64, schedule: LevelSchedule, model: &Model) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("horizon {n} is below 2")));
    }
    let rate = schedule.parameter();
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rate {rate} must be positive and finite"
        )));
    }
    let n = n as f64;
    let u = match (schedule, model) {
        (LevelSchedule::ClusterRate(rho), _) => (n / (model.mean_cycle_length() * rho)).ln(),
        (LevelSchedule::TailRate(lambda), Model::FiniteMean(_)) => (n / lambda).ln(),
        (LevelSchedule::TailRate(lambda), Model::Censored(c)) => {
            let target = lambda / n;
            if target >= 1.0 {
                return Err(Error::NonPositiveLevel((n / lambda).ln()));
            }
            let marginal = MarginalLaw::new(c);
            let (mut lo, mut hi) = (0.0, 1.0);
            while marginal.survival(hi) > target {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if marginal.survival(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-13 * hi {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
    };
    if u <= 0.0 {
        return Err(Error::NonPositiveLevel(u));
    }
    Ok(u)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Cycle,
    Runs(u64),
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterMethod::Cycle => f.write_str("cycle"),
            ClusterMethod::Runs(r) => write!(f, "runs({r})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClusterRecord {
    pub start: u64,
    pub size: u64,
    pub level: f64,
    pub method: ClusterMethod,
    /// Set for the delayed first cycle, whose length does not follow `G`.
    pub delayed: bool,
}

/// One cluster per complete cycle with height above `level`.
#[derive(Clone, Debug)]
pub struct CycleClusterer {
    level: f64,
    clusters: Vec<ClusterRecord>,
}

impl CycleClusterer {
    pub fn new(level: f64) -> Self {
        CycleClusterer {
            level,
            clusters: Vec::new(),
        }
    }

    pub fn push(&mut self, seg: &Segment) {
        if seg.complete && seg.value > self.level {
            self.clusters.push(ClusterRecord {
                start: seg.start,
                size: seg.len,
                level: self.level,
                method: ClusterMethod::Cycle,
                delayed: seg.cycle == 1,
            });
        }
    }

    pub fn finish(self) -> Vec<ClusterRecord> {
        self.clusters
    }
}

/// Runs declustering: exceedances more than `gap` indices apart start a new cluster.
#[derive(Clone, Debug)]
pub struct RunsClusterer {
    level: f64,
    gap: u64,
    open: Option<(u64, u64, u64)>, // (start, size, last index)
    clusters: Vec<ClusterRecord>,
}

impl RunsClusterer {
    pub fn new(level: f64, gap: u64) -> Result<Self> {
        if gap == 0 {
            return Err(Error::InvalidArgument("runs gap must be at least 1".into()));
        }
        Ok(RunsClusterer {
            level,
            gap,
            open: None,
            clusters: Vec::new(),
        })
    }

    pub fn push(&mut self, seg: &Segment) {
        if seg.len == 0 || seg.value <= self.level {
            return;
        }
        let last = seg.start + seg.len - 1;
        match &mut self.open {
            Some((_, size, prev)) if seg.start - *prev <= self.gap => {
                *size += seg.len;
                *prev = last;
            }
            _ => {
                self.close();
                self.open = Some((seg.start, seg.len, last));
            }
        }
    }

    fn close(&mut self) {
        if let Some((start, size, _)) = self.open.take() {
            self.clusters.push(ClusterRecord {
                start,
                size,
                level: self.level,
                method: ClusterMethod::Runs(self.gap),
                delayed: false,
            });
        }
    }

    pub fn finish(mut self) -> Vec<ClusterRecord> {
        self.close();
        self.clusters
    }
}

/// `N_n(A)` over the partition of `[0, 1]` into equal windows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountProcess {
    pub windows: u64,
    pub horizon: u64,
    pub counts: Vec<u64>,
}

impl CountProcess {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Streams segments into window counts; index `k` falls in window `⌊k m / n⌋`.
#[derive(Clone, Debug)]
pub struct CountAccumulator {
    level: f64,
    process: CountProcess,
}

impl CountAccumulator {
    pub fn new(level: f64, windows: u64, horizon: u64) -> Result<Self> {
        if windows == 0 {
            return Err(Error::InvalidArgument(
                "window count must be at least 1".into(),
            ));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        Ok(CountAccumulator {
            level,
            process: CountProcess {
                windows,
                horizon,
                counts: vec![0; windows as usize],
            },
        })
    }

    fn window_of(&self, k: u64) -> u64 {
        (k as u128 * self.process.windows as u128 / self.process.horizon as u128) as u64
    }

    /// First index of window `i`: `⌈i n / m⌉`.
    fn window_start(&self, i: u64) -> u64 {
        let (n, m) = (self.process.horizon as u128, self.process.windows as u128);
        ((i as u128 * n).div_ceil(m)) as u64
    }

    pub fn push(&mut self, seg: &Segment) {
        if seg.value <= self.level {
            return;
        }
        let end = (seg.start + seg.len).min(self.process.horizon);
        let mut k = seg.start;
        while k < end {
            let w = self.window_of(k);
            let next = self.window_start(w + 1).min(end);
            self.process.counts[w as usize] += next - k;
            k = next;
        }
    }

    pub fn finish(self) -> CountProcess {
        self.process
    }
}

pub fn clusters_by_cycle(path: &RegenerativePath, level: f64) -> Vec<ClusterRecord> {
    clusters_by_cycle_segments(path.segments(), level)
}

pub fn clusters_by_cycle_segments<I: IntoIterator<Item = Segment>>(
    segments: I,
    level: f64,
) -> Vec<ClusterRecord> {
    let mut c = CycleClusterer::new(level);
    for s in segments {
        c.push(&s);
    }
    c.finish()
}

pub fn clusters_by_runs<I: IntoIterator<Item = Segment>>(
    segments: I,
    level: f64,
    gap: u64,
) -> Result<Vec<ClusterRecord>> {
    let mut c = RunsClusterer::new(level, gap)?;
    for s in segments {
        c.push(&s);
    }
    Ok(c.finish())
}

pub fn count_process<I: IntoIterator<Item = Segment>>(
    segments: I,
    level: f64,
    windows: u64,
    horizon: u64,
) -> Result<CountProcess> {
    let mut c = CountAccumulator::new(level, windows, horizon)?;
    for s in segments {
        c.push(&s);
    }
    Ok(c.finish())
}

/// Writes `rep,method,start,size,level` rows.
pub fn write_clusters_csv<W: Write>(mut out: W, reps: &[(usize, &[ClusterRecord])]) -> Result<()> {
    writeln!(out, "rep,method,start,size,level")?;
    for (rep, clusters) in reps {
        for c in *clusters {
            writeln!(out, "{rep},{},{},{},{}", c.method, c.start, c.size, c.level)?;
        }
    }
    Ok(())
}

/// Writes `rep,window,count` rows.
pub fn write_counts_csv<W: Write>(mut out: W, reps: &[(usize, &CountProcess)]) -> Result<()> {
    writeln!(out, "rep,window,count")?;
    for (rep, p) in reps {
        for (w, c) in p.counts.iter().enumerate() {
            writeln!(out, "{rep},{w},{c}")?;
        }
    }
    Ok(())
}
