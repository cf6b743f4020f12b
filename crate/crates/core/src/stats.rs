//! Estimators and goodness-of-fit tests over simulated clusters.
//!
//! Everything that is aggregated across replications is a sum of counts,
//! so partial results merge associatively and in any order.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exceed::ClusterRecord;
use crate::laws::Pmf;
use crate::numeric::{chi_square_sf, ks_pvalue};
use crate::pathgen::Segment;

/// Normalized cluster-size frequencies.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EmpiricalPmf {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl EmpiricalPmf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sizes<I: IntoIterator<Item = u64>>(sizes: I) -> Self {
        let mut p = Self::new();
        for s in sizes {
            p.add(s);
        }
        p
    }

    pub fn add(&mut self, size: u64) {
        *self.counts.entry(size).or_default() += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &EmpiricalPmf) {
        for (&k, &c) in &other.counts {
            *self.counts.entry(k).or_default() += c;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, size: u64) -> u64 {
        self.counts.get(&size).copied().unwrap_or(0)
    }

    pub fn max_size(&self) -> u64 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    pub fn prob(&self, size: u64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count(size) as f64 / self.total as f64
    }

    /// Binomial standard error of [`prob`](Self::prob).
    pub fn std_error(&self, size: u64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let p = self.prob(size);
        (p * (1.0 - p) / self.total as f64).sqrt()
    }

    /// Largest binomial standard error over the observed sizes.
    pub fn max_std_error(&self) -> f64 {
        self.counts
            .keys()
            .map(|&k| self.std_error(k))
            .fold(0.0, f64::max)
    }

    pub fn probabilities(&self) -> Vec<(u64, f64)> {
        self.counts.keys().map(|&k| (k, self.prob(k))).collect()
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts
            .iter()
            .map(|(&k, &c)| k as f64 * c as f64)
            .sum::<f64>()
            / self.total as f64
    }
}

impl Pmf for EmpiricalPmf {
    fn mass(&self, j: u64) -> f64 {
        self.prob(j)
    }

    fn tail(&self, m: u64) -> f64 {
        if m <= 1 {
            return 1.0;
        }
        self.counts.range(m..).map(|(_, &c)| c).sum::<u64>() as f64 / self.total.max(1) as f64
    }

    fn sup_mass_beyond(&self, m: u64) -> f64 {
        self.counts
            .range(m + 1..)
            .map(|(_, &c)| c)
            .max()
            .map_or(0.0, |c| c as f64 / self.total as f64)
    }
}

/// Empirical size law of a set of clusters.
pub fn empirical_pmf(clusters: &[ClusterRecord]) -> Result<EmpiricalPmf> {
    if clusters.is_empty() {
        return Err(Error::InsufficientData("no clusters".into()));
    }
    Ok(EmpiricalPmf::from_sizes(clusters.iter().map(|c| c.size)))
}

/// `½ [Σ_{j ≤ J} |a_j − b_j| + A(J+1) + B(J+1)]`.
///
/// An upper bound on the total variation distance that is exact whenever
/// one of the two laws puts no mass beyond `J`.
pub fn tv_distance_pmfs<A: Pmf + ?Sized, B: Pmf + ?Sized>(a: &A, b: &B, horizon: u64) -> f64 {
    let head: f64 = (1..=horizon).map(|j| (a.mass(j) - b.mass(j)).abs()).sum();
    (0.5 * (head + a.tail(horizon + 1) + b.tail(horizon + 1))).min(1.0)
}

/// `sup_j |a_j − b_j|`, exact when one law vanishes beyond `horizon`
/// and an upper bound otherwise.
pub fn sup_distance<A: Pmf + ?Sized, B: Pmf + ?Sized>(a: &A, b: &B, horizon: u64) -> f64 {
    let head = (1..=horizon)
        .map(|j| (a.mass(j) - b.mass(j)).abs())
        .fold(0.0, f64::max);
    head.max(a.sup_mass_beyond(horizon))
        .max(b.sup_mass_beyond(horizon))
}

/// Exact TV distance from an empirical law to a target, counting the
/// target's analytic tail beyond the observed support.
pub fn tv_distance<G: Pmf + ?Sized>(p: &EmpiricalPmf, target: &G) -> f64 {
    tv_distance_pmfs(p, target, p.max_size())
}

/// Half-L1 distance of two finite pmf vectors (missing entries are zero).
pub fn tv_between(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (at(a, i) - at(b, i)).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Inclusive size ranges of the merged cells; the last is open-ended.
    pub cells: Vec<(u64, u64)>,
}

/// Pearson goodness of fit with cells merged until each expected count
/// reaches `min_expected`; the last cell absorbs the whole upper tail.
pub fn chi_square_gof<G: Pmf + ?Sized>(
    p: &EmpiricalPmf,
    target: &G,
    min_expected: f64,
) -> Result<ChiSquareTest> {
    let n = p.total() as f64;
    if p.total() == 0 {
        return Err(Error::InsufficientData("no observations".into()));
    }
    // (first size, expected, observed)
    let mut cells: Vec<(u64, f64, f64)> = Vec::new();
    let mut start = 1;
    let mut expected = 0.0;
    let mut observed = 0.0;
    let mut j = 1;
    loop {
        expected += n * target.mass(j);
        observed += p.count(j) as f64;
        let remaining = n * target.tail(j + 1);
        if remaining < min_expected {
            // fold everything above j into this cell
            let above = p.total() as f64 - observed - cells.iter().map(|c| c.2).sum::<f64>();
            cells.push((start, expected + remaining, observed + above));
            break;
        }
        if expected >= min_expected {
            cells.push((start, expected, observed));
            start = j + 1;
            expected = 0.0;
            observed = 0.0;
        }
        j += 1;
    }
    if cells.len() > 1 && cells.last().unwrap().1 < min_expected {
        let last = cells.pop().unwrap();
        let prev = cells.last_mut().unwrap();
        prev.1 += last.1;
        prev.2 += last.2;
    }
    if cells.len() < 2 {
        return Err(Error::InsufficientData(
            "fewer than two cells after merging; the test is degenerate".into(),
        ));
    }
    let statistic: f64 = cells.iter().map(|&(_, e, o)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let ranges = cells
        .iter()
        .enumerate()
        .map(|(i, c)| (c.0, cells.get(i + 1).map_or(u64::MAX, |next| next.0 - 1)))
        .collect();
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
        cells: ranges,
    })
}

/// Sample variance over sample mean of per-replication counts.
pub fn dispersion_index(counts: &[u64]) -> Result<f64> {
    if counts.len() < 30 {
        return Err(Error::InsufficientData(format!(
            "{} counts; need at least 30",
            counts.len()
        )));
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / n;
    if mean == 0.0 {
        return Err(Error::InsufficientData("all counts are zero".into()));
    }
    let var = counts
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok(var / mean)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
/// Sorts `samples` in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS distance for a sample given as `(value, multiplicity)` pairs, as
/// produced by the run-length form of a path. Sorts `samples` in place.
pub fn ks_statistic_weighted<F: Fn(f64) -> f64>(samples: &mut [(f64, u64)], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = samples.iter().map(|s| s.1).sum::<u64>() as f64;
    let mut below = 0u64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let x = samples[i].0;
        let mut at = 0;
        while i < samples.len() && samples[i].0 == x {
            at += samples[i].1;
            i += 1;
        }
        let f = cdf(x);
        d = d.max(f - below as f64 / n).max((below + at) as f64 / n - f);
        below += at;
    }
    d
}

pub fn ks_test<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> KsTest {
    let statistic = ks_statistic(samples, cdf);
    KsTest {
        statistic,
        p_value: ks_pvalue(statistic, samples.len()),
        n: samples.len(),
    }
}

/// KS test of pooled inter-cluster gaps against `Exp(1)`.
///
/// Replication `r` is placed on a common time line at offset `r · horizon`,
/// so that gaps between independent stationary windows are counted once;
/// gaps are then scaled by their sample mean.
pub fn ks_exponential_gaps(starts: &[Vec<u64>], horizon: u64) -> Result<KsTest> {
    let mut times = starts
        .iter()
        .enumerate()
        .flat_map(|(r, s)| s.iter().map(move |&t| r as u64 * horizon + t));
    let mut gaps = Vec::new();
    if let Some(mut prev) = times.next() {
        for t in times {
            gaps.push((t - prev) as f64);
            prev = t;
        }
    }
    if gaps.len() < 50 {
        return Err(Error::InsufficientData(format!(
            "{} gaps; need at least 50",
            gaps.len()
        )));
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    if mean == 0.0 {
        return Err(Error::InsufficientData("all gaps are zero".into()));
    }
    for g in &mut gaps {
        *g /= mean;
    }
    Ok(ks_test(&mut gaps, |x| 1.0 - (-x).exp()))
}

/// Per-block exceedance bookkeeping for the blocks estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BlockCounts {
    pub block_len: u64,
    pub blocks: u64,
    pub hit_blocks: u64,
    pub exceedances: u64,
}

impl BlockCounts {
    pub fn merge(&mut self, other: &BlockCounts) {
        debug_assert!(self.blocks == 0 || self.block_len == other.block_len);
        self.block_len = other.block_len.max(self.block_len);
        self.blocks += other.blocks;
        self.hit_blocks += other.hit_blocks;
        self.exceedances += other.exceedances;
    }
}

/// Streams segments of one path into [`BlockCounts`] over the full blocks of `[0, n)`.
#[derive(Clone, Debug)]
pub struct BlockAccumulator {
    level: f64,
    limit: u64,
    last_hit: Option<u64>,
    counts: BlockCounts,
}

impl BlockAccumulator {
    pub fn new(level: f64, block_len: u64, horizon: u64) -> Self {
        let blocks = horizon / block_len.max(1);
        BlockAccumulator {
            level,
            limit: blocks * block_len,
            last_hit: None,
            counts: BlockCounts {
                block_len,
                blocks,
                hit_blocks: 0,
                exceedances: 0,
            },
        }
    }

    pub fn push(&mut self, seg: &Segment) {
        if seg.value <= self.level || seg.start >= self.limit {
            return;
        }
        let end = (seg.start + seg.len).min(self.limit);
        let b = self.counts.block_len;
        self.counts.exceedances += end - seg.start;
        let first = seg.start / b;
        let last = (end - 1) / b;
        let first_new = match self.last_hit {
            Some(h) if h >= first => h + 1,
            _ => first,
        };
        if last >= first_new {
            self.counts.hit_blocks += last - first_new + 1;
        }
        self.last_hit = Some(self.last_hit.map_or(last, |h| h.max(last)));
    }

    pub fn finish(self) -> BlockCounts {
        self.counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMethod {
    Blocks,
    Maxima,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremalIndexEstimate {
    pub theta: f64,
    pub method: IndexMethod,
    pub block_len: u64,
    pub level: f64,
    pub replications: usize,
    pub counts: BlockCounts,
}

pub const THETA_CLAMP: f64 = 1.05;

/// `θ̂ = ln(1 − K/B) / (b ln(1 − q̂))`, clamped to `[0, 1.05]`.
pub fn extremal_index_blocks(
    counts: &BlockCounts,
    level: f64,
    replications: usize,
) -> Result<ExtremalIndexEstimate> {
    if counts.blocks == 0 {
        return Err(Error::InsufficientData("no complete blocks".into()));
    }
    if counts.hit_blocks == 0 || counts.exceedances == 0 {
        return Err(Error::InsufficientData(
            "no exceedances; level too high for the horizon".into(),
        ));
    }
    let b = counts.block_len as f64;
    let k_frac = counts.hit_blocks as f64 / counts.blocks as f64;
    let q = counts.exceedances as f64 / (counts.blocks as f64 * b);
    let raw = (-k_frac).ln_1p() / (b * (-q).ln_1p());
    let theta = if raw.is_nan() {
        THETA_CLAMP
    } else {
        raw.clamp(0.0, THETA_CLAMP)
    };
    Ok(ExtremalIndexEstimate {
        theta,
        method: IndexMethod::Blocks,
        block_len: counts.block_len,
        level,
        replications,
        counts: *counts,
    })
}

/// Blocks estimate pooled over several segment streams of horizon `n`.
pub fn extremal_index_blocks_from_streams<S, I>(
    streams: S,
    level: f64,
    block_len: u64,
    horizon: u64,
) -> Result<ExtremalIndexEstimate>
where
    S: IntoIterator<Item = I>,
    I: IntoIterator<Item = Segment>,
{
    let mut pooled = BlockCounts {
        block_len,
        ..Default::default()
    };
    let mut reps = 0;
    for stream in streams {
        let mut acc = BlockAccumulator::new(level, block_len, horizon);
        for seg in stream {
            acc.push(&seg);
        }
        pooled.merge(&acc.finish());
        reps += 1;
    }
    extremal_index_blocks(&pooled, level, reps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MaximaCheck {
    pub empirical: f64,
    pub std_error: f64,
    pub predicted: f64,
    pub replications: usize,
}

/// Fraction of replications with `M_n ≤ u` against `e^{-θλ}`.
pub fn maxima_check(maxima: &[f64], level: f64, theta: f64, lambda: f64) -> Result<MaximaCheck> {
    if maxima.is_empty() {
        return Err(Error::InsufficientData("no replications".into()));
    }
    let n = maxima.len() as f64;
    let p = maxima.iter().filter(|&&m| m <= level).count() as f64 / n;
    Ok(MaximaCheck {
        empirical: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        predicted: (-theta * lambda).exp(),
        replications: maxima.len(),
    })
}
