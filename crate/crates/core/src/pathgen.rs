//! Realizations of the stationary sequence `X_k = Y_{η(k)}`.
//!
//! Cycles are produced lazily by [`CycleGenerator`]; a materialized
//! [`RegenerativePath`] and the streaming views ([`SegmentStream`],
//! [`XStream`]) consume the generator identically, so for a fixed seed they
//! observe the same values.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::laws::{censored_law, sample_height, CensoredCycleLaw, ClusterLaw};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    /// Cycle lengths `~ G`, heights independent of lengths.
    FiniteMean,
    /// Cycle lengths `ζ ∧ ⌈Y⌉`, started from `(χ, V)`.
    Censored,
}

impl Construction {
    pub fn as_str(self) -> &'static str {
        match self {
            Construction::FiniteMean => "finite-mean",
            Construction::Censored => "censored",
        }
    }
}

/// A law together with the construction that turns it into a stationary sequence.
#[derive(Clone, Debug)]
pub enum Model {
    FiniteMean(ClusterLaw),
    Censored(CensoredCycleLaw),
}

impl Model {
    pub fn new(law: &ClusterLaw, construction: Construction) -> Result<Self> {
        match construction {
            Construction::FiniteMean => Self::finite_mean(law),
            Construction::Censored => Ok(Self::censored(law)),
        }
    }

    pub fn finite_mean(law: &ClusterLaw) -> Result<Self> {
        if !law.has_finite_mean() {
            return Err(Error::InfiniteMean);
        }
        Ok(Model::FiniteMean(law.clone()))
    }

    pub fn censored(law: &ClusterLaw) -> Self {
        Model::Censored(censored_law(law))
    }

    pub fn construction(&self) -> Construction {
        match self {
            Model::FiniteMean(_) => Construction::FiniteMean,
            Model::Censored(_) => Construction::Censored,
        }
    }

    pub fn law(&self) -> &ClusterLaw {
        match self {
            Model::FiniteMean(g) => g,
            Model::Censored(c) => c.base(),
        }
    }

    /// Mean length of a non-delayed cycle: `μ` or `ν`.
    pub fn mean_cycle_length(&self) -> f64 {
        match self {
            Model::FiniteMean(g) => g.mean().expect("validated finite mean"),
            Model::Censored(c) => c.nu(),
        }
    }

    fn first_cycle<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, f64) {
        match self {
            Model::FiniteMean(g) => {
                let tau = g.sample_delay(rng).expect("validated finite mean");
                (tau, sample_height(rng))
            }
            Model::Censored(c) => {
                let init = c.sample_initial(rng);
                (init.chi, init.v)
            }
        }
    }

    fn next_cycle<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, f64) {
        match self {
            Model::FiniteMean(g) => {
                let tau = g.sample(rng);
                (tau, sample_height(rng))
            }
            Model::Censored(c) => c.sample_cycle_joint(rng),
        }
    }
}

/// One regeneration cycle `[S_{k−1}, S_k)` with its height `Y_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cycle {
    /// 1-based cycle index `k`.
    pub index: u64,
    pub start: u64,
    pub len: u64,
    pub height: f64,
}

/// Infinite stream of cycles of a model.
pub struct CycleGenerator<'a, R> {
    model: &'a Model,
    rng: R,
    index: u64,
    start: u64,
}

impl<'a, R: Rng> CycleGenerator<'a, R> {
    pub fn new(model: &'a Model, rng: R) -> Self {
        CycleGenerator {
            model,
            rng,
            index: 0,
            start: 0,
        }
    }
}

impl<R: Rng> Iterator for CycleGenerator<'_, R> {
    type Item = Cycle;

    fn next(&mut self) -> Option<Cycle> {
        let (len, height) = if self.index == 0 {
            self.model.first_cycle(&mut self.rng)
        } else {
            self.model.next_cycle(&mut self.rng)
        };
        self.index += 1;
        let cycle = Cycle {
            index: self.index,
            start: self.start,
            len,
            height,
        };
        self.start = self.start.saturating_add(len);
        Some(cycle)
    }
}

/// The part of a cycle that lies inside the observation window `[0, n)`.
///
/// This is the run-length form of the `X` stream that the exceedance and
/// statistics code consumes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub cycle: u64,
    pub start: u64,
    /// Number of indices of the cycle inside the window.
    pub len: u64,
    pub value: f64,
    /// Whether the whole cycle lies inside the window.
    pub complete: bool,
}

/// Segments of a path over `[0, n)`; holds one cycle of state.
pub struct SegmentStream<'a, R> {
    cycles: CycleGenerator<'a, R>,
    horizon: u64,
    done: bool,
}

impl<R: Rng> Iterator for SegmentStream<'_, R> {
    type Item = Segment;

    fn next(&mut self) -> Option<Segment> {
        if self.done {
            return None;
        }
        let c = self.cycles.next()?;
        if c.start >= self.horizon {
            self.done = true;
            return None;
        }
        let end = c.start.saturating_add(c.len);
        if end >= self.horizon {
            self.done = true;
        }
        Some(Segment {
            cycle: c.index,
            start: c.start,
            len: end.min(self.horizon) - c.start,
            value: c.height,
            complete: end <= self.horizon,
        })
    }
}

/// Streams the segments of one path over `[0, n)`.
pub fn segments<R: Rng>(model: &Model, n: u64, rng: R) -> SegmentStream<'_, R> {
    SegmentStream {
        cycles: CycleGenerator::new(model, rng),
        horizon: n,
        done: n == 0,
    }
}

/// Turns a plain value sequence into unit-length segments, for analyses of
/// data that carry no cycle bookkeeping.
pub fn segments_from_values<I>(values: I) -> impl Iterator<Item = Segment>
where
    I: IntoIterator<Item = f64>,
{
    values.into_iter().enumerate().map(|(k, value)| Segment {
        cycle: k as u64 + 1,
        start: k as u64,
        len: 1,
        value,
        complete: true,
    })
}

/// Index-by-index view `(k, X_k, cycle index)`.
pub struct XStream<'a, R> {
    segments: SegmentStream<'a, R>,
    current: Option<Segment>,
    offset: u64,
}

impl<R: Rng> Iterator for XStream<'_, R> {
    type Item = (u64, f64, u64);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(seg) = self.current {
                if self.offset < seg.len {
                    let k = seg.start + self.offset;
                    self.offset += 1;
                    return Some((k, seg.value, seg.cycle));
                }
            }
            self.current = Some(self.segments.next()?);
            self.offset = 0;
        }
    }
}

/// Streams `X_0, ..., X_{n−1}` with memory bounded by one cycle.
pub fn stream_x<R: Rng>(model: &Model, n: u64, rng: R) -> XStream<'_, R> {
    XStream {
        segments: segments(model, n, rng),
        current: None,
        offset: 0,
    }
}

/// A fully materialized path: every cycle touching `[0, n)`.
#[derive(Clone, Debug)]
pub struct RegenerativePath {
    pub construction: Construction,
    pub taus: Vec<u64>,
    pub heights: Vec<f64>,
    pub horizon: u64,
}

/// Materializes the cycles of a model covering `[0, n)`.
pub fn build_path<R: Rng>(model: &Model, n: u64, rng: R) -> RegenerativePath {
    let mut taus = Vec::new();
    let mut heights = Vec::new();
    if n > 0 {
        for c in CycleGenerator::new(model, rng) {
            taus.push(c.len);
            heights.push(c.height);
            if c.start + c.len >= n {
                break;
            }
        }
    }
    RegenerativePath {
        construction: model.construction(),
        taus,
        heights,
        horizon: n,
    }
}

pub fn build_path_finite<R: Rng>(law: &ClusterLaw, n: u64, rng: R) -> Result<RegenerativePath> {
    Ok(build_path(&Model::finite_mean(law)?, n, rng))
}

pub fn build_path_censored<R: Rng>(law: &CensoredCycleLaw, n: u64, rng: R) -> RegenerativePath {
    build_path(&Model::Censored(law.clone()), n, rng)
}

impl RegenerativePath {
    pub fn cycle_count(&self) -> usize {
        self.taus.len()
    }

    /// `S_1, S_2, ...`
    pub fn partial_sums(&self) -> Vec<u64> {
        self.taus
            .iter()
            .scan(0u64, |s, &t| {
                *s += t;
                Some(*s)
            })
            .collect()
    }

    /// `η(k) = min{r : S_r > k}` together with `S_{η(k)−1}` and `S_{η(k)}`.
    fn locate(&self, sums: &[u64], k: u64) -> (usize, u64, u64) {
        let r = sums.partition_point(|&s| s <= k);
        let before = if r == 0 { 0 } else { sums[r - 1] };
        (r + 1, before, sums[r])
    }

    pub fn eta(&self, k: u64) -> usize {
        self.locate(&self.partial_sums(), k).0
    }

    /// `(γ(k), χ(k))` for every `k < n`.
    pub fn defect_excess(&self) -> Vec<(u64, u64)> {
        let sums = self.partial_sums();
        (0..self.horizon)
            .map(|k| {
                let (_, before, after) = self.locate(&sums, k);
                (k - before, after - k)
            })
            .collect()
    }

    /// `X_0, ..., X_{n−1}`.
    pub fn values(&self) -> Vec<f64> {
        self.segments()
            .flat_map(|s| std::iter::repeat_n(s.value, s.len as usize))
            .collect()
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.horizon;
        self.taus
            .iter()
            .zip(&self.heights)
            .scan(0u64, |start, (&tau, &y)| {
                let s = *start;
                *start += tau;
                Some((s, tau, y))
            })
            .enumerate()
            .take_while(move |(_, (s, _, _))| *s < n)
            .map(move |(i, (s, tau, y))| Segment {
                cycle: i as u64 + 1,
                start: s,
                len: (s + tau).min(n) - s,
                value: y,
                complete: s + tau <= n,
            })
    }

    /// Writes `k,x` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,x")?;
        for (k, x) in self.values().iter().enumerate() {
            writeln!(out, "{k},{x}")?;
        }
        Ok(())
    }
}
