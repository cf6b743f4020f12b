//! Target cluster-size laws `G` on ℕ and the derived laws of both
//! regenerative constructions.
//!
//! Every sampler here is an inverse transform on an exact tail function, so
//! heavy-tailed laws reach arbitrarily large values without a fixed table
//! bound. Heights are always `Exp(1)`.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::numeric::{hurwitz_zeta, riemann_zeta};

/// Upper bound on the mean censored cycle length, `∫₀^∞ ⌈v⌉ e^{-v} dv = 1/(1 − e^{-1})`.
pub const MEAN_CYCLE_BOUND: f64 = 1.0 / (1.0 - 1.0 / std::f64::consts::E);

/// Largest value the samplers will return; tails beyond it are folded into it.
pub const SAMPLE_CAP: u64 = 1 << 62;

const SAMPLING_TABLE_LEN: usize = 1024;

/// Cycle lengths above this bound carry less than `e^{-79}` of censored mass.
const CENSORED_TABLE_LEN: usize = 80;

const CUSTOM_SUM_TOLERANCE: f64 = 1e-9;

/// A probability mass function on `{1, 2, ...}` with an exact tail.
pub trait Pmf {
    fn mass(&self, j: u64) -> f64;
    /// `Σ_{i ≥ m} mass(i)`; equals 1 for `m ≤ 1`.
    fn tail(&self, m: u64) -> f64;
    /// `sup_{j > m} mass(j)`.
    fn sup_mass_beyond(&self, m: u64) -> f64;
}

/// Parsed form of `delta:k`, `geometric:p`, `zeta:s` or `custom:<path>`.
#[derive(Clone, Debug, PartialEq)]
pub enum LawDescriptor {
    Delta(u64),
    Geometric(f64),
    Zeta(f64),
    /// `(k, probability)` pairs, ascending in `k`.
    Custom(Vec<(u64, f64)>),
}

impl LawDescriptor {
    /// Parses a descriptor string; `custom:<path>` reads the table from disk.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::BadDescriptor(text.to_string());
        let (family, arg) = text.trim().split_once(':').ok_or_else(bad)?;
        match family {
            "delta" => arg.parse().map(LawDescriptor::Delta).map_err(|_| bad()),
            "geometric" => arg.parse().map(LawDescriptor::Geometric).map_err(|_| bad()),
            "zeta" => arg.parse().map(LawDescriptor::Zeta).map_err(|_| bad()),
            "custom" => {
                let contents = std::fs::read_to_string(Path::new(arg))?;
                Self::parse_table(&contents)
            }
            _ => Err(bad()),
        }
    }

    /// Parses a plain-text table of `k probability` lines.
    pub fn parse_table(contents: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in contents.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let row = match (fields.next(), fields.next(), fields.next()) {
                (Some(k), Some(p), None) => k.parse::<u64>().ok().zip(p.parse::<f64>().ok()),
                _ => None,
            };
            let row = row.ok_or_else(|| {
                Error::InvalidLaw(format!("line {}: expected `k probability`", lineno + 1))
            })?;
            rows.push(row);
        }
        Ok(LawDescriptor::Custom(rows))
    }
}

impl fmt::Display for LawDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LawDescriptor::Delta(k) => write!(f, "delta:{k}"),
            LawDescriptor::Geometric(p) => write!(f, "geometric:{p}"),
            LawDescriptor::Zeta(s) => write!(f, "zeta:{s}"),
            LawDescriptor::Custom(rows) => {
                write!(f, "custom[")?;
                for (i, (k, p)) in rows.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{k}:{p}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Whether a periodic support is accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aperiodicity {
    Require,
    Allow,
}

#[derive(Clone, Debug)]
enum Family {
    Delta(u64),
    Geometric {
        p: f64,
        log_q: f64,
    },
    Zeta {
        s: f64,
        zeta_s: f64,
    },
    /// `pmf[k - 1]`, `tails[m - 1] = ḡ_m`, `delay_tails[j - 1] = Σ_{m ≥ j} ḡ_m`.
    Custom {
        pmf: Vec<f64>,
        tails: Vec<f64>,
        delay_tails: Vec<f64>,
    },
}

/// The target compounding law `G = {g_k}`.
#[derive(Clone, Debug)]
pub struct ClusterLaw {
    descriptor: LawDescriptor,
    family: Family,
    mean: Option<f64>,
    /// `ḡ_1, ḡ_2, ...` for the table-driven part of inverse-transform sampling.
    sampling_tails: Vec<f64>,
    /// Same, for the stationary delay law (finite mean only).
    delay_table: Vec<f64>,
}

/// Builds and validates a [`ClusterLaw`], requiring an aperiodic support.
pub fn make_cluster_law(descriptor: &LawDescriptor) -> Result<ClusterLaw> {
    ClusterLaw::new(descriptor, Aperiodicity::Require)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl ClusterLaw {
    pub fn new(descriptor: &LawDescriptor, aperiodicity: Aperiodicity) -> Result<Self> {
        let (family, mean, period) = match descriptor {
            LawDescriptor::Delta(k) => {
                if *k == 0 {
                    return Err(Error::InvalidLaw("delta needs k ≥ 1".into()));
                }
                (Family::Delta(*k), Some(*k as f64), *k)
            }
            LawDescriptor::Geometric(p) => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::InvalidLaw(format!(
                        "geometric needs 0 < p ≤ 1, got {p}"
                    )));
                }
                let family = Family::Geometric {
                    p: *p,
                    log_q: (-p).ln_1p(),
                };
                (family, Some(1.0 / p), 1)
            }
            LawDescriptor::Zeta(s) => {
                if !(*s > 1.0 && s.is_finite()) {
                    return Err(Error::InvalidLaw(format!("zeta needs s > 1, got {s}")));
                }
                let zeta_s = riemann_zeta(*s);
                let mean = (*s > 2.0).then(|| riemann_zeta(s - 1.0) / zeta_s);
                (Family::Zeta { s: *s, zeta_s }, mean, 1)
            }
            LawDescriptor::Custom(rows) => Self::custom_family(rows)?,
        };
        if aperiodicity == Aperiodicity::Require && period != 1 {
            return Err(Error::Periodic(period));
        }

        let mut law = ClusterLaw {
            descriptor: descriptor.clone(),
            family,
            mean,
            sampling_tails: Vec::new(),
            delay_table: Vec::new(),
        };
        let table_len = match law.support_max() {
            Some(k) => (k as usize + 1).min(SAMPLING_TABLE_LEN),
            None => SAMPLING_TABLE_LEN,
        };
        law.sampling_tails = (1..=table_len as u64).map(|m| law.tail(m)).collect();
        if law.mean.is_some() {
            law.delay_table = (1..=table_len as u64)
                .map(|j| law.delay_tail_unchecked(j))
                .collect();
        }
        Ok(law)
    }

    fn custom_family(rows: &[(u64, f64)]) -> Result<(Family, Option<f64>, u64)> {
        let mut prev = 0;
        for &(k, p) in rows {
            if k <= prev {
                return Err(Error::InvalidLaw(format!(
                    "custom table must list k ≥ 1 in strictly ascending order (saw {k} after {prev})"
                )));
            }
            if p < 0.0 || !p.is_finite() {
                return Err(Error::InvalidLaw(format!(
                    "negative or non-finite mass {p} at k = {k}"
                )));
            }
            prev = k;
        }
        let total: f64 = rows.iter().map(|r| r.1).sum();
        let support: Vec<u64> = rows.iter().filter(|r| r.1 > 0.0).map(|r| r.0).collect();
        if support.is_empty() {
            return Err(Error::InvalidLaw("empty support".into()));
        }
        if (total - 1.0).abs() > CUSTOM_SUM_TOLERANCE {
            return Err(Error::InvalidLaw(format!("masses sum to {total}, not 1")));
        }
        let max_k = *support.last().unwrap() as usize;
        let mut pmf = vec![0.0; max_k];
        for &(k, p) in rows.iter().filter(|r| r.1 > 0.0) {
            pmf[k as usize - 1] = p / total;
        }
        let mut tails = vec![0.0; max_k + 1];
        for m in (0..max_k).rev() {
            tails[m] = tails[m + 1] + pmf[m];
        }
        let mut delay_tails = vec![0.0; max_k + 1];
        for j in (0..max_k).rev() {
            delay_tails[j] = delay_tails[j + 1] + tails[j];
        }
        // a sum of tails is the mean
        let mean = delay_tails[0];
        // tails[0] is 1 up to rounding; pin it
        tails[0] = 1.0;
        let period = support.iter().fold(0, |g, &k| gcd(g, k));
        Ok((
            Family::Custom {
                pmf,
                tails,
                delay_tails,
            },
            Some(mean),
            period,
        ))
    }

    pub fn descriptor(&self) -> &LawDescriptor {
        &self.descriptor
    }

    /// `μ = 𝔼ζ`, or `None` when it is infinite.
    pub fn mean(&self) -> Option<f64> {
        self.mean
    }

    pub fn has_finite_mean(&self) -> bool {
        self.mean.is_some()
    }

    /// Largest support point for finitely supported laws.
    pub fn support_max(&self) -> Option<u64> {
        match &self.family {
            Family::Delta(k) => Some(*k),
            Family::Custom { pmf, .. } => Some(pmf.len() as u64),
            Family::Geometric { p, .. } if *p >= 1.0 => Some(1),
            _ => None,
        }
    }

    /// gcd of the support.
    pub fn period(&self) -> u64 {
        match &self.family {
            Family::Delta(k) => *k,
            Family::Custom { pmf, .. } => pmf
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .fold(0, |g, (i, _)| gcd(g, i as u64 + 1)),
            _ => 1,
        }
    }

    /// `𝔼(ζ ∧ m) = Σ_{k=1}^{m} ḡ_k`.
    pub fn truncated_mean(&self, m: u64) -> f64 {
        match &self.family {
            Family::Geometric { p, log_q } => {
                if *p >= 1.0 {
                    (m.min(1)) as f64
                } else {
                    -(m as f64 * log_q).exp_m1() / p
                }
            }
            Family::Delta(k) => m.min(*k) as f64,
            _ => (1..=m).map(|k| self.tail(k)).sum(),
        }
    }

    /// `P(τ₁ ≥ j)` for the stationary delay of the finite-mean construction,
    /// `(1/μ) Σ_{m ≥ j} ḡ_m`.
    pub fn delay_tail(&self, j: u64) -> Result<f64> {
        if self.mean.is_none() {
            return Err(Error::InfiniteMean);
        }
        Ok(self.delay_tail_unchecked(j))
    }

    fn delay_tail_unchecked(&self, j: u64) -> f64 {
        if j <= 1 {
            return 1.0;
        }
        let mean = self.mean.expect("finite mean");
        match &self.family {
            Family::Delta(k) => (k + 1).saturating_sub(j) as f64 / mean,
            Family::Geometric { .. } => self.tail(j),
            Family::Zeta { s, zeta_s } => {
                let jf = j as f64;
                let upper = hurwitz_zeta(s - 1.0, jf) - (jf - 1.0) * hurwitz_zeta(*s, jf);
                (upper / (mean * zeta_s)).clamp(0.0, 1.0)
            }
            Family::Custom { delay_tails, .. } => {
                delay_tails.get(j as usize - 1).copied().unwrap_or(0.0) / mean
            }
        }
    }

    /// Draws `ζ ~ G`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let t = uniform_open_closed(rng);
        invert_tail(&self.sampling_tails, |m| self.tail(m), t)
    }

    /// Draws `ζ ∧ cap` with a single uniform; same law as `sample(rng).min(cap)`.
    pub fn sample_capped<R: Rng + ?Sized>(&self, rng: &mut R, cap: u64) -> u64 {
        let t = uniform_open_closed(rng);
        let capped_tail = match self.sampling_tails.get(cap as usize - 1) {
            Some(&v) => v,
            None => self.tail(cap),
        };
        if capped_tail >= t {
            cap
        } else {
            invert_tail(&self.sampling_tails, |m| self.tail(m), t)
        }
    }

    /// Draws `τ₁` from the stationary delay law `P(τ₁ = j) = ḡ_j / μ`.
    pub fn sample_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        if self.mean.is_none() {
            return Err(Error::InfiniteMean);
        }
        let t = uniform_open_closed(rng);
        Ok(invert_tail(
            &self.delay_table,
            |j| self.delay_tail_unchecked(j),
            t,
        ))
    }
}

impl Pmf for ClusterLaw {
    fn mass(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match &self.family {
            Family::Delta(d) => f64::from(u8::from(k == *d)),
            Family::Geometric { p, log_q } => {
                if k == 1 {
                    *p
                } else {
                    p * ((k - 1) as f64 * log_q).exp()
                }
            }
            Family::Zeta { s, zeta_s } => (k as f64).powf(-s) / zeta_s,
            Family::Custom { pmf, .. } => pmf.get(k as usize - 1).copied().unwrap_or(0.0),
        }
    }

    fn tail(&self, m: u64) -> f64 {
        if m <= 1 {
            return 1.0;
        }
        match &self.family {
            Family::Delta(d) => f64::from(u8::from(m <= *d)),
            Family::Geometric { log_q, .. } => ((m - 1) as f64 * log_q).exp(),
            Family::Zeta { s, zeta_s } => hurwitz_zeta(*s, m as f64) / zeta_s,
            Family::Custom { tails, .. } => tails.get(m as usize - 1).copied().unwrap_or(0.0),
        }
    }

    fn sup_mass_beyond(&self, m: u64) -> f64 {
        match &self.family {
            Family::Delta(d) => f64::from(u8::from(*d > m)),
            Family::Geometric { .. } | Family::Zeta { .. } => self.mass(m + 1),
            Family::Custom { pmf, .. } => pmf.iter().skip(m as usize).copied().fold(0.0, f64::max),
        }
    }
}

/// Uniform on `(0, 1]`.
fn uniform_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Largest `m ≥ 1` with `tail(m) ≥ t`, for a nonincreasing `tail` with
/// `tail(1) = 1` and `t ∈ (0, 1]`. `table[m - 1]` caches `tail(m)`.
fn invert_tail<F: Fn(u64) -> f64>(table: &[f64], tail: F, t: f64) -> u64 {
    let idx = table.partition_point(|&v| v >= t);
    if idx < table.len() {
        return idx.max(1) as u64;
    }
    // exponential then binary search on the analytic tail
    let mut lo = table.len().max(1) as u64;
    let mut hi = lo.saturating_mul(2);
    while tail(hi) >= t {
        if hi >= SAMPLE_CAP {
            return SAMPLE_CAP;
        }
        lo = hi;
        hi = hi.saturating_mul(2).min(SAMPLE_CAP);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if tail(mid) >= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Draws `Y ~ Exp(1)`.
pub fn sample_height<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Exp1)
}

/// Draws `ζ ~ G`.
pub fn sample_zeta<R: Rng + ?Sized>(law: &ClusterLaw, rng: &mut R) -> u64 {
    law.sample(rng)
}

/// Draws the finite-mean delay `τ₁` with `P(τ₁ = j) = ḡ_j / μ`.
pub fn sample_delay_finite<R: Rng + ?Sized>(law: &ClusterLaw, rng: &mut R) -> Result<u64> {
    law.sample_delay(rng)
}

/// Law of the censored cycle length `τ = ζ ∧ ⌈Y⌉` together with the
/// conditional structure of `Y` given `τ`.
#[derive(Clone, Debug)]
pub struct CensoredCycleLaw {
    base: ClusterLaw,
    /// `p[j - 1] = p_j`.
    p: Vec<f64>,
    nu: f64,
    /// `size_biased_tails[m - 1] = Σ_{k ≥ m} k p_k / ν`.
    size_biased_tails: Vec<f64>,
}

/// The defect/excess/height triple used to start the censored path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialVector {
    pub gamma: u64,
    pub chi: u64,
    pub v: f64,
}

const E_INV: f64 = 1.0 / std::f64::consts::E;

/// `p_j = ḡ_j (e^{-(j-1)} − e^{-j}) + g_j e^{-j}`.
fn censored_mass(base: &ClusterLaw, j: u64) -> f64 {
    if j == 0 {
        return 0.0;
    }
    let jm1 = (j - 1) as f64;
    (-jm1).exp() * (base.tail(j) * (1.0 - E_INV) + base.mass(j) * E_INV)
}

/// Derives the censored cycle law from `G`.
pub fn censored_law(base: &ClusterLaw) -> CensoredCycleLaw {
    CensoredCycleLaw::new(base.clone())
}

impl CensoredCycleLaw {
    pub fn new(base: ClusterLaw) -> Self {
        let p: Vec<f64> = (1..=CENSORED_TABLE_LEN as u64)
            .map(|j| censored_mass(&base, j))
            .collect();
        let nu: f64 = p
            .iter()
            .enumerate()
            .map(|(i, pj)| (i + 1) as f64 * pj)
            .sum();
        let mut size_biased_tails = vec![0.0; p.len()];
        let mut acc = 0.0;
        for i in (0..p.len()).rev() {
            acc += (i + 1) as f64 * p[i] / nu;
            size_biased_tails[i] = acc;
        }
        size_biased_tails[0] = 1.0;
        CensoredCycleLaw {
            base,
            p,
            nu,
            size_biased_tails,
        }
    }

    pub fn base(&self) -> &ClusterLaw {
        &self.base
    }

    /// Mean cycle length `ν = 𝔼τ₂`.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `p_j = P(τ₂ = j)`.
    pub fn p(&self, j: u64) -> f64 {
        if j == 0 {
            return 0.0;
        }
        match self.p.get(j as usize - 1) {
            Some(&v) => v,
            None => censored_mass(&self.base, j),
        }
    }

    /// The tabulated prefix `p_1, p_2, ...`; the remainder has mass below `e^{-79}`.
    pub fn p_table(&self) -> &[f64] {
        &self.p
    }

    /// `P(τ₂ ≥ j) = ḡ_j e^{-(j-1)}`.
    pub fn cycle_tail(&self, j: u64) -> f64 {
        if j <= 1 {
            return 1.0;
        }
        self.base.tail(j) * (-((j - 1) as f64)).exp()
    }

    /// `P(τ₁ = j) = (1/ν) Σ_{m ≥ j} p_m`, the law of the excess `χ`.
    pub fn delay_mass(&self, j: u64) -> f64 {
        if j == 0 {
            return 0.0;
        }
        self.cycle_tail(j) / self.nu
    }

    /// Probability that `Y` falls in the truncated branch `(j − 1, j]`
    /// given `τ = j`.
    pub fn truncated_branch_weight(&self, j: u64) -> f64 {
        let a = self.base.tail(j) * (1.0 - E_INV);
        let b = self.base.mass(j) * E_INV;
        a / (a + b)
    }

    /// Density of `Y₂` given `τ₂ = j`, i.e. `g_j(v) e^{-v} / p_j`.
    pub fn height_density_given_tau(&self, j: u64, v: f64) -> f64 {
        let pj = self.p(j);
        if pj == 0.0 || v <= (j - 1) as f64 {
            return 0.0;
        }
        let level = if v <= j as f64 {
            self.base.tail(j)
        } else {
            self.base.mass(j)
        };
        level * (-v).exp() / pj
    }

    /// Draws `(ζ ∧ ⌈Y⌉, Y)` with `ζ ~ G`, `Y ~ Exp(1)` independent.
    pub fn sample_cycle_joint<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, f64) {
        let y = sample_height(rng);
        let cap = (y.ceil() as u64).max(1);
        (self.base.sample_capped(rng, cap), y)
    }

    /// Draws `Y₂` given `τ₂ = j`: a two-component mixture of `Exp(1)`
    /// truncated to `(j − 1, j]` and `j + Exp(1)`.
    pub fn sample_y_given_tau<R: Rng + ?Sized>(&self, j: u64, rng: &mut R) -> Result<f64> {
        if j == 0 || self.base.tail(j) == 0.0 {
            return Err(Error::UnreachableCycleLength(j));
        }
        let start = (j - 1) as f64;
        if rng.random::<f64>() < self.truncated_branch_weight(j) {
            let w = uniform_open_closed(rng);
            Ok(start - (-w * (1.0 - E_INV)).ln_1p())
        } else {
            Ok(j as f64 + sample_height(rng))
        }
    }

    /// Draws `(γ, χ, V)`: total `γ + χ = m` size-biased by `m p_m / ν`,
    /// split uniformly, then `V | m` as `Y₂ | τ₂ = m`.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> InitialVector {
        let t = uniform_open_closed(rng);
        let m = invert_tail(&self.size_biased_tails, |_| 0.0, t);
        let gamma = rng.random_range(0..m);
        let v = self
            .sample_y_given_tau(m, rng)
            .expect("size-biased draw only hits reachable cycle lengths");
        InitialVector {
            gamma,
            chi: m - gamma,
            v,
        }
    }
}

/// Draws the censored construction's initial vector.
pub fn sample_initial_censored<R: Rng + ?Sized>(
    law: &CensoredCycleLaw,
    rng: &mut R,
) -> InitialVector {
    law.sample_initial(rng)
}

impl Pmf for CensoredCycleLaw {
    fn mass(&self, j: u64) -> f64 {
        self.p(j)
    }

    fn tail(&self, m: u64) -> f64 {
        self.cycle_tail(m)
    }

    fn sup_mass_beyond(&self, m: u64) -> f64 {
        // p_j is nonincreasing in j
        self.p(m + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn law(d: LawDescriptor) -> ClusterLaw {
        make_cluster_law(&d).unwrap()
    }

    fn custom15() -> ClusterLaw {
        law(LawDescriptor::Custom(vec![(1, 0.5), (5, 0.5)]))
    }

    #[test]
    fn descriptor_grammar() {
        assert_eq!(
            LawDescriptor::parse("delta:3").unwrap(),
            LawDescriptor::Delta(3)
        );
        assert_eq!(
            LawDescriptor::parse("geometric:0.5").unwrap(),
            LawDescriptor::Geometric(0.5)
        );
        assert_eq!(
            LawDescriptor::parse("zeta:1.5").unwrap(),
            LawDescriptor::Zeta(1.5)
        );
        assert!(LawDescriptor::parse("poisson:2").is_err());
        assert!(LawDescriptor::parse("zeta").is_err());
        let t = LawDescriptor::parse_table("# g\n1 0.5\n\n5 0.5\n").unwrap();
        assert_eq!(t, LawDescriptor::Custom(vec![(1, 0.5), (5, 0.5)]));
        assert!(LawDescriptor::parse_table("1 0.5 7\n").is_err());
    }

    #[test]
    fn custom_file_descriptor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        std::fs::write(&path, "1 0.25\n2 0.75\n").unwrap();
        let d = LawDescriptor::parse(&format!("custom:{}", path.display())).unwrap();
        let g = law(d);
        assert!((g.mean().unwrap() - 1.75).abs() < 1e-15);
    }

    #[test]
    fn validation_errors() {
        let bad =
            |rows: Vec<(u64, f64)>| make_cluster_law(&LawDescriptor::Custom(rows)).unwrap_err();
        assert!(matches!(
            bad(vec![(1, -0.1), (2, 1.1)]),
            Error::InvalidLaw(_)
        ));
        assert!(matches!(
            bad(vec![(1, 0.5), (2, 0.4)]),
            Error::InvalidLaw(_)
        ));
        assert!(matches!(bad(vec![(2, 0.5), (4, 0.5)]), Error::Periodic(2)));
        assert!(matches!(bad(vec![]), Error::InvalidLaw(_)));
        assert!(matches!(bad(vec![(1, 0.0)]), Error::InvalidLaw(_)));
        assert!(matches!(
            bad(vec![(2, 0.5), (1, 0.5)]),
            Error::InvalidLaw(_)
        ));
        assert!(matches!(
            make_cluster_law(&LawDescriptor::Delta(3)),
            Err(Error::Periodic(3))
        ));
        assert!(make_cluster_law(&LawDescriptor::Zeta(1.0)).is_err());
        assert!(make_cluster_law(&LawDescriptor::Geometric(0.0)).is_err());
        assert!(ClusterLaw::new(&LawDescriptor::Delta(3), Aperiodicity::Allow).is_ok());
        // within 1e-9 is accepted and renormalized
        let g = law(LawDescriptor::Custom(vec![(1, 0.5 + 4e-10), (2, 0.5)]));
        assert!((g.mass(1) + g.mass(2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn builtin_means() {
        assert_eq!(law(LawDescriptor::Delta(1)).mean(), Some(1.0));
        assert_eq!(law(LawDescriptor::Geometric(0.5)).mean(), Some(2.0));
        assert_eq!(law(LawDescriptor::Zeta(1.5)).mean(), None);
        // partial sums of k 2^{-k}
        let partial: f64 = (1..200).map(|k| k as f64 * 0.5f64.powi(k)).sum();
        assert!((partial - 2.0).abs() < 1e-12);
        // partial sums of k g_k for zeta(1.5) grow without bound (like √K)
        let z = law(LawDescriptor::Zeta(1.5));
        let s = |n: u64| (1..=n).map(|k| k as f64 * z.mass(k)).sum::<f64>();
        assert!(s(40_000) > 1.9 * s(10_000));
        // finite zeta mean
        let z3 = law(LawDescriptor::Zeta(3.0));
        let direct: f64 = (1..200_000u64).map(|k| k as f64 * z3.mass(k)).sum();
        assert!((z3.mean().unwrap() - direct).abs() < 1e-5);
    }

    #[test]
    fn tails_match_examples() {
        let d1 = law(LawDescriptor::Delta(1));
        assert_eq!(d1.tail(1), 1.0);
        assert_eq!(d1.tail(2), 0.0);
        let g = law(LawDescriptor::Geometric(0.5));
        assert!((g.tail(3) - 0.25).abs() < 1e-16);
        let z = law(LawDescriptor::Zeta(1.5));
        assert!((z.tail(2) - (1.0 - 1.0 / 2.612_375_348_685_488)).abs() < 1e-13);
    }

    #[test]
    fn tables_plus_tail_sum_to_one() {
        for g in [
            law(LawDescriptor::Geometric(0.3)),
            law(LawDescriptor::Zeta(1.5)),
            law(LawDescriptor::Zeta(2.5)),
            custom15(),
        ] {
            for m in [1u64, 2, 5, 17, 300, 5000] {
                let head: f64 = (1..m).map(|k| g.mass(k)).sum();
                assert!(
                    (head + g.tail(m) - 1.0).abs() < 1e-12,
                    "{:?} m={m}",
                    g.descriptor()
                );
                assert!((g.tail(m) - g.tail(m + 1) - g.mass(m)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zeta_delay_tail_matches_summation() {
        let z = law(LawDescriptor::Zeta(3.5));
        let mu = z.mean().unwrap();
        for j in [1u64, 2, 3, 8, 40] {
            let direct: f64 = (j..200_000).map(|m| z.tail(m)).sum::<f64>() / mu;
            assert!((z.delay_tail(j).unwrap() - direct).abs() < 1e-7, "j={j}");
        }
    }

    #[test]
    fn delta_sampler_is_constant() {
        let g = ClusterLaw::new(&LawDescriptor::Delta(3), Aperiodicity::Allow).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_zeta(&g, &mut rng) == 3));
        let d1 = law(LawDescriptor::Delta(1));
        assert!((0..1000).all(|_| sample_delay_finite(&d1, &mut rng).unwrap() == 1));
    }

    #[test]
    fn geometric_sampler_tv() {
        let g = law(LawDescriptor::Geometric(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut counts = vec![0u64; 64];
        for _ in 0..n {
            counts[(g.sample(&mut rng) as usize).min(63)] += 1;
        }
        let tv: f64 = 0.5
            * (1..64)
                .map(|k| (counts[k] as f64 / n as f64 - g.mass(k as u64)).abs())
                .sum::<f64>();
        assert!(tv < 0.005, "tv = {tv}");
    }

    #[test]
    fn zeta_sampler_reaches_deep_tail() {
        let g = law(LawDescriptor::Zeta(1.5));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000u64;
        let hits = (0..n).filter(|_| g.sample(&mut rng) > 100).count() as f64;
        let target = g.tail(101);
        let se = (target * (1.0 - target) / n as f64).sqrt();
        assert!((hits / n as f64 - target).abs() < 3.0 * se);
        // values far beyond the table are reachable
        let big = (0..n).map(|_| g.sample(&mut rng)).max().unwrap();
        assert!(big > 1_000_000, "max sample {big}");
    }

    #[test]
    fn invert_tail_edges() {
        let g = law(LawDescriptor::Zeta(1.5));
        let table: Vec<f64> = (1..=4).map(|m| g.tail(m)).collect();
        assert_eq!(invert_tail(&table, |m| g.tail(m), 1.0), 1);
        let t = g.tail(777);
        assert_eq!(invert_tail(&table, |m| g.tail(m), t), 777);
        assert_eq!(
            invert_tail(&table, |m| g.tail(m), f64::MIN_POSITIVE),
            SAMPLE_CAP
        );
    }

    #[test]
    fn delay_finite_geometric_and_infinite_error() {
        let g = law(LawDescriptor::Geometric(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 400_000;
        let mut counts = vec![0u64; 40];
        for _ in 0..n {
            counts[(g.sample_delay(&mut rng).unwrap() as usize).min(39)] += 1;
        }
        for (j, &c) in counts.iter().enumerate().take(6).skip(1) {
            // (1/μ) Σ_{m ≥ j} g_m by direct summation
            let oracle: f64 = 0.5 * (j..200).map(|m| 0.5f64.powi(m as i32)).sum::<f64>();
            let emp = c as f64 / n as f64;
            assert!((emp - oracle).abs() < 0.004, "j={j}: {emp} vs {oracle}");
        }
        let z = law(LawDescriptor::Zeta(1.5));
        assert!(matches!(
            sample_delay_finite(&z, &mut rng),
            Err(Error::InfiniteMean)
        ));
    }

    #[test]
    fn censored_delta_one_collapses() {
        let c = censored_law(&law(LawDescriptor::Delta(1)));
        assert!((c.p(1) - 1.0).abs() < 1e-15);
        assert!((c.nu() - 1.0).abs() < 1e-15);
        assert!((c.truncated_branch_weight(1) - (1.0 - E_INV)).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let (tau, y) = c.sample_cycle_joint(&mut rng);
            assert_eq!(tau, 1);
            assert!(y >= 0.0);
            let iv = c.sample_initial(&mut rng);
            assert_eq!((iv.gamma, iv.chi), (0, 1));
        }
    }

    #[test]
    fn censored_p1_example() {
        let c = censored_law(&custom15());
        let expected = (1.0 - E_INV) + 0.5 * E_INV;
        assert!((c.p(1) - expected).abs() < 1e-15);
        assert!((c.p(1) - 0.816_06).abs() < 1e-5);
    }

    #[test]
    fn censored_sums_and_bound() {
        for g in [
            law(LawDescriptor::Delta(1)),
            ClusterLaw::new(&LawDescriptor::Delta(3), Aperiodicity::Allow).unwrap(),
            law(LawDescriptor::Geometric(0.5)),
            custom15(),
            law(LawDescriptor::Zeta(1.5)),
            law(LawDescriptor::Zeta(1.01)),
        ] {
            let c = censored_law(&g);
            let total: f64 = c.p_table().iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            assert!(c.nu() <= MEAN_CYCLE_BOUND);
            // ν = Σ_j P(τ ≥ j)
            let nu_tails: f64 = (1..80).map(|j| c.cycle_tail(j)).sum();
            assert!((nu_tails - c.nu()).abs() < 1e-12);
            let sb: f64 = (1..80).map(|m| m as f64 * c.p(m) / c.nu()).sum();
            assert!((sb - 1.0).abs() < 1e-12);
            let delay: f64 = (1..80).map(|j| c.delay_mass(j)).sum();
            assert!((delay - 1.0).abs() < 1e-12);
        }
        // heavier tails push ν toward the bound
        let light = censored_law(&law(LawDescriptor::Zeta(3.0))).nu();
        let heavy = censored_law(&law(LawDescriptor::Zeta(1.01))).nu();
        assert!(light < heavy && heavy < MEAN_CYCLE_BOUND);
    }

    #[test]
    fn marginalising_heights_recovers_exponential() {
        for g in [
            law(LawDescriptor::Geometric(0.5)),
            law(LawDescriptor::Zeta(1.5)),
            custom15(),
        ] {
            let c = censored_law(&g);
            for i in 1..=300 {
                let v = i as f64 * 0.1;
                let mix: f64 = (1..=40)
                    .map(|j| c.p(j) * c.height_density_given_tau(j, v))
                    .sum();
                assert!((mix - (-v).exp()).abs() < 1e-10, "v = {v}");
            }
        }
    }

    #[test]
    fn height_given_tau_support_and_errors() {
        let c = censored_law(&law(LawDescriptor::Geometric(0.5)));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for j in 1..8 {
            for _ in 0..500 {
                assert!(c.sample_y_given_tau(j, &mut rng).unwrap() > (j - 1) as f64);
            }
        }
        let c3 = censored_law(&custom15());
        assert!(c3.sample_y_given_tau(6, &mut rng).is_err());
        assert!(c3.sample_y_given_tau(5, &mut rng).is_ok());
    }

    #[test]
    fn cycle_joint_respects_ceiling() {
        let c = censored_law(&law(LawDescriptor::Zeta(1.5)));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100_000 {
            let (tau, y) = c.sample_cycle_joint(&mut rng);
            assert!(tau as f64 <= y.ceil().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn capped_sampler_has_capped_law(seed in 0u64..1000, cap in 1u64..12) {
            // the single-uniform capped draw equals min(ζ, cap) for the same uniform
            let g = law(LawDescriptor::Zeta(1.5));
            let mut a = ChaCha8Rng::seed_from_u64(seed);
            let mut b = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                prop_assert_eq!(g.sample_capped(&mut a, cap), g.sample(&mut b).min(cap));
            }
        }

        #[test]
        fn tails_nonincreasing(s in 1.05f64..4.0, m in 1u64..10_000) {
            let g = law(LawDescriptor::Zeta(s));
            prop_assert!(g.tail(m + 1) <= g.tail(m));
            prop_assert!(g.tail(m) >= 0.0);
        }
    }
}
