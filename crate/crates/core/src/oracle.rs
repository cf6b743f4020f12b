//! Monte-Carlo-free checks of the closed forms: quadrature of the censored
//! integrands, exact lattice convolution for renewal masses, the
//! stationarity identity of the censored start, the marginal law of `X_k`,
//! and the exact conditional cluster law at a finite level.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::laws::{CensoredCycleLaw, ClusterLaw, Pmf, MEAN_CYCLE_BOUND};
use crate::numeric::integrate;
use crate::stats::{sup_distance, tv_distance_pmfs};

/// Integrands are cut off here; `e^{-v}` beyond is below 1e-26.
const QUAD_HORIZON: u64 = 60;
const QUAD_TOL: f64 = 1e-15;

/// `g_j(v) = P(ζ ∧ ⌈v⌉ = j)`, evaluated from the definition.
pub fn censored_weight(law: &ClusterLaw, j: u64, v: f64) -> f64 {
    let ceil = v.ceil() as u64;
    if j < ceil {
        law.mass(j)
    } else if j == ceil {
        law.tail(j)
    } else {
        0.0
    }
}

/// `∫₀^∞ g_j(v) e^{-v} dv` by adaptive quadrature, split at the integers
/// where `g_j(·)` jumps.
pub fn quad_p_j(law: &ClusterLaw, j: u64) -> f64 {
    (1..=j + QUAD_HORIZON)
        .map(|m| {
            integrate(
                |v| censored_weight(law, j, v) * (-v).exp(),
                (m - 1) as f64,
                m as f64,
                QUAD_TOL,
            )
        })
        .sum()
}

/// `ν = ∫₀^∞ 𝔼(ζ ∧ ⌈v⌉) e^{-v} dv` by quadrature.
pub fn quad_nu(law: &ClusterLaw) -> f64 {
    (1..=QUAD_HORIZON + 20)
        .map(|m| {
            let h = law.truncated_mean(m);
            integrate(|v| h * (-v).exp(), (m - 1) as f64, m as f64, QUAD_TOL)
        })
        .sum()
}

/// Mass table over `{0, 1, ..., K}` (index = value) with a bound on the
/// mass lying above `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticePmf {
    pub mass: Vec<f64>,
    pub tail_bound: f64,
}

impl LatticePmf {
    /// Tabulates `f(1..=k_max)`; `tail_bound` must bound `Σ_{v > k_max} f(v)`.
    pub fn from_fn<F: Fn(u64) -> f64>(k_max: usize, f: F, tail_bound: f64) -> Self {
        let mut mass = vec![0.0; k_max + 1];
        for (v, m) in mass.iter_mut().enumerate().skip(1) {
            *m = f(v as u64);
        }
        LatticePmf { mass, tail_bound }
    }

    pub fn k_max(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Law of the sum of independent variables, tabulated to the smaller
    /// of the two ranges. Entries are exact; mass pushed above the range
    /// is added to the carried tail bound.
    pub fn convolve(&self, other: &LatticePmf) -> LatticePmf {
        let k = self.k_max().min(other.k_max());
        let mut mass = vec![0.0; k + 1];
        for (a, &pa) in self.mass.iter().enumerate().take(k + 1) {
            if pa == 0.0 {
                continue;
            }
            for (b, &pb) in other.mass.iter().enumerate().take(k + 1 - a) {
                mass[a + b] += pa * pb;
            }
        }
        let kept: f64 = mass.iter().sum();
        let represented = (self.total() + self.tail_bound) * (other.total() + other.tail_bound);
        LatticePmf {
            mass,
            tail_bound: (represented - kept).max(0.0),
        }
    }
}

/// Cycle-length law of the finite-mean construction (`G` itself).
pub fn finite_cycle_lattice(law: &ClusterLaw, k_max: usize) -> LatticePmf {
    LatticePmf::from_fn(k_max, |v| law.mass(v), law.tail(k_max as u64 + 1))
}

/// Stationary delay `ḡ_j / μ` of the finite-mean construction.
pub fn finite_delay_lattice(law: &ClusterLaw, k_max: usize) -> Result<LatticePmf> {
    let mu = law.mean().ok_or(Error::InfiniteMean)?;
    let tail = law.delay_tail(k_max as u64 + 1)?;
    Ok(LatticePmf::from_fn(k_max, |j| law.tail(j) / mu, tail))
}

/// Censored cycle law `{p_j}`.
pub fn censored_cycle_lattice(law: &CensoredCycleLaw, k_max: usize) -> LatticePmf {
    LatticePmf::from_fn(k_max, |j| law.p(j), law.cycle_tail(k_max as u64 + 1))
}

/// Censored delay (law of `χ`), `(1/ν) Σ_{m ≥ j} p_m`.
pub fn censored_delay_lattice(law: &CensoredCycleLaw, k_max: usize) -> LatticePmf {
    // Σ_{j > K} P(τ ≥ j) / ν ≤ e^{-K} / (ν (1 − e^{-1}))
    let tail = (-(k_max as f64)).exp() * MEAN_CYCLE_BOUND / law.nu();
    LatticePmf::from_fn(k_max, |j| law.delay_mass(j), tail)
}

/// Tolerance on the tail bound of lattices fed to [`renewal_mass`].
pub const CERTIFIED_TAIL: f64 = 1e-12;

/// `U(k) = Σ_{r ≥ 1} P(S_r = k)` for `k = 1..=k_max` (index `k − 1`), with
/// `S_1` drawn from `delay` (or from `cycle` when absent).
///
/// Since every increment is at least 1, `S_r ≥ r` and only `r ≤ k_max`
/// contributes, so the sum is finite and each entry depends only on the
/// tabulated masses; the tables must extend to `k_max`.
pub fn renewal_mass(
    cycle: &LatticePmf,
    delay: Option<&LatticePmf>,
    k_max: usize,
) -> Result<Vec<f64>> {
    for table in std::iter::once(cycle).chain(delay) {
        if table.k_max() < k_max && table.tail_bound > CERTIFIED_TAIL {
            return Err(Error::UncertifiedTail(table.tail_bound));
        }
        if table.mass[0] != 0.0 {
            return Err(Error::InvalidArgument("increments must be positive".into()));
        }
    }
    let mut u = vec![0.0; k_max + 1];
    let mut current = delay.unwrap_or(cycle).clone();
    for _ in 0..k_max {
        for (k, &m) in current.mass.iter().enumerate().take(k_max + 1) {
            u[k] += m;
        }
        current = current.convolve(cycle);
    }
    u.remove(0);
    Ok(u)
}

/// `∫_a^b e^{-v} dv`.
fn exp_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        0.0
    } else {
        (-a).exp() - (-b).exp()
    }
}

/// `P(Y₂ ∈ (a, b], τ₂ = m)` from the definition `τ₂ = ζ ∧ ⌈Y₂⌉`.
fn joint_bin(law: &ClusterLaw, m: u64, a: f64, b: f64) -> f64 {
    let lo = (m - 1) as f64;
    let hi = m as f64;
    law.tail(m) * exp_mass(a.max(lo), b.min(hi)) + law.mass(m) * exp_mass(a.max(hi), b)
}

/// Result of one `(l, j)` cell of the stationarity check.
#[derive(Clone, Debug)]
pub struct StationarityCheck {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub max_abs_error: f64,
}

/// `n` equal bins on `(0, upper]`.
pub fn equal_bins(n: usize, upper: f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            (
                upper * i as f64 / n as f64,
                upper * (i + 1) as f64 / n as f64,
            )
        })
        .collect()
}

/// Compares both sides of `P(Y_{η(l)} ∈ bin, S_{η(l)} − l = j) = P(Y₁ ∈ bin, τ₁ = j)`.
///
/// The left side is assembled from the renewal decomposition: the first
/// cycle straddling `l`, plus a later cycle starting at `l − i` weighted by
/// the delayed renewal mass computed by convolution. The right side is
/// `∫_bin (e^{-v}/ν) Σ_{i ≥ 0} g_{i+j}(v) dv` in closed form.
pub fn stationarity_identity(
    law: &CensoredCycleLaw,
    l: u64,
    j: u64,
    bins: &[(f64, f64)],
) -> Result<StationarityCheck> {
    let k_max = l.max(1) as usize;
    let renewal = renewal_mass(
        &censored_cycle_lattice(law, k_max),
        Some(&censored_delay_lattice(law, k_max)),
        k_max,
    )?;
    Ok(stationarity_with_renewal(law, l, j, bins, &renewal))
}

fn stationarity_with_renewal(
    law: &CensoredCycleLaw,
    l: u64,
    j: u64,
    bins: &[(f64, f64)],
    renewal: &[f64],
) -> StationarityCheck {
    const SERIES_LEN: u64 = 100;
    let g = law.base();
    let nu = law.nu();
    let mut lhs = Vec::with_capacity(bins.len());
    let mut rhs = Vec::with_capacity(bins.len());
    for &(a, b) in bins {
        // (χ, V) with χ = l + j: Σ_i P(γ = i, χ) · P(Y₂ ∈ bin | τ₂ = i + χ)
        let first: f64 = (0..SERIES_LEN)
            .map(|i| {
                let m = l + j + i;
                let pm = law.p(m);
                if pm == 0.0 {
                    0.0
                } else {
                    (pm / nu) * (joint_bin(g, m, a, b) / pm)
                }
            })
            .sum();
        let later: f64 = (0..l)
            .map(|i| renewal[(l - i) as usize - 1] * joint_bin(g, i + j, a, b))
            .sum();
        lhs.push(first + later);
        rhs.push(g.tail(j) / nu * exp_mass(a.max((j - 1) as f64), b));
    }
    let max_abs_error = lhs
        .iter()
        .zip(&rhs)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    StationarityCheck {
        lhs,
        rhs,
        max_abs_error,
    }
}

/// Largest integer point at which the marginal survival is tabulated.
const MARGINAL_TABLE_LEN: usize = 720;

/// Law of `X_k` in the censored construction: density
/// `𝔼(ζ ∧ ⌈v⌉) e^{-v} / ν` on `(0, ∞)`.
#[derive(Clone, Debug)]
pub struct MarginalLaw {
    nu: f64,
    /// `h[m] = 𝔼(ζ ∧ m)`
    h: Vec<f64>,
    /// `survival[m] = P(X > m)`
    survival: Vec<f64>,
}

impl MarginalLaw {
    pub fn new(law: &CensoredCycleLaw) -> Self {
        let g = law.base();
        let mut h = vec![0.0; MARGINAL_TABLE_LEN + 2];
        for m in 1..h.len() {
            h[m] = h[m - 1] + g.tail(m as u64);
        }
        let nu = law.nu();
        let mut survival = vec![0.0; MARGINAL_TABLE_LEN + 1];
        let top = MARGINAL_TABLE_LEN;
        survival[top] = h[top + 1] * (-(top as f64)).exp() / nu;
        for m in (0..top).rev() {
            survival[m] = survival[m + 1] + h[m + 1] * exp_mass(m as f64, (m + 1) as f64) / nu;
        }
        MarginalLaw { nu, h, survival }
    }

    fn h_at(&self, m: u64) -> f64 {
        // 𝔼(ζ ∧ m) grows at most linearly; the table end only matters below e^{-700}
        self.h[(m as usize).min(self.h.len() - 1)]
    }

    pub fn density(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        self.h_at(v.ceil() as u64) * (-v).exp() / self.nu
    }

    pub fn survival(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 1.0;
        }
        let m = v.ceil() as u64;
        if m as usize > MARGINAL_TABLE_LEN {
            return self.h_at(m) * (-v).exp() / self.nu;
        }
        self.survival[m as usize] + self.h_at(m) * exp_mass(v, m as f64) / self.nu
    }

    pub fn cdf(&self, v: f64) -> f64 {
        1.0 - self.survival(v)
    }
}

/// Density of `X_k` at `v` for the censored construction.
pub fn marginal_density_x(law: &CensoredCycleLaw, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    law.base().truncated_mean(v.ceil() as u64) * (-v).exp() / law.nu()
}

/// Exact law of the size `ξ_k` of a censored cycle given that its height
/// exceeds `u`: `P(ξ = j | ξ > 0) = e^{u} ∫_u^∞ g_j(v) e^{-v} dv`.
#[derive(Clone, Copy, Debug)]
pub struct ConditionalClusterLaw<'a> {
    law: &'a ClusterLaw,
    level: f64,
}

impl<'a> ConditionalClusterLaw<'a> {
    pub fn new(law: &'a ClusterLaw, level: f64) -> Self {
        ConditionalClusterLaw { law, level }
    }

    /// `ḡ_{⌊u⌋+1}`, which bounds `sup_j |P(ξ = j | ξ > 0) − g_j|` and the TV distance.
    pub fn bound(&self) -> f64 {
        self.law.tail(self.level.floor() as u64 + 1)
    }

    /// `𝔼(ξ | ξ > 0)`.
    pub fn mean(&self) -> f64 {
        let limit = self.level.ceil() as u64 + 80;
        (1..=limit).map(|m| self.tail(m)).sum()
    }
}

impl Pmf for ConditionalClusterLaw<'_> {
    fn mass(&self, j: u64) -> f64 {
        conditional_cluster_law(self.law, self.level, j)
    }

    fn tail(&self, m: u64) -> f64 {
        if m <= 1 {
            return 1.0;
        }
        // e^{u} ∫_{max(u, m−1)}^∞ ḡ_m e^{-v} dv
        self.law.tail(m) * (self.level - (m - 1) as f64).min(0.0).exp()
    }

    fn sup_mass_beyond(&self, m: u64) -> f64 {
        // masses are nonincreasing from ⌈u⌉ + 1 on
        let stop = m.max(self.level.ceil() as u64) + 1;
        (m + 1..=stop).map(|j| self.mass(j)).fold(0.0, f64::max)
    }
}

/// `e^{u} ∫_u^∞ g_j(v) e^{-v} dv` in closed form.
pub fn conditional_cluster_law(law: &ClusterLaw, u: f64, j: u64) -> f64 {
    if j == 0 {
        return 0.0;
    }
    let jf = j as f64;
    let lo = u.max(jf - 1.0);
    let truncated = if lo < jf {
        (u - lo).exp() - (u - jf).exp()
    } else {
        0.0
    };
    law.tail(j) * truncated + law.mass(j) * (u - u.max(jf)).exp()
}

/// One line of `oracle.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct OracleRow {
    pub check: String,
    pub param: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleRow {
    fn equal(check: &str, param: String, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let abs_error = (lhs - rhs).abs();
        OracleRow {
            check: check.into(),
            param,
            lhs,
            rhs,
            abs_error,
            tolerance,
            pass: abs_error < tolerance,
        }
    }

    /// Passes when `lhs ≤ rhs + tolerance`.
    fn at_most(check: &str, param: String, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        OracleRow {
            check: check.into(),
            param,
            lhs,
            rhs,
            abs_error: (lhs - rhs).max(0.0),
            tolerance,
            pass: lhs <= rhs + tolerance,
        }
    }
}

/// Grid sizes and levels for [`oracle_report`].
#[derive(Clone, Debug)]
pub struct OracleGrid {
    pub max_j_quadrature: u64,
    pub max_l: u64,
    pub max_j: u64,
    pub bins: usize,
    pub bin_upper: f64,
    pub renewal_k: usize,
    pub renewal_convergence_k: usize,
    pub conditional_level: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid {
            max_j_quadrature: 50,
            max_l: 20,
            max_j: 10,
            bins: 300,
            bin_upper: 30.0,
            renewal_k: 200,
            renewal_convergence_k: 300,
            conditional_level: 10.0,
        }
    }
}

/// Runs every exact check for one law.
pub fn oracle_report(law: &ClusterLaw, grid: &OracleGrid) -> Result<Vec<OracleRow>> {
    let censored = CensoredCycleLaw::new(law.clone());
    let mut rows = Vec::new();

    let worst_p = (1..=grid.max_j_quadrature)
        .map(|j| (j, (censored.p(j) - quad_p_j(law, j)).abs()))
        .fold((1, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    rows.push(OracleRow::equal(
        "p_closed_vs_quadrature",
        format!("j<={} worst_j={}", grid.max_j_quadrature, worst_p.0),
        censored.p(worst_p.0),
        quad_p_j(law, worst_p.0),
        1e-10,
    ));

    rows.push(OracleRow::equal(
        "p_sums_to_one",
        String::new(),
        censored.p_table().iter().sum(),
        1.0,
        1e-10,
    ));
    rows.push(OracleRow::at_most(
        "nu_below_bound",
        String::new(),
        censored.nu(),
        MEAN_CYCLE_BOUND,
        0.0,
    ));
    rows.push(OracleRow::equal(
        "nu_closed_vs_quadrature",
        String::new(),
        censored.nu(),
        quad_nu(law),
        1e-10,
    ));

    let mixture_worst = (1..=20u64)
        .filter(|&j| censored.p(j) > 0.0)
        .map(|j| {
            let total: f64 = (j..=j + QUAD_HORIZON)
                .map(|m| {
                    integrate(
                        |v| censored.height_density_given_tau(j, v),
                        (m - 1) as f64,
                        m as f64,
                        QUAD_TOL,
                    )
                })
                .sum();
            (total - 1.0).abs()
        })
        .fold(0.0, f64::max);
    rows.push(OracleRow::equal(
        "height_given_tau_normalized",
        "j<=20".into(),
        1.0 + mixture_worst,
        1.0,
        1e-10,
    ));

    let renewal = renewal_mass(
        &censored_cycle_lattice(&censored, grid.max_l as usize),
        Some(&censored_delay_lattice(&censored, grid.max_l as usize)),
        grid.max_l as usize,
    )?;
    let bins = equal_bins(grid.bins, grid.bin_upper);
    for l in 1..=grid.max_l {
        for j in 1..=grid.max_j {
            let check = stationarity_with_renewal(&censored, l, j, &bins, &renewal);
            let lhs_total: f64 = check.lhs.iter().sum();
            let rhs_total: f64 = check.rhs.iter().sum();
            let mut row = OracleRow::equal(
                "stationarity_identity",
                format!("l={l} j={j}"),
                lhs_total,
                rhs_total,
                1e-8,
            );
            row.abs_error = check.max_abs_error;
            row.pass = check.max_abs_error < 1e-8;
            rows.push(row);
        }
    }

    let k = grid.renewal_convergence_k;
    let undelayed = renewal_mass(&censored_cycle_lattice(&censored, k), None, k)?;
    rows.push(OracleRow::equal(
        "censored_renewal_converges",
        format!("k={k}"),
        undelayed[k - 1],
        1.0 / censored.nu(),
        1e-6,
    ));

    if let Some(mu) = law.mean() {
        let k = grid.renewal_k;
        let delayed = renewal_mass(
            &finite_cycle_lattice(law, k),
            Some(&finite_delay_lattice(law, k)?),
            k,
        )?;
        let (worst_k, worst) = delayed.iter().enumerate().map(|(i, u)| (i + 1, u)).fold(
            (1, delayed[0]),
            |acc, (i, &u)| {
                if (u - 1.0 / mu).abs() > (acc.1 - 1.0 / mu).abs() {
                    (i, u)
                } else {
                    acc
                }
            },
        );
        rows.push(OracleRow::equal(
            "finite_delayed_renewal_linear",
            format!("k<={k} worst_k={worst_k}"),
            worst,
            1.0 / mu,
            1e-9,
        ));
    }

    let marginal = MarginalLaw::new(&censored);
    let mass: f64 = (1..=QUAD_HORIZON + 20)
        .map(|m| {
            integrate(
                |v| marginal_density_x(&censored, v),
                (m - 1) as f64,
                m as f64,
                QUAD_TOL,
            )
        })
        .sum();
    rows.push(OracleRow::equal(
        "marginal_density_normalized",
        String::new(),
        mass,
        1.0,
        1e-10,
    ));
    rows.push(OracleRow::equal(
        "marginal_survival_at_zero",
        String::new(),
        marginal.survival(0.0),
        1.0,
        1e-12,
    ));

    let u = grid.conditional_level;
    let cond = ConditionalClusterLaw::new(law, u);
    let horizon = u.ceil() as u64 + 200;
    let bound = cond.bound();
    let param = format!("u={u}");
    rows.push(OracleRow::at_most(
        "conditional_sup_within_bound",
        param.clone(),
        sup_distance(&cond, law, horizon),
        bound,
        0.0,
    ));
    rows.push(OracleRow::at_most(
        "conditional_tv_within_bound",
        param.clone(),
        tv_distance_pmfs(&cond, law, horizon),
        bound,
        0.0,
    ));
    let exact_below: f64 = (1..=u.floor() as u64)
        .map(|j| (cond.mass(j) - law.mass(j)).abs())
        .fold(0.0, f64::max);
    rows.push(OracleRow::equal(
        "conditional_exact_below_level",
        param,
        exact_below,
        0.0,
        1e-15,
    ));

    Ok(rows)
}

pub fn write_oracle_csv<W: Write>(mut out: W, rows: &[OracleRow]) -> Result<()> {
    writeln!(out, "check,param,lhs,rhs,abs_error,tolerance,pass")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{}",
            r.check, r.param, r.lhs, r.rhs, r.abs_error, r.tolerance, r.pass
        )?;
    }
    Ok(())
}
