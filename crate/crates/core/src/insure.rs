//! Insurability: zero-utility buyer premium, insurer minimum premium,
//! pool size and insurer relative wealth, on a common simulated loss panel.

use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capital::{draw_count, poisson_law, Severity, YearParameters};
use crate::rng::substream;
use crate::{Error, Result};

/// Utility of wealth, floored at 1: `u(x) = ũ(max(x, 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Utility {
    Log,
    /// `x^{1−γ}/(1−γ)` with `γ ∈ [0, 1)`.
    Crra(f64),
}

impl Utility {
    pub fn validate(&self) -> Result<()> {
        match self {
            Utility::Crra(g) if !(0.0..1.0).contains(g) => {
                Err(Error::InvalidParameter(format!("CRRA coefficient must lie in [0, 1), got {g}")))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.max(1.0);
        match self {
            Utility::Log => x.ln(),
            Utility::Crra(g) => x.powf(1.0 - g) / (1.0 - g),
        }
    }

    /// `u(base + delta) − u(base)` without cancellation when `base` is large.
    pub fn diff(&self, base: f64, delta: f64) -> f64 {
        let new = base + delta;
        if base >= 1.0 && new >= 1.0 {
            let rel = (delta / base).ln_1p();
            match self {
                Utility::Log => rel,
                Utility::Crra(g) => base.powf(1.0 - g) * ((1.0 - g) * rel).exp_m1() / (1.0 - g),
            }
        } else {
            self.eval(new) - self.eval(base)
        }
    }

    pub fn label(&self) -> String {
        match self {
            Utility::Log => "log".into(),
            Utility::Crra(g) => format!("crra_{g}"),
        }
    }
}

impl std::str::FromStr for Utility {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "log" {
            return Ok(Utility::Log);
        }
        let g = t
            .strip_prefix("crra_")
            .or_else(|| t.strip_prefix("crra:"))
            .or_else(|| t.strip_prefix("crra"))
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown utility `{s}` (log, crra_<gamma>)")))?;
        let u = Utility::Crra(g);
        u.validate()?;
        Ok(u)
    }
}

/// Utilities used for the premium series.
pub fn default_utilities() -> Vec<Utility> {
    vec![Utility::Log, Utility::Crra(0.2), Utility::Crra(0.7)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsuranceCase {
    pub wealth_w: f64,
    /// Per-event cover limit as a fraction of wealth.
    pub cover_fraction_k: f64,
    pub lambda: f64,
    /// Distribution of the full event loss.
    pub severity: Severity,
}

impl InsuranceCase {
    pub fn cover_limit(&self) -> f64 {
        self.wealth_w * self.cover_fraction_k
    }

    fn validate(&self) -> Result<()> {
        if !(self.wealth_w > 0.0 && self.wealth_w.is_finite()) {
            return Err(Error::InvalidParameter(format!("wealth must be positive, got {}", self.wealth_w)));
        }
        if !(self.cover_fraction_k > 0.0 && self.cover_fraction_k <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cover fraction must lie in (0, 1], got {}",
                self.cover_fraction_k
            )));
        }
        Ok(())
    }
}

/// One year of simulated totals: all losses and the covered part.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPanel {
    pub total: Vec<f64>,
    pub covered: Vec<f64>,
}

impl LossPanel {
    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    pub fn mean_covered(&self) -> f64 {
        self.covered.iter().sum::<f64>() / self.len() as f64
    }
}

const PANEL_BATCH: usize = 1 << 14;

/// Simulates `S = Σ Ỹ_i` and `S_covered = Σ min(Ỹ_i, kw)` per year.
pub fn simulate_panel(case: &InsuranceCase, n_sims: usize, seed: u64) -> Result<LossPanel> {
    case.validate()?;
    if n_sims == 0 {
        return Err(Error::InvalidParameter("need at least one simulation".into()));
    }
    let poisson = poisson_law(case.lambda)?;
    let cap = case.cover_limit();
    let pairs: Vec<(f64, f64)> = (0..n_sims.div_ceil(PANEL_BATCH))
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = substream(seed, b as u64);
            let len = PANEL_BATCH.min(n_sims - b * PANEL_BATCH);
            (0..len)
                .map(|_| {
                    let n = draw_count(poisson.as_ref(), &mut rng);
                    (0..n).fold((0.0, 0.0), |(s, c), _| {
                        let y = case.severity.draw(&mut rng);
                        (s + y, c + y.min(cap))
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (total, covered) = pairs.into_iter().unzip();
    Ok(LossPanel { total, covered })
}

fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

/// `E[u(w − P − S + S_c)] − E[u(w − S)]`; nonincreasing in `P`.
pub fn buyer_gap(panel: &LossPanel, utility: &Utility, wealth: f64, premium: f64) -> f64 {
    let n = panel.len() as f64;
    panel
        .total
        .iter()
        .zip(&panel.covered)
        .map(|(s, c)| utility.diff(wealth - s, c - premium))
        .sum::<f64>()
        / n
}

/// `E[v(W + P − S_c)] − v(W)`; nondecreasing in `P`.
pub fn insurer_gap(panel: &LossPanel, utility: &Utility, insurer_wealth: f64, premium: f64) -> f64 {
    let n = panel.len() as f64;
    panel.covered.iter().map(|c| utility.diff(insurer_wealth, premium - c)).sum::<f64>() / n
}

/// Root of a monotone function on `[lo, hi]` to `tol` relative width.
fn bisect(mut lo: f64, mut hi: f64, tol: f64, mut decreasing_gap: impl FnMut(f64) -> f64) -> f64 {
    // invariant: gap(lo) > 0 >= gap(hi)
    for _ in 0..400 {
        if hi - lo <= tol * hi.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if decreasing_gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const BISECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiumEstimate {
    pub premium: f64,
    /// Delta-method error: the gap's sampling error over its slope.
    pub standard_error: f64,
    pub expected_covered: f64,
}

fn check_sims(n_sims: usize) -> Result<()> {
    if n_sims < 10_000 {
        return Err(Error::InvalidParameter(format!("need at least 10^4 simulations, got {n_sims}")));
    }
    Ok(())
}

fn premium_se(panel: &LossPanel, f: impl Fn(f64, f64) -> f64, premium: f64) -> f64 {
    let (_, se) = mean_and_se(panel.total.iter().zip(&panel.covered).map(|(s, c)| f(*s, *c)));
    let h = 1e-4 * premium.abs().max(1e-6);
    let slope = panel
        .total
        .iter()
        .zip(&panel.covered)
        .map(|(s, c)| f(*s, c - h) - f(*s, c + h))
        .sum::<f64>()
        / (2.0 * h * panel.len() as f64);
    if slope.abs() > 0.0 { se / slope.abs() } else { 0.0 }
}

/// Buyer's maximum premium: root of [`buyer_gap`] in `[0, w]`.
pub fn premium_max_on_panel(panel: &LossPanel, case: &InsuranceCase, utility: &Utility) -> Result<PremiumEstimate> {
    utility.validate()?;
    let w = case.wealth_w;
    let expected_covered = panel.mean_covered();
    if panel.covered.iter().all(|c| *c == 0.0) {
        return Ok(PremiumEstimate { premium: 0.0, standard_error: 0.0, expected_covered });
    }
    let g0 = buyer_gap(panel, utility, w, 0.0);
    let gw = buyer_gap(panel, utility, w, w);
    if g0 <= 0.0 || gw > 0.0 {
        return Err(Error::NonConvergence {
            iterations: 0,
            reason: format!(
                "buyer indifference has no root in [0, w]: gap {g0} at P = 0 and {gw} at P = w \
                 (uninsurable at any price)"
            ),
            trace: vec![g0, gw],
        });
    }
    let p = bisect(0.0, w, BISECTION_TOL, |p| buyer_gap(panel, utility, w, p));
    let se = premium_se(panel, |s, c| utility.diff(w - s, c - p), p);
    Ok(PremiumEstimate { premium: p, standard_error: se, expected_covered })
}

pub fn premium_max(case: &InsuranceCase, utility: &Utility, n_sims: usize, seed: u64) -> Result<PremiumEstimate> {
    check_sims(n_sims)?;
    let panel = simulate_panel(case, n_sims, seed)?;
    premium_max_on_panel(&panel, case, utility)
}

/// Insurer's minimum premium: root of [`insurer_gap`] in `[0, ∞)` found
/// by doubling the upper end.
pub fn premium_min_on_panel(panel: &LossPanel, utility: &Utility, insurer_wealth: f64) -> Result<PremiumEstimate> {
    utility.validate()?;
    if !(insurer_wealth > 0.0 && insurer_wealth.is_finite()) {
        return Err(Error::InvalidParameter(format!("insurer wealth must be positive, got {insurer_wealth}")));
    }
    let expected_covered = panel.mean_covered();
    if panel.covered.iter().all(|c| *c == 0.0) {
        return Ok(PremiumEstimate { premium: 0.0, standard_error: 0.0, expected_covered });
    }
    let gap = |p: f64| -insurer_gap(panel, utility, insurer_wealth, p);
    let mut hi = expected_covered.max(1e-12);
    let mut doublings = 0;
    while gap(hi) > 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::NonConvergence {
                iterations: doublings,
                reason: "insurer premium bracket did not close".into(),
                trace: vec![gap(hi)],
            });
        }
    }
    let p = bisect(0.0, hi, BISECTION_TOL, gap);
    let se = premium_se(panel, |_, c| utility.diff(insurer_wealth, p - c), p);
    Ok(PremiumEstimate { premium: p, standard_error: se, expected_covered })
}

pub fn premium_min(
    case: &InsuranceCase,
    utility: &Utility,
    insurer_wealth: f64,
    n_sims: usize,
    seed: u64,
) -> Result<PremiumEstimate> {
    check_sims(n_sims)?;
    let panel = simulate_panel(case, n_sims, seed)?;
    premium_min_on_panel(&panel, utility, insurer_wealth)
}

/// `E[v(mP + P − S_c)] − v(mP)`: positive when underwriting raises the
/// insurer's expected utility.
pub fn pool_gap(panel: &LossPanel, utility: &Utility, premium: f64, m: f64) -> f64 {
    let base = m * premium;
    panel.covered.iter().map(|c| utility.diff(base, premium - c)).sum::<f64>() / panel.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PoolSize {
    Root(f64),
    /// Gap keeps one sign across the bracket.
    NoSolution { gap_at_low: f64, gap_at_high: f64 },
}

impl PoolSize {
    pub fn value(&self) -> Option<f64> {
        match self {
            PoolSize::Root(m) => Some(*m),
            PoolSize::NoSolution { .. } => None,
        }
    }
}

pub const DEFAULT_POOL_BRACKET: (f64, f64) = (1e-6, 1e12);
const POOL_GRID_PER_DECADE: usize = 8;
const POOL_DOUBLINGS: usize = 20;

/// Largest pool size `m` at which the insurer is indifferent, located by a
/// log-grid scan from the top of the bracket and refined by bisection in
/// `ln m`.
pub fn pool_size_on_panel(
    panel: &LossPanel,
    utility: &Utility,
    premium: f64,
    bracket: (f64, f64),
) -> Result<PoolSize> {
    utility.validate()?;
    if !(premium > 0.0 && premium.is_finite()) {
        return Err(Error::InvalidParameter(format!("pool size needs a positive premium, got {premium}")));
    }
    let (lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("invalid pool-size bracket [{lo}, {hi}]")));
    }
    let gap = |m: f64| pool_gap(panel, utility, premium, m);
    let gap_lo = gap(lo);
    let mut gap_hi = gap(hi);
    for _ in 0..POOL_DOUBLINGS {
        if gap_hi.signum() != gap_lo.signum() || gap_hi == 0.0 {
            break;
        }
        hi *= 2.0;
        gap_hi = gap(hi);
    }
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let steps = (((ln_hi - ln_lo) / std::f64::consts::LN_10) * POOL_GRID_PER_DECADE as f64).ceil() as usize;
    let steps = steps.max(1);
    let at = |i: usize| (ln_lo + (ln_hi - ln_lo) * i as f64 / steps as f64).exp();
    let mut upper = hi;
    let mut g_upper = gap_hi;
    if g_upper == 0.0 {
        return Ok(PoolSize::Root(upper));
    }
    for i in (0..steps).rev() {
        let m = at(i);
        let g = gap(m);
        if g == 0.0 {
            return Ok(PoolSize::Root(m));
        }
        if g.signum() != g_upper.signum() {
            let sign_hi = g_upper.signum();
            let (mut a, mut b) = (m.ln(), upper.ln());
            for _ in 0..200 {
                if b - a <= 1e-12 {
                    break;
                }
                let mid = 0.5 * (a + b);
                if gap(mid.exp()).signum() == sign_hi {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(PoolSize::Root((0.5 * (a + b)).exp()));
        }
        upper = m;
        g_upper = g;
    }
    Ok(PoolSize::NoSolution { gap_at_low: gap_lo, gap_at_high: gap_hi })
}

pub fn pool_size(
    case: &InsuranceCase,
    utility: &Utility,
    premium: f64,
    n_sims: usize,
    seed: u64,
    bracket: (f64, f64),
) -> Result<PoolSize> {
    check_sims(n_sims)?;
    let panel = simulate_panel(case, n_sims, seed)?;
    pool_size_on_panel(&panel, utility, premium, bracket)
}

/// `m P⁺ / w`.
pub fn relative_wealth(m: f64, p_plus: f64, wealth: f64) -> Result<f64> {
    if !(m > 0.0 && p_plus > 0.0 && wealth > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "relative wealth needs positive inputs, got m = {m}, P = {p_plus}, w = {wealth}"
        )));
    }
    Ok(m * p_plus / wealth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PremiumStatus {
    Feasible,
    /// The buyer pays at least the whole wealth or no premium solves the equation.
    Uninsurable,
    /// A premium exists but no pool size makes the insurer indifferent.
    NoPoolSize,
    /// The buyer's premium is below the expected covered loss, so the
    /// insurer loses at every pool size above the root; the root only marks
    /// where the utility floor stops protecting the insurer.
    BelowExpectedCover,
    /// No covered losses: nothing to insure.
    NoRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumResult {
    pub p_plus: Option<f64>,
    pub p_minus: Option<f64>,
    pub pool_size_m: PoolSize,
    pub relative_wealth: Option<f64>,
    pub mc_standard_error: f64,
    pub expected_covered: f64,
    pub status: PremiumStatus,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiumOptions {
    pub n_sims: usize,
    pub seed: u64,
    /// Insurer wealth for the minimum premium; `None` skips that solve.
    pub insurer_wealth: Option<f64>,
    pub pool_bracket: (f64, f64),
}

impl Default for PremiumOptions {
    fn default() -> Self {
        Self { n_sims: 100_000, seed: 0, insurer_wealth: None, pool_bracket: DEFAULT_POOL_BRACKET }
    }
}

/// Buyer premium, pool size and relative wealth for one case and utility;
/// the insurer uses the same utility as the buyer.
pub fn premium_analysis_on_panel(
    panel: &LossPanel,
    case: &InsuranceCase,
    utility: &Utility,
    opts: &PremiumOptions,
) -> Result<PremiumResult> {
    let expected_covered = panel.mean_covered();
    let p_minus = opts
        .insurer_wealth
        .map(|wi| premium_min_on_panel(panel, utility, wi).map(|p| p.premium))
        .transpose()?;
    let empty = PoolSize::NoSolution { gap_at_low: 0.0, gap_at_high: 0.0 };
    let est = match premium_max_on_panel(panel, case, utility) {
        Ok(e) => e,
        Err(Error::NonConvergence { reason, .. }) => {
            return Ok(PremiumResult {
                p_plus: None,
                p_minus,
                pool_size_m: empty,
                relative_wealth: None,
                mc_standard_error: 0.0,
                expected_covered,
                status: PremiumStatus::Uninsurable,
                message: Some(reason),
            })
        }
        Err(e) => return Err(e),
    };
    if est.premium == 0.0 {
        return Ok(PremiumResult {
            p_plus: Some(0.0),
            p_minus,
            pool_size_m: empty,
            relative_wealth: None,
            mc_standard_error: 0.0,
            expected_covered,
            status: PremiumStatus::NoRisk,
            message: None,
        });
    }
    if est.premium >= case.wealth_w * (1.0 - 10.0 * BISECTION_TOL) {
        return Ok(PremiumResult {
            p_plus: Some(est.premium),
            p_minus,
            pool_size_m: empty,
            relative_wealth: None,
            mc_standard_error: est.standard_error,
            expected_covered,
            status: PremiumStatus::Uninsurable,
            message: Some("maximum premium reaches the insured wealth".into()),
        });
    }
    let pool = pool_size_on_panel(panel, utility, est.premium, opts.pool_bracket)?;
    let rw = pool.value().map(|m| relative_wealth(m, est.premium, case.wealth_w)).transpose()?;
    Ok(PremiumResult {
        p_plus: Some(est.premium),
        p_minus,
        pool_size_m: pool,
        relative_wealth: rw,
        mc_standard_error: est.standard_error,
        expected_covered,
        status: match rw {
            None => PremiumStatus::NoPoolSize,
            Some(_) if est.premium < expected_covered => PremiumStatus::BelowExpectedCover,
            Some(_) => PremiumStatus::Feasible,
        },
        message: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumSeriesPoint {
    pub year: i32,
    pub utility: Utility,
    pub lambda: f64,
    pub tau: f64,
    pub result: std::result::Result<PremiumResult, String>,
}

/// Per-year premiums for each utility. The full event loss is `u + Y`
/// with `Y` the year's fitted GPD; each year has its own seeded panel.
pub fn premium_timeseries(
    years: &[YearParameters],
    wealth_w: f64,
    cover_fraction_k: f64,
    utilities: &[Utility],
    opts: &PremiumOptions,
) -> Result<Vec<PremiumSeriesPoint>> {
    check_sims(opts.n_sims)?;
    for u in utilities {
        u.validate()?;
    }
    let per_year: Vec<Vec<PremiumSeriesPoint>> = years
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            let case = InsuranceCase {
                wealth_w,
                cover_fraction_k,
                lambda: y.lambda,
                severity: Severity::ShiftedGpd { offset: y.threshold_u, gpd: y.gpd },
            };
            let year_seed = substream(opts.seed, i as u64).next_u64();
            let panel = simulate_panel(&case, opts.n_sims, year_seed);
            utilities
                .iter()
                .map(|u| PremiumSeriesPoint {
                    year: y.year,
                    utility: *u,
                    lambda: y.lambda,
                    tau: y.gpd.tail_tau,
                    result: panel
                        .as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|p| premium_analysis_on_panel(p, &case, u, opts).map_err(|e| e.to_string())),
                })
                .collect()
        })
        .collect();
    Ok(per_year.into_iter().flatten().collect())
}

pub fn write_premium_series_csv<W: Write>(writer: W, points: &[PremiumSeriesPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "year",
        "utility",
        "lambda",
        "tau",
        "p_plus",
        "p_minus",
        "pool_size_m",
        "relative_wealth",
        "log_relative_wealth",
        "status",
        "message",
    ])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        let (pp, pm, m, rw, status, msg) = match &p.result {
            Ok(r) => (
                r.p_plus,
                r.p_minus,
                r.pool_size_m.value(),
                r.relative_wealth,
                format!("{:?}", r.status),
                r.message.clone().unwrap_or_default(),
            ),
            Err(e) => (None, None, None, None, "Error".to_string(), e.clone()),
        };
        w.write_record([
            p.year.to_string(),
            p.utility.label(),
            p.lambda.to_string(),
            p.tau.to_string(),
            fmt(pp),
            fmt(pm),
            fmt(m),
            fmt(rw),
            fmt(rw.filter(|v| *v > 0.0).map(f64::ln)),
            status,
            msg,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::GpdParams;
    use approx::assert_relative_eq;

    fn point_case(lambda: f64) -> InsuranceCase {
        InsuranceCase { wealth_w: 10.0, cover_fraction_k: 0.5, lambda, severity: Severity::PointMass(2.0) }
    }

    #[test]
    fn utility_examples() {
        assert_relative_eq!(Utility::Log.eval(std::f64::consts::E), 1.0, max_relative = 1e-15);
        assert_eq!(Utility::Log.eval(0.5), 0.0);
        assert_relative_eq!(Utility::Crra(0.5).eval(4.0), 4.0, max_relative = 1e-15);
        assert!(Utility::Crra(1.0).validate().is_err());
        assert_eq!("crra_0.2".parse::<Utility>().unwrap(), Utility::Crra(0.2));
        let u = Utility::Crra(0.7);
        assert_relative_eq!(u.diff(5.0, 2.5), u.eval(7.5) - u.eval(5.0), max_relative = 1e-12);
        assert_relative_eq!(Utility::Log.diff(0.2, 3.0), 3.2f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn zero_intensity_gives_zero_premiums() {
        let case = point_case(0.0);
        assert_eq!(premium_max(&case, &Utility::Log, 10_000, 1).unwrap().premium, 0.0);
        assert_eq!(premium_min(&case, &Utility::Log, 100.0, 10_000, 1).unwrap().premium, 0.0);
        match pool_size(&case, &Utility::Log, 1.0, 10_000, 1, DEFAULT_POOL_BRACKET).unwrap() {
            PoolSize::NoSolution { gap_at_low, gap_at_high } => assert!(gap_at_low > 0.0 && gap_at_high > 0.0),
            r => panic!("expected no solution, got {r:?}"),
        }
    }

    #[test]
    fn point_mass_no_solution_above_expected_cover() {
        let case = InsuranceCase { wealth_w: 10.0, cover_fraction_k: 0.2, lambda: 1.0, severity: Severity::PointMass(2.0) };
        let r = pool_size(&case, &Utility::Log, 2.5, 100_000, 4, DEFAULT_POOL_BRACKET).unwrap();
        assert!(matches!(r, PoolSize::NoSolution { gap_at_low, gap_at_high } if gap_at_low > 0.0 && gap_at_high > 0.0));
    }

    #[test]
    fn buyer_gap_monotone_and_risk_averse() {
        let case = InsuranceCase {
            wealth_w: 10.0,
            cover_fraction_k: 0.1,
            lambda: 1.0,
            severity: Severity::Gpd(GpdParams::new(1.0, 2.0).unwrap()),
        };
        let panel = simulate_panel(&case, 50_000, 9).unwrap();
        let gaps: Vec<f64> = (0..=20).map(|i| buyer_gap(&panel, &Utility::Log, 10.0, 0.1 * i as f64)).collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
        let p = premium_max_on_panel(&panel, &case, &Utility::Log).unwrap();
        assert!(p.premium >= p.expected_covered - 2.0 * p.standard_error);
    }

    #[test]
    fn insurer_premium_decreases_with_wealth() {
        let case = InsuranceCase {
            wealth_w: 10.0,
            cover_fraction_k: 0.5,
            lambda: 2.0,
            severity: Severity::Gpd(GpdParams::new(1.0, 1.5).unwrap()),
        };
        let panel = simulate_panel(&case, 20_000, 2).unwrap();
        // below W = kw + 1 the floor truncates the insurer's losses
        let ps: Vec<f64> = [6.0, 10.0, 20.0, 100.0, 1e4]
            .iter()
            .map(|w| premium_min_on_panel(&panel, &Utility::Log, *w).unwrap().premium)
            .collect();
        assert!(ps.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{ps:?}");
        let neutral = premium_min_on_panel(&panel, &Utility::Log, 1e6 * panel.mean_covered()).unwrap();
        assert_relative_eq!(neutral.premium, panel.mean_covered(), max_relative = 1e-4);
    }

    #[test]
    fn relative_wealth_definition() {
        assert_eq!(relative_wealth(100.0, 2.0, 50.0).unwrap(), 4.0);
        assert_relative_eq!(relative_wealth(0.997, 1.5, 1.0).unwrap(), 1.4955, max_relative = 1e-12);
        assert_relative_eq!(relative_wealth(3.0, 2.0, 7.0).unwrap() / 3.0, relative_wealth(3.0, 2.0, 21.0).unwrap(), max_relative = 1e-15);
        assert!(relative_wealth(0.0, 1.0, 1.0).is_err());
    }
}
