//! Hill estimator, Kolmogorov–Smirnov test and GPD threshold selection.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::{fit_gpd_mle, GpdParams};
use crate::rng::substream;
use crate::{Error, Result};

fn sorted_positive(losses: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = losses.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
        return Err(Error::Domain(format!("losses must be positive and finite, got {bad}")));
    }
    let mut v = losses.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    if k == 0 || k >= n {
        return Err(Error::Domain(format!("Hill k must satisfy 1 <= k <= n-1 = {}, got {k}", n - 1)));
    }
    Ok(())
}

/// Hill tail-index estimate from the `k` largest order statistics.
pub fn hill_estimate(losses: &[f64], k: usize) -> Result<f64> {
    check_k(k, losses.len())?;
    let v = sorted_positive(losses)?;
    let n = v.len();
    let reference = v[n - k - 1];
    let xi: f64 = v[n - k..].iter().map(|y| (y / reference).ln()).sum::<f64>() / k as f64;
    if xi > 0.0 {
        Ok(1.0 / xi)
    } else {
        Err(Error::Degenerate(format!(
            "the {k} largest losses all equal the reference order statistic"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillCurve {
    pub k_values: Vec<usize>,
    pub tau_hat: Vec<f64>,
}

/// Five-number summary used for box plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl HillCurve {
    pub fn summary(&self) -> BoxSummary {
        let mut v = self.tau_hat.clone();
        v.sort_by(f64::total_cmp);
        BoxSummary {
            min: v[0],
            q1: interpolated_quantile(&v, 0.25),
            median: interpolated_quantile(&v, 0.5),
            q3: interpolated_quantile(&v, 0.75),
            max: v[v.len() - 1],
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "tau_hat"])?;
        for (k, t) in self.k_values.iter().zip(&self.tau_hat) {
            w.write_record([k.to_string(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Hill estimates for every `k` in `k_min..=k_max`, from one sort and a
/// running sum of log order statistics.
pub fn hill_curve(losses: &[f64], k_min: usize, k_max: usize) -> Result<HillCurve> {
    check_k(k_min, losses.len())?;
    check_k(k_max, losses.len())?;
    if k_min > k_max {
        return Err(Error::Domain(format!("k_min {k_min} exceeds k_max {k_max}")));
    }
    let mut v = sorted_positive(losses)?;
    v.reverse();
    let logs: Vec<f64> = v.iter().map(|y| y.ln()).collect();
    let mut k_values = Vec::with_capacity(k_max - k_min + 1);
    let mut tau_hat = Vec::with_capacity(k_max - k_min + 1);
    let mut cum = 0.0;
    for k in 1..=k_max {
        cum += logs[k - 1];
        if k >= k_min {
            let xi = cum / k as f64 - logs[k];
            if !(xi > 0.0) {
                return Err(Error::Degenerate(format!("tied top order statistics at k = {k}")));
            }
            k_values.push(k);
            tau_hat.push(1.0 / xi);
        }
    }
    Ok(HillCurve { k_values, tau_hat })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Asymptotic Kolmogorov survival `P[K > x]`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    if x < 1.0 {
        // Jacobi theta form of the same law converges fast for small x
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * x * x);
        let cdf: f64 = (0..20)
            .map(|j| {
                let k = (2 * j + 1) as f64;
                (-k * k * c).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / x;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided one-sample Kolmogorov–Smirnov test against `cdf`.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("KS sample contains NaN".into()));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Domain(format!("cdf returned {f} at {x}")));
        }
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let d = d.clamp(0.0, 1.0);
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(n.sqrt() * d),
        n: v.len(),
    })
}

fn gpd_cdf(params: GpdParams) -> impl Fn(f64) -> f64 {
    move |y: f64| params.cdf(y.max(0.0)).unwrap_or(0.0)
}

/// Parametric-bootstrap KS p-value for a GPD fitted to `exceedances`:
/// each resample is drawn from the fit, refitted and retested. Resamples
/// whose refit fails are skipped.
pub fn gpd_ks_bootstrap_pvalue(
    exceedances: &[f64],
    fitted: GpdParams,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    let observed = ks_test(exceedances, gpd_cdf(fitted))?.statistic;
    let n = exceedances.len();
    let stats: Vec<Option<f64>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let draw: Vec<f64> = (0..n).map(|_| fitted.draw(&mut rng)).collect();
            let refit = fit_gpd_mle(&draw).ok()?;
            ks_test(&draw, gpd_cdf(refit.params)).ok().map(|r| r.statistic)
        })
        .collect();
    let valid: Vec<f64> = stats.into_iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::Degenerate("no bootstrap refit succeeded".into()));
    }
    let exceed = valid.iter().filter(|d| **d >= observed).count();
    Ok((exceed + 1) as f64 / (valid.len() + 1) as f64)
}

/// Default candidate levels: 0 and 50%, 55%, …, 95%.
pub fn default_threshold_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((10..=19).map(|i| i as f64 * 0.05))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdOptions {
    pub alpha: f64,
    /// Re-scan at 1% steps between the coarse winner and its predecessor.
    pub refine: bool,
    /// Use the parametric bootstrap instead of the asymptotic p-value.
    pub bootstrap: Option<BootstrapOptions>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self { alpha: 0.05, refine: true, bootstrap: None }
    }
}

/// Diagnostics for one candidate threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCandidate {
    /// Quantile level in [0, 1).
    pub level: f64,
    /// Threshold in loss units; 0 for level 0.
    pub u: f64,
    pub n_exceed: usize,
    pub params: Option<GpdParams>,
    pub ks: Option<KsResult>,
    pub p_value: Option<f64>,
    pub passed: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdSelection {
    /// `None` when no candidate passes.
    pub selected: Option<ThresholdCandidate>,
    /// Every evaluated candidate, ascending by level.
    pub candidates: Vec<ThresholdCandidate>,
}

/// Lower empirical quantile at `level`; level 0 means no threshold.
fn threshold_at(sorted: &[f64], level: f64) -> f64 {
    if level <= 0.0 {
        return 0.0;
    }
    let k = ((level * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn evaluate_candidate(sorted: &[f64], level: f64, opts: &ThresholdOptions) -> ThresholdCandidate {
    let u = threshold_at(sorted, level);
    let exceed: Vec<f64> = sorted.iter().filter(|y| **y > u).map(|y| y - u).collect();
    let mut cand = ThresholdCandidate {
        level,
        u,
        n_exceed: exceed.len(),
        params: None,
        ks: None,
        p_value: None,
        passed: false,
        failure: None,
    };
    let fit = match fit_gpd_mle(&exceed) {
        Ok(f) => f,
        Err(e) => {
            cand.failure = Some(e.to_string());
            return cand;
        }
    };
    cand.params = Some(fit.params);
    let ks = match ks_test(&exceed, gpd_cdf(fit.params)) {
        Ok(k) => k,
        Err(e) => {
            cand.failure = Some(e.to_string());
            return cand;
        }
    };
    cand.ks = Some(ks);
    let p = match opts.bootstrap {
        None => Ok(ks.p_value),
        Some(b) => gpd_ks_bootstrap_pvalue(&exceed, fit.params, b.resamples, b.seed),
    };
    match p {
        Ok(p) => {
            cand.p_value = Some(p);
            cand.passed = p >= opts.alpha;
        }
        Err(e) => cand.failure = Some(e.to_string()),
    }
    cand
}

/// Lowest candidate threshold whose GPD fit to the exceedances is not
/// rejected by the KS test at `opts.alpha`.
pub fn select_threshold(losses: &[f64], grid: &[f64], opts: &ThresholdOptions) -> Result<ThresholdSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty threshold grid".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid.iter().any(|l| !(0.0..1.0).contains(l)) {
        return Err(Error::InvalidParameter(
            "threshold grid must be strictly ascending levels in [0, 1)".into(),
        ));
    }
    if !(opts.alpha > 0.0 && opts.alpha <= 0.5) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 0.5], got {}", opts.alpha)));
    }
    let sorted = sorted_positive(losses)?;
    let mut candidates: Vec<ThresholdCandidate> = grid
        .par_iter()
        .map(|level| evaluate_candidate(&sorted, *level, opts))
        .collect();

    let winner = candidates.iter().position(|c| c.passed);
    let mut selected = winner.map(|i| candidates[i].clone());

    if let (true, Some(i)) = (opts.refine, winner) {
        if i > 0 {
            let lo = grid[i - 1];
            let hi = grid[i];
            let start = (lo * 100.0).round() as usize + 1;
            let end = (hi * 100.0).round() as usize;
            let fine: Vec<f64> = (start..end)
                .map(|p| p as f64 / 100.0)
                .filter(|l| *l > lo && *l < hi)
                .collect();
            let refined: Vec<ThresholdCandidate> = fine
                .par_iter()
                .map(|level| evaluate_candidate(&sorted, *level, opts))
                .collect();
            if let Some(c) = refined.iter().find(|c| c.passed) {
                selected = Some(c.clone());
            }
            candidates.extend(refined);
            candidates.sort_by(|a, b| a.level.total_cmp(&b.level));
        }
    }
    Ok(ThresholdSelection { selected, candidates })
}
