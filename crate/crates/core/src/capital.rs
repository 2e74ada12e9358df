//! Capital requirement: the single loss approximation (SLA) of the annual
//! compound-loss VaR and a Monte Carlo oracle for it.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::{normal_quantile, real_gamma, GpdParams};
use crate::rng::substream;
use crate::{Error, Result};

/// Per-event severity of the amount above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Severity {
    Gpd(GpdParams),
    /// Every event costs exactly this amount (testing fixture).
    PointMass(f64),
    /// `offset + Y` with `Y` GPD: a full loss above a threshold.
    ShiftedGpd { offset: f64, gpd: GpdParams },
}

impl Severity {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Severity::Gpd(g) => g.draw(rng),
            Severity::PointMass(v) => *v,
            Severity::ShiftedGpd { offset, gpd } => offset + gpd.draw(rng),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Severity::PointMass(v) if !(v.is_finite() && *v >= 0.0) => {
                Err(Error::InvalidParameter(format!("point mass must be finite and nonnegative, got {v}")))
            }
            Severity::ShiftedGpd { offset, .. } if !(offset.is_finite() && *offset >= 0.0) => {
                Err(Error::InvalidParameter(format!("offset must be finite and nonnegative, got {offset}")))
            }
            _ => Ok(()),
        }
    }
}

/// Poisson event count; a zero intensity always gives zero events.
pub(crate) fn draw_count<R: Rng + ?Sized>(poisson: Option<&Poisson<f64>>, rng: &mut R) -> u64 {
    poisson.map_or(0, |p| p.sample(rng) as u64)
}

pub(crate) fn poisson_law(lambda: f64) -> Result<Option<Poisson<f64>>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("intensity must be finite and nonnegative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(None);
    }
    Poisson::new(lambda)
        .map(Some)
        .map_err(|e| Error::InvalidParameter(format!("Poisson({lambda}): {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlaInputs {
    pub alpha: f64,
    pub lambda_hat: f64,
    pub gpd: GpdParams,
    pub threshold_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlaResult {
    pub var: f64,
    /// Severity quantile at `1 − (1−α)/λ̂`, before the correction factor.
    pub quantile: f64,
    pub correction: Option<f64>,
    /// The gamma correction hit a pole and was left out.
    pub correction_skipped: bool,
}

/// `c(τ) = ½ (1−τ) Γ(1−τ)² / Γ(1−2τ)`.
pub fn sla_correction_constant(tau: f64) -> Result<f64> {
    let g1 = real_gamma(1.0 - tau)?;
    let g2 = real_gamma(1.0 - 2.0 * tau)?;
    Ok(0.5 * (1.0 - tau) * g1 * g1 / g2)
}

fn sla_quantile(inputs: &SlaInputs) -> Result<f64> {
    let SlaInputs { alpha, lambda_hat, threshold_u, .. } = *inputs;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {alpha}")));
    }
    if !(lambda_hat > 0.0 && lambda_hat.is_finite()) {
        return Err(Error::Domain(format!("intensity must be positive, got {lambda_hat}")));
    }
    if !(threshold_u >= 0.0 && threshold_u.is_finite()) {
        return Err(Error::Domain(format!("threshold must be nonnegative, got {threshold_u}")));
    }
    let tail = (1.0 - alpha) / lambda_hat;
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::Domain(format!(
            "quantile level 1 - (1-alpha)/lambda = {} outside (0, 1)",
            1.0 - tail
        )));
    }
    inputs.gpd.quantile_upper(tail)
}

/// `u + Q(1 − (1−α)/λ̂) (1 − (1−α) c(τ̂)/(1−τ̂))`; gamma poles are errors.
pub fn sla_var(inputs: &SlaInputs) -> Result<SlaResult> {
    let q = sla_quantile(inputs)?;
    let tau = inputs.gpd.tail_tau;
    if tau == 1.0 {
        return Err(Error::GammaPole(0.0));
    }
    let c = sla_correction_constant(tau)?;
    let factor = 1.0 - (1.0 - inputs.alpha) * c / (1.0 - tau);
    Ok(SlaResult {
        var: inputs.threshold_u + q * factor,
        quantile: q,
        correction: Some(factor),
        correction_skipped: false,
    })
}

/// As [`sla_var`], but a gamma pole returns `u + Q(·)` flagged as uncorrected.
pub fn sla_var_or_uncorrected(inputs: &SlaInputs) -> Result<SlaResult> {
    match sla_var(inputs) {
        Err(Error::GammaPole(_)) => {
            let q = sla_quantile(inputs)?;
            Ok(SlaResult { var: inputs.threshold_u + q, quantile: q, correction: None, correction_skipped: true })
        }
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McVar {
    pub var: f64,
    /// Half-width of the 95% order-statistic interval divided by 1.96.
    pub standard_error: f64,
    pub n_sims: usize,
}

const MC_BATCH: usize = 1 << 16;

/// Annual totals `Σ_{i≤N} (u + Y_i)`, `N ~ Poisson(λ)`, in a fixed order.
pub fn simulate_annual_losses(
    lambda: f64,
    severity: &Severity,
    threshold_u: f64,
    n_sims: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    severity.validate()?;
    let poisson = poisson_law(lambda)?;
    let mut out = vec![0.0; n_sims];
    out.par_chunks_mut(MC_BATCH).enumerate().for_each(|(b, chunk)| {
        let mut rng = substream(seed, b as u64);
        for z in chunk.iter_mut() {
            let n = draw_count(poisson.as_ref(), &mut rng);
            *z = (0..n).map(|_| threshold_u + severity.draw(&mut rng)).sum();
        }
    });
    Ok(out)
}

fn order_stat(values: &mut [f64], k: usize) -> f64 {
    let k = k.min(values.len() - 1);
    *values.select_nth_unstable_by(k, f64::total_cmp).1
}

/// Empirical α-quantile (smallest `z` with `F_n(z) ≥ α`) of simulated
/// annual losses.
pub fn mc_var(
    alpha: f64,
    lambda: f64,
    severity: &Severity,
    threshold_u: f64,
    n_sims: usize,
    seed: u64,
) -> Result<McVar> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {alpha}")));
    }
    if n_sims < 1000 {
        return Err(Error::InvalidParameter(format!("need at least 1000 simulations, got {n_sims}")));
    }
    let mut z = simulate_annual_losses(lambda, severity, threshold_u, n_sims, seed)?;
    let n = n_sims as f64;
    let k = ((alpha * n).ceil() as usize).max(1) - 1;
    let var = order_stat(&mut z, k);
    let spread = normal_quantile(0.975) * (n * alpha * (1.0 - alpha)).sqrt();
    let lo = order_stat(&mut z, (k as f64 - spread).floor().max(0.0) as usize);
    let hi = order_stat(&mut z, (k as f64 + spread).ceil() as usize);
    Ok(McVar { var, standard_error: (hi - lo) / (2.0 * normal_quantile(0.975)), n_sims })
}

/// Exact VaR when every event costs `u + mass`: `(u + mass)` times the
/// smallest `n` with `P(N ≤ n) ≥ α`.
pub fn point_mass_var(alpha: f64, lambda: f64, mass: f64, threshold_u: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {alpha}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("intensity must be nonnegative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut n = 0u64;
    while cdf < alpha {
        n += 1;
        p *= lambda / n as f64;
        cdf += p;
        if n > 100_000 + (100.0 * lambda) as u64 {
            return Err(Error::NonConvergence {
                iterations: n as usize,
                reason: "Poisson cdf summation did not reach alpha".into(),
                trace: Vec::new(),
            });
        }
    }
    Ok(n as f64 * (threshold_u + mass))
}

/// Fitted parameters for one year of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearParameters {
    pub year: i32,
    pub lambda: f64,
    pub gpd: GpdParams,
    pub threshold_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarPoint {
    pub year: i32,
    pub lambda: f64,
    pub mu: f64,
    pub tau: f64,
    pub var: Option<f64>,
    pub correction_skipped: bool,
    pub error: Option<String>,
}

/// SLA VaR per year; poles fall back to the uncorrected value and other
/// failures are recorded per point.
pub fn var_trajectory(alpha: f64, years: &[YearParameters]) -> Vec<VarPoint> {
    years
        .iter()
        .map(|y| {
            let inputs = SlaInputs { alpha, lambda_hat: y.lambda, gpd: y.gpd, threshold_u: y.threshold_u };
            let res = sla_var_or_uncorrected(&inputs);
            VarPoint {
                year: y.year,
                lambda: y.lambda,
                mu: y.gpd.scale_mu,
                tau: y.gpd.tail_tau,
                var: res.as_ref().ok().map(|r| r.var),
                correction_skipped: res.as_ref().map(|r| r.correction_skipped).unwrap_or(false),
                error: res.err().map(|e| e.to_string()),
            }
        })
        .collect()
}

pub fn write_var_trajectory_csv<W: Write>(writer: W, points: &[VarPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["year", "lambda", "mu", "tau", "var", "log_var", "correction_skipped", "error"])?;
    for p in points {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            p.year.to_string(),
            p.lambda.to_string(),
            p.mu.to_string(),
            p.tau.to_string(),
            fmt(p.var),
            fmt(p.var.filter(|v| *v > 0.0).map(f64::ln)),
            p.correction_skipped.to_string(),
            p.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
