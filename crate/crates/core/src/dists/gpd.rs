use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optim::{minimize_bfgs, BfgsOptions};
use crate::rng::{open_unit, seeded};
use crate::{Error, Result};

/// Generalized Pareto law in scale / tail-index form: density
/// `(τ/μ)(1 + y/μ)^{-(1+τ)}` on `y ≥ 0`. Only the heavy-tailed branch
/// `τ > 0` is represented; the mean is finite iff `τ > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub scale_mu: f64,
    pub tail_tau: f64,
}

impl GpdParams {
    pub fn new(scale_mu: f64, tail_tau: f64) -> Result<Self> {
        if !(scale_mu > 0.0 && scale_mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "GPD scale must be positive and finite, got {scale_mu}"
            )));
        }
        if !(tail_tau > 0.0 && tail_tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "GPD tail index must be positive and finite, got {tail_tau}"
            )));
        }
        Ok(Self { scale_mu, tail_tau })
    }

    fn check_support(y: f64) -> Result<()> {
        if y >= 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("GPD support is y >= 0, got {y}")))
        }
    }

    /// Log-density; `-inf` outside the support.
    pub fn ln_pdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            return f64::NEG_INFINITY;
        }
        let (mu, tau) = (self.scale_mu, self.tail_tau);
        tau.ln() - mu.ln() - (1.0 + tau) * (y / mu).ln_1p()
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        Self::check_support(y)?;
        Ok(self.ln_pdf(y).exp())
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        Self::check_support(y)?;
        Ok(-(-self.tail_tau * (y / self.scale_mu).ln_1p()).exp_m1())
    }

    /// Survival function `(1 + y/μ)^{-τ}`.
    pub fn sf(&self, y: f64) -> Result<f64> {
        Self::check_support(y)?;
        Ok((-self.tail_tau * (y / self.scale_mu).ln_1p()).exp())
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!(
                "GPD quantile needs 0 <= p < 1, got {p}"
            )));
        }
        Ok(self.scale_mu * (-(-p).ln_1p() / self.tail_tau).exp_m1())
    }

    /// Quantile addressed by the upper-tail probability `q = 1 - p`; exact
    /// deep in the tail where `1 - p` is not representable.
    pub fn quantile_upper(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::Domain(format!(
                "GPD upper-tail quantile needs 0 < q <= 1, got {q}"
            )));
        }
        Ok(self.scale_mu * (-q.ln() / self.tail_tau).exp_m1())
    }

    /// `None` when the mean is infinite (`τ ≤ 1`).
    pub fn mean(&self) -> Option<f64> {
        (self.tail_tau > 1.0).then(|| self.scale_mu / (self.tail_tau - 1.0))
    }

    /// One inverse-transform draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let survival = open_unit(rng);
        self.scale_mu * (-survival.ln() / self.tail_tau).exp_m1()
    }

    /// `n` independent draws, deterministic per `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    pub fn log_likelihood(&self, losses: &[f64]) -> f64 {
        losses.iter().map(|&y| self.ln_pdf(y)).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpdFit {
    pub params: GpdParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub(crate) fn validate_positive_sample(losses: &[f64], needed: usize) -> Result<()> {
    if losses.len() < needed {
        return Err(Error::TooFewObservations {
            needed,
            got: losses.len(),
        });
    }
    if let Some(bad) = losses.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
        return Err(Error::Domain(format!(
            "losses must be positive and finite, found {bad}"
        )));
    }
    Ok(())
}

/// Profile log-likelihood in `ln μ`: for fixed μ the tail index has the
/// closed form `τ̂ = n / Σ ln(1 + y/μ)`.
fn profile(losses: &[f64], ln_mu: f64) -> (f64, f64) {
    let mu = ln_mu.exp();
    let n = losses.len() as f64;
    let s: f64 = losses.iter().map(|&y| (y / mu).ln_1p()).sum();
    let tau = n / s;
    (n * tau.ln() - n * ln_mu - s - n, tau)
}

/// Maximum-likelihood GPD fit over `μ > 0, τ > 0`.
pub fn fit_gpd_mle(losses: &[f64]) -> Result<GpdFit> {
    validate_positive_sample(losses, 5)?;
    let first = losses[0];
    if losses.iter().all(|&y| y == first) {
        return Err(Error::Degenerate(
            "all losses identical: the likelihood has no interior maximum".into(),
        ));
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let centre = sorted[sorted.len() / 2].ln();

    let step = 0.25;
    let half_width = 14.0;
    let cells = (2.0 * half_width / step) as usize;
    let mut best = (f64::NEG_INFINITY, centre, 1.0);
    let mut best_cell = 0;
    for cell in 0..=cells {
        let a = centre - half_width + step * cell as f64;
        let (ll, tau) = profile(losses, a);
        if ll > best.0 {
            best = (ll, a, tau);
            best_cell = cell;
        }
    }
    if best_cell == cells {
        return Err(Error::NonConvergence {
            iterations: 0,
            reason: "profile likelihood increases toward the exponential boundary \
                     (sample lighter-tailed than any GPD with tau > 0)"
                .into(),
            trace: vec![best.0],
        });
    }

    let n = losses.len() as f64;
    let objective = |x: &[f64], grad: &mut [f64]| {
        let (mu, tau) = (x[0].exp(), x[1].exp());
        let mut ll = 0.0;
        let mut sum_r = 0.0;
        let mut sum_l = 0.0;
        for &y in losses {
            let l = (y / mu).ln_1p();
            ll -= (1.0 + tau) * l;
            sum_l += l;
            sum_r += y / (mu + y);
        }
        ll += n * (x[1] - x[0]);
        grad[0] = -(-n + (1.0 + tau) * sum_r);
        grad[1] = -(n - tau * sum_l);
        -ll
    };
    let m = minimize_bfgs(objective, &[best.1, best.2.ln()], &BfgsOptions::default());
    if !m.converged {
        return Err(Error::NonConvergence {
            iterations: m.iterations,
            reason: format!("gradient norm {:.3e} above tolerance", m.grad_norm()),
            trace: m.trace.iter().map(|v| -v).collect(),
        });
    }
    let params = GpdParams::new(m.x[0].exp(), m.x[1].exp())?;
    Ok(GpdFit {
        params,
        log_likelihood: -m.value,
        iterations: m.iterations,
        grad_norm: m.grad_norm(),
    })
}
