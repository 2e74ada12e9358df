use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use super::gamma::ln_gamma;
use crate::quad::integrate;
use crate::{Error, Result};

/// Variance-gamma law with shape λ, rate α, asymmetry β and location.
/// With β = 0 it is the law of `location + G1 - G2` for independent
/// `G1, G2 ~ Gamma(shape λ, rate α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceGammaParams {
    pub shape_lambda: f64,
    pub rate_alpha: f64,
    pub asymmetry_beta: f64,
    pub location: f64,
}

impl VarianceGammaParams {
    pub fn new(shape_lambda: f64, rate_alpha: f64, asymmetry_beta: f64, location: f64) -> Result<Self> {
        if !(shape_lambda > 0.0 && shape_lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "variance-gamma shape must be positive, got {shape_lambda}"
            )));
        }
        if !(rate_alpha > 0.0 && rate_alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "variance-gamma rate must be positive, got {rate_alpha}"
            )));
        }
        Ok(Self {
            shape_lambda,
            rate_alpha,
            asymmetry_beta,
            location,
        })
    }

    /// Reference law of the rank-accuracy test statistic for a sample of
    /// size `n`: λ = n/2, α = 1/2, β = 0, location 0.
    pub fn rga_reference(n: usize) -> Result<Self> {
        Self::new(n as f64 / 2.0, 0.5, 0.0, 0.0)
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.shape_lambda / (self.rate_alpha * self.rate_alpha)
    }

    /// Smallest `t` with `P[T ≥ t] ≤ prob`, found by bisection.
    pub fn upper_quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::Domain(format!(
                "upper-tail probability must lie in (0, 1), got {prob}"
            )));
        }
        let sd = self.variance().sqrt();
        let (mut lo, mut hi) = (self.location - 60.0 * sd - 60.0, self.location + 60.0 * sd + 60.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if vg_upper_tail(mid, self)? > prob {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// `P[G1 - G2 ≥ s]` for unit-rate gammas of shape `k` and `s ≥ 0`, by
/// integrating the density of `G2` against the upper regularised gamma of
/// `G1`.
fn gamma_difference_tail(k: f64, s: f64) -> f64 {
    let upper = k + 40.0 * k.sqrt() + 60.0;
    let norm = -ln_gamma(k);
    if k < 1.0 {
        // g = w^{1/k} removes the g^{k-1} singularity at the origin:
        // f(g) dg = e^{-g} dw / Γ(k + 1)
        let w_max = upper.powf(k);
        let scale = (norm - k.ln()).exp();
        integrate(
            |w: f64| {
                let g = w.powf(1.0 / k);
                scale * (-g).exp() * gamma_ur(k, g + s)
            },
            0.0,
            w_max,
            1e-13,
            1e-11,
            2000,
        )
        .value
    } else {
        integrate(
            |g: f64| {
                if g <= 0.0 {
                    return if k == 1.0 { gamma_ur(k, s) } else { 0.0 };
                }
                ((k - 1.0) * g.ln() - g + norm).exp() * gamma_ur(k, g + s)
            },
            0.0,
            upper,
            1e-13,
            1e-11,
            2000,
        )
        .value
    }
}

/// Upper tail `P[T ≥ t]` of the symmetric (β = 0) variance-gamma law.
pub fn vg_upper_tail(t: f64, params: &VarianceGammaParams) -> Result<f64> {
    if params.asymmetry_beta != 0.0 {
        return Err(Error::Unsupported(format!(
            "variance-gamma tail with asymmetry {} (only beta = 0 is implemented)",
            params.asymmetry_beta
        )));
    }
    if t.is_nan() {
        return Err(Error::Domain("variance-gamma tail at NaN".into()));
    }
    let s = (t - params.location) * params.rate_alpha;
    if s == f64::INFINITY {
        return Ok(0.0);
    }
    if s == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    let k = params.shape_lambda;
    let tail = gamma_difference_tail(k, s.abs()).clamp(0.0, 0.5);
    Ok(if s >= 0.0 { tail } else { 1.0 - tail })
}
