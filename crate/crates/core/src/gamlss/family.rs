use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dists::{fit_gpd_mle, ln_gamma, normal_cdf};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResponseFamily {
    Poisson,
    Gpd,
    LogNormal,
    LogLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Log,
    Identity,
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Log => eta.exp(),
            Link::Identity => eta,
        }
    }
}

/// Log-density contribution of one observation and its derivatives with
/// respect to the linear predictors.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ObsTerms {
    pub ll: f64,
    pub grad: [f64; 2],
    /// Second derivatives of the log-density.
    pub hess: [[f64; 2]; 2],
    /// Expected information per observation.
    pub fisher: [[f64; 2]; 2],
}

impl ResponseFamily {
    pub fn n_parameters(self) -> usize {
        match self {
            ResponseFamily::Poisson => 1,
            _ => 2,
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ResponseFamily::Poisson => &["lambda"],
            ResponseFamily::Gpd => &["mu", "tau"],
            ResponseFamily::LogNormal | ResponseFamily::LogLogistic => &["mu", "sigma"],
        }
    }

    pub fn links(self) -> &'static [Link] {
        match self {
            ResponseFamily::Poisson => &[Link::Log],
            ResponseFamily::Gpd => &[Link::Log, Link::Log],
            ResponseFamily::LogNormal | ResponseFamily::LogLogistic => &[Link::Identity, Link::Log],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResponseFamily::Poisson => "Poisson",
            ResponseFamily::Gpd => "GPD",
            ResponseFamily::LogNormal => "LogNormal",
            ResponseFamily::LogLogistic => "LogLogistic",
        }
    }

    pub(crate) fn validate_response(self, y: &[f64]) -> Result<()> {
        let bad = match self {
            ResponseFamily::Poisson => y.iter().find(|v| !(**v >= 0.0 && v.fract() == 0.0 && v.is_finite())),
            _ => y.iter().find(|v| !(**v > 0.0 && v.is_finite())),
        };
        match bad {
            Some(v) => Err(Error::Domain(format!("{} response value {v} outside the support", self.name()))),
            None => Ok(()),
        }
    }

    /// Part of the log-likelihood that does not depend on the parameters.
    pub(crate) fn ll_constant(self, y: f64) -> f64 {
        match self {
            ResponseFamily::Poisson => -ln_gamma(y + 1.0),
            ResponseFamily::Gpd => 0.0,
            ResponseFamily::LogNormal => -y.ln() - 0.5 * (2.0 * PI).ln(),
            ResponseFamily::LogLogistic => -y.ln(),
        }
    }

    /// Per-observation terms without the constant of `ll_constant`.
    pub(crate) fn terms(self, y: f64, eta: [f64; 2]) -> ObsTerms {
        match self {
            ResponseFamily::Poisson => {
                let lambda = eta[0].exp();
                ObsTerms {
                    ll: y * eta[0] - lambda,
                    grad: [y - lambda, 0.0],
                    hess: [[-lambda, 0.0], [0.0, 0.0]],
                    fisher: [[lambda, 0.0], [0.0, 0.0]],
                }
            }
            ResponseFamily::Gpd => {
                let mu = eta[0].exp();
                let tau = eta[1].exp();
                let a = y / mu;
                let l = a.ln_1p();
                let r = a / (1.0 + a);
                ObsTerms {
                    ll: eta[1] - eta[0] - (1.0 + tau) * l,
                    grad: [-1.0 + (1.0 + tau) * r, 1.0 - tau * l],
                    hess: [
                        [-(1.0 + tau) * r / (1.0 + a), tau * r],
                        [tau * r, -tau * l],
                    ],
                    fisher: [
                        [tau / (tau + 2.0), -tau / (tau + 1.0)],
                        [-tau / (tau + 1.0), 1.0],
                    ],
                }
            }
            ResponseFamily::LogNormal => {
                let sigma = eta[1].exp();
                let z = (y.ln() - eta[0]) / sigma;
                ObsTerms {
                    ll: -eta[1] - 0.5 * z * z,
                    grad: [z / sigma, z * z - 1.0],
                    hess: [
                        [-1.0 / (sigma * sigma), -2.0 * z / sigma],
                        [-2.0 * z / sigma, -2.0 * z * z],
                    ],
                    fisher: [[1.0 / (sigma * sigma), 0.0], [0.0, 2.0]],
                }
            }
            ResponseFamily::LogLogistic => {
                let sigma = eta[1].exp();
                let z = (y.ln() - eta[0]) / sigma;
                let p = logistic(z);
                let q = p * (1.0 - p);
                // -z - 2 ln(1 + e^{-z}) written to avoid overflow for z << 0
                let log_kernel = -z.abs() - 2.0 * (-z.abs()).exp().ln_1p();
                ObsTerms {
                    ll: -eta[1] + log_kernel,
                    grad: [(2.0 * p - 1.0) / sigma, -1.0 + z * (2.0 * p - 1.0)],
                    hess: [
                        [-2.0 * q / (sigma * sigma), -(2.0 * z * q + 2.0 * p - 1.0) / sigma],
                        [-(2.0 * z * q + 2.0 * p - 1.0) / sigma, -z * (2.0 * p - 1.0) - 2.0 * z * z * q],
                    ],
                    fisher: [
                        [1.0 / (3.0 * sigma * sigma), 0.0],
                        [0.0, (3.0 + PI * PI) / 9.0],
                    ],
                }
            }
        }
    }

    /// Intercept starting values on the predictor scale.
    pub(crate) fn start(self, y: &[f64]) -> Result<[f64; 2]> {
        let n = y.len() as f64;
        match self {
            ResponseFamily::Poisson => {
                let mean = y.iter().sum::<f64>() / n;
                if mean <= 0.0 {
                    return Err(Error::Degenerate("all counts are zero".into()));
                }
                Ok([mean.ln(), 0.0])
            }
            ResponseFamily::Gpd => Ok(match fit_gpd_mle(y) {
                Ok(fit) => [fit.params.scale_mu.ln(), fit.params.tail_tau.ln()],
                Err(_) => {
                    let mut v = y.to_vec();
                    v.sort_by(f64::total_cmp);
                    [v[v.len() / 2].ln(), 0.0]
                }
            }),
            ResponseFamily::LogNormal | ResponseFamily::LogLogistic => {
                let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
                let m = logs.iter().sum::<f64>() / n;
                let var = logs.iter().map(|l| (l - m) * (l - m)).sum::<f64>() / n;
                if var <= 0.0 {
                    return Err(Error::Degenerate("log responses have zero spread".into()));
                }
                let s = var.sqrt();
                Ok(if self == ResponseFamily::LogNormal {
                    [m, s.ln()]
                } else {
                    [m, (s * 3f64.sqrt() / PI).ln()]
                })
            }
        }
    }

    /// Distribution function at `y` given natural parameters.
    pub fn cdf(self, y: f64, params: &[f64]) -> f64 {
        match self {
            ResponseFamily::Poisson => statrs::function::gamma::gamma_ur(y.floor() + 1.0, params[0]),
            ResponseFamily::Gpd => -(-params[1] * (y.max(0.0) / params[0]).ln_1p()).exp_m1(),
            ResponseFamily::LogNormal => normal_cdf((y.ln() - params[0]) / params[1]),
            ResponseFamily::LogLogistic => logistic((y.ln() - params[0]) / params[1]),
        }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_derivatives(family: ResponseFamily, y: f64, eta: [f64; 2]) {
        let h = 1e-6;
        let t = family.terms(y, eta);
        for j in 0..family.n_parameters() {
            let mut up = eta;
            let mut dn = eta;
            up[j] += h;
            dn[j] -= h;
            let (tu, td) = (family.terms(y, up), family.terms(y, dn));
            let g = (tu.ll - td.ll) / (2.0 * h);
            assert!((g - t.grad[j]).abs() < 1e-6 * (1.0 + g.abs()), "{family:?} grad {j}");
            for k in 0..family.n_parameters() {
                let hk = (tu.grad[k] - td.grad[k]) / (2.0 * h);
                assert!((hk - t.hess[j][k]).abs() < 1e-5 * (1.0 + hk.abs()), "{family:?} hess {j}{k}");
            }
        }
    }

    #[test]
    fn analytic_derivatives() {
        for (y, eta) in [(0.3, [0.2, -0.4]), (7.0, [-1.0, 0.5]), (40.0, [1.5, 1.2])] {
            check_derivatives(ResponseFamily::Gpd, y, eta);
            check_derivatives(ResponseFamily::LogNormal, y, eta);
            check_derivatives(ResponseFamily::LogLogistic, y, eta);
        }
        check_derivatives(ResponseFamily::Poisson, 3.0, [0.7, 0.0]);
    }

    #[test]
    fn log_logistic_density_normalised() {
        let (m, s) = (0.5, 0.8f64);
        let f = |y: f64| {
            let t = ResponseFamily::LogLogistic.terms(y, [m, s.ln()]);
            (t.ll + ResponseFamily::LogLogistic.ll_constant(y)).exp()
        };
        let r = crate::quad::integrate(|u: f64| {
            let y = (u / (1.0 - u)).max(1e-300);
            f(y) / ((1.0 - u) * (1.0 - u))
        }, 0.0, 1.0, 1e-12, 1e-10, 500);
        assert!((r.value - 1.0).abs() < 1e-7);
    }
}
