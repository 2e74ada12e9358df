use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use super::gamma::{digamma, ln_gamma};
use super::gpd::{fit_gpd_mle, validate_positive_sample, GpdParams};
use super::normal::normal_cdf;
use crate::optim::{minimize_bfgs, BfgsOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FamilyTag {
    Exponential,
    Gamma,
    Gpd,
    LogLogistic,
    LogNormal,
    Weibull,
}

impl FamilyTag {
    pub const ALL: [FamilyTag; 6] = [
        FamilyTag::Exponential,
        FamilyTag::Gamma,
        FamilyTag::Gpd,
        FamilyTag::LogLogistic,
        FamilyTag::LogNormal,
        FamilyTag::Weibull,
    ];

    pub fn arity(self) -> usize {
        match self {
            FamilyTag::Exponential => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyTag::Exponential => "Exponential",
            FamilyTag::Gamma => "Gamma",
            FamilyTag::Gpd => "Generalized Pareto",
            FamilyTag::LogLogistic => "Log-logistic",
            FamilyTag::LogNormal => "Lognormal",
            FamilyTag::Weibull => "Weibull",
        }
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "exponential" | "exp" => FamilyTag::Exponential,
            "gamma" => FamilyTag::Gamma,
            "gpd" | "generalizedpareto" | "pareto" => FamilyTag::Gpd,
            "loglogistic" => FamilyTag::LogLogistic,
            "lognormal" => FamilyTag::LogNormal,
            "weibull" => FamilyTag::Weibull,
            _ => return Err(Error::Unsupported(format!("severity family `{s}`"))),
        })
    }
}

/// A fitted or user-specified severity law.
///
/// `LogNormal` and `LogLogistic` are parameterised by the location and scale
/// of `ln Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SeverityFamily {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Gpd(GpdParams),
    LogLogistic { location: f64, scale: f64 },
    LogNormal { location: f64, scale: f64 },
    Weibull { shape: f64, scale: f64 },
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl SeverityFamily {
    pub fn tag(&self) -> FamilyTag {
        match self {
            SeverityFamily::Exponential { .. } => FamilyTag::Exponential,
            SeverityFamily::Gamma { .. } => FamilyTag::Gamma,
            SeverityFamily::Gpd(_) => FamilyTag::Gpd,
            SeverityFamily::LogLogistic { .. } => FamilyTag::LogLogistic,
            SeverityFamily::LogNormal { .. } => FamilyTag::LogNormal,
            SeverityFamily::Weibull { .. } => FamilyTag::Weibull,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            SeverityFamily::Exponential { rate } => vec![rate],
            SeverityFamily::Gamma { shape, rate } => vec![shape, rate],
            SeverityFamily::Gpd(p) => vec![p.scale_mu, p.tail_tau],
            SeverityFamily::LogLogistic { location, scale }
            | SeverityFamily::LogNormal { location, scale } => vec![location, scale],
            SeverityFamily::Weibull { shape, scale } => vec![shape, scale],
        }
    }

    pub fn from_parts(tag: FamilyTag, params: &[f64]) -> Result<Self> {
        if params.len() != tag.arity() {
            return Err(Error::LengthMismatch {
                expected: tag.arity(),
                got: params.len(),
            });
        }
        Ok(match tag {
            FamilyTag::Exponential => SeverityFamily::Exponential {
                rate: positive("rate", params[0])?,
            },
            FamilyTag::Gamma => SeverityFamily::Gamma {
                shape: positive("shape", params[0])?,
                rate: positive("rate", params[1])?,
            },
            FamilyTag::Gpd => SeverityFamily::Gpd(GpdParams::new(params[0], params[1])?),
            FamilyTag::LogLogistic => SeverityFamily::LogLogistic {
                location: params[0],
                scale: positive("scale", params[1])?,
            },
            FamilyTag::LogNormal => SeverityFamily::LogNormal {
                location: params[0],
                scale: positive("scale", params[1])?,
            },
            FamilyTag::Weibull => SeverityFamily::Weibull {
                shape: positive("shape", params[0])?,
                scale: positive("scale", params[1])?,
            },
        })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return if x == 0.0 {
                match self {
                    SeverityFamily::Gpd(p) => p.ln_pdf(0.0),
                    SeverityFamily::Exponential { rate } => rate.ln(),
                    _ => f64::NEG_INFINITY,
                }
            } else {
                f64::NEG_INFINITY
            };
        }
        match *self {
            SeverityFamily::Exponential { rate } => rate.ln() - rate * x,
            SeverityFamily::Gamma { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            SeverityFamily::Gpd(p) => p.ln_pdf(x),
            SeverityFamily::LogLogistic { location, scale } => {
                let z = (x.ln() - location) / scale;
                -x.ln() - scale.ln() - z - 2.0 * softplus(-z)
            }
            SeverityFamily::LogNormal { location, scale } => {
                let z = (x.ln() - location) / scale;
                -x.ln() - scale.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z
            }
            SeverityFamily::Weibull { shape, scale } => {
                let z = (x / scale).ln();
                shape.ln() - scale.ln() + (shape - 1.0) * z - (shape * z).exp()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            SeverityFamily::Exponential { rate } => -(-rate * x).exp_m1(),
            SeverityFamily::Gamma { shape, rate } => gamma_lr(shape, rate * x),
            SeverityFamily::Gpd(p) => p.cdf(x).unwrap_or(0.0),
            SeverityFamily::LogLogistic { location, scale } => {
                logistic((x.ln() - location) / scale)
            }
            SeverityFamily::LogNormal { location, scale } => {
                normal_cdf((x.ln() - location) / scale)
            }
            SeverityFamily::Weibull { shape, scale } => -(-(x / scale).powf(shape)).exp_m1(),
        }
    }

    pub fn log_likelihood(&self, sample: &[f64]) -> f64 {
        sample.iter().map(|&x| self.ln_pdf(x)).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyFit {
    pub family: SeverityFamily,
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_params: usize,
    /// Zero spread in the data: the fitted scale is 0 and the likelihood is
    /// unbounded.
    pub degenerate: bool,
}

impl FamilyFit {
    fn new(family: SeverityFamily, log_likelihood: f64) -> Self {
        let n_params = family.tag().arity();
        Self {
            family,
            log_likelihood,
            aic: -2.0 * log_likelihood + 2.0 * n_params as f64,
            n_params,
            degenerate: false,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn numeric_fit<F>(objective: F, x0: [f64; 2], what: &str) -> Result<[f64; 2]>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let m = minimize_bfgs(objective, &x0, &BfgsOptions::default());
    if !m.converged {
        return Err(Error::NonConvergence {
            iterations: m.iterations,
            reason: format!("{what} fit: gradient norm {:.3e}", m.grad_norm()),
            trace: m.trace.iter().map(|v| -v).collect(),
        });
    }
    Ok([m.x[0], m.x[1]])
}

/// Maximum-likelihood fit of one candidate severity family. AIC is
/// `-2ℓ + 2p`.
pub fn fit_family_mle(losses: &[f64], tag: FamilyTag) -> Result<FamilyFit> {
    let closed_form = matches!(tag, FamilyTag::Exponential | FamilyTag::LogNormal);
    validate_positive_sample(losses, if closed_form { 1 } else { 5 })?;
    let n = losses.len() as f64;
    let logs: Vec<f64> = losses.iter().map(|y| y.ln()).collect();
    let log_mean = mean(&logs);
    let log_sd = (logs.iter().map(|l| (l - log_mean).powi(2)).sum::<f64>() / n).sqrt();
    if !closed_form && log_sd == 0.0 {
        return Err(Error::Degenerate(format!(
            "{tag} fit on a sample with no spread"
        )));
    }

    match tag {
        FamilyTag::Exponential => {
            let family = SeverityFamily::Exponential {
                rate: 1.0 / mean(losses),
            };
            Ok(FamilyFit::new(family, family.log_likelihood(losses)))
        }
        FamilyTag::LogNormal => {
            if log_sd == 0.0 {
                return Ok(FamilyFit {
                    family: SeverityFamily::LogNormal {
                        location: log_mean,
                        scale: 0.0,
                    },
                    log_likelihood: f64::INFINITY,
                    aic: f64::NEG_INFINITY,
                    n_params: 2,
                    degenerate: true,
                });
            }
            let family = SeverityFamily::LogNormal {
                location: log_mean,
                scale: log_sd,
            };
            Ok(FamilyFit::new(family, family.log_likelihood(losses)))
        }
        FamilyTag::Gpd => {
            let fit = fit_gpd_mle(losses)?;
            Ok(FamilyFit::new(
                SeverityFamily::Gpd(fit.params),
                fit.log_likelihood,
            ))
        }
        FamilyTag::Gamma => {
            let ybar = mean(losses);
            let sum_y: f64 = losses.iter().sum();
            let sum_log: f64 = logs.iter().sum();
            let s = ybar.ln() - log_mean;
            let k0 = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
            let x = numeric_fit(
                |x, g| {
                    let (k, beta) = (x[0].exp(), x[1].exp());
                    let ll = n * (k * x[1] - ln_gamma(k)) + (k - 1.0) * sum_log - beta * sum_y;
                    g[0] = -k * (n * (x[1] - digamma(k)) + sum_log);
                    g[1] = -(n * k - beta * sum_y);
                    -ll
                },
                [k0.ln(), (k0 / ybar).ln()],
                "gamma",
            )?;
            let family = SeverityFamily::Gamma {
                shape: x[0].exp(),
                rate: x[1].exp(),
            };
            Ok(FamilyFit::new(family, family.log_likelihood(losses)))
        }
        FamilyTag::Weibull => {
            let k0 = std::f64::consts::PI / (log_sd * 6f64.sqrt());
            let lam0 = log_mean + 0.577_215_664_9 / k0;
            let x = numeric_fit(
                |x, g| {
                    let (k, ln_lam) = (x[0].exp(), x[1]);
                    let mut ll = 0.0;
                    let (mut gk, mut gl) = (0.0, 0.0);
                    for &ly in &logs {
                        let z = ly - ln_lam;
                        let e = (k * z).exp();
                        ll += x[0] - ln_lam + (k - 1.0) * z - e;
                        gk += 1.0 + k * z - k * z * e;
                        gl += -k + k * e;
                    }
                    g[0] = -gk;
                    g[1] = -gl;
                    -ll
                },
                [k0.ln(), lam0],
                "Weibull",
            )?;
            let family = SeverityFamily::Weibull {
                shape: x[0].exp(),
                scale: x[1].exp(),
            };
            Ok(FamilyFit::new(family, family.log_likelihood(losses)))
        }
        FamilyTag::LogLogistic => {
            let mut sorted = logs.clone();
            sorted.sort_by(f64::total_cmp);
            let m0 = sorted[sorted.len() / 2];
            let s0 = log_sd * 3f64.sqrt() / std::f64::consts::PI;
            let x = numeric_fit(
                |x, g| {
                    let (m, ln_s) = (x[0], x[1]);
                    let s = ln_s.exp();
                    let mut ll = 0.0;
                    let (mut gm, mut gs) = (0.0, 0.0);
                    for &ly in &logs {
                        let z = (ly - m) / s;
                        let p = logistic(z);
                        ll += -ly - ln_s - z - 2.0 * softplus(-z);
                        gm += (2.0 * p - 1.0) / s;
                        gs += -1.0 - z * (1.0 - 2.0 * p);
                    }
                    g[0] = -gm;
                    g[1] = -gs;
                    -ll
                },
                [m0, s0.ln()],
                "log-logistic",
            )?;
            let family = SeverityFamily::LogLogistic {
                location: x[0],
                scale: x[1].exp(),
            };
            Ok(FamilyFit::new(family, family.log_likelihood(losses)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_rate_is_inverse_mean() {
        let fit = fit_family_mle(&[1.0, 2.0, 3.0], FamilyTag::Exponential).unwrap();
        assert_eq!(fit.family, SeverityFamily::Exponential { rate: 0.5 });
        assert_relative_eq!(fit.aic, -2.0 * fit.log_likelihood + 2.0);
    }

    #[test]
    fn lognormal_zero_spread_is_flagged() {
        let e = std::f64::consts::E;
        let fit = fit_family_mle(&[e, e, e], FamilyTag::LogNormal).unwrap();
        assert!(fit.degenerate);
        match fit.family {
            SeverityFamily::LogNormal { location, scale } => {
                assert_relative_eq!(location, 1.0, max_relative = 1e-15);
                assert_eq!(scale, 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn from_parts_checks_arity() {
        assert!(SeverityFamily::from_parts(FamilyTag::Gamma, &[1.0]).is_err());
        assert!(SeverityFamily::from_parts(FamilyTag::Weibull, &[1.0, -1.0]).is_err());
        let w = SeverityFamily::from_parts(FamilyTag::Weibull, &[2.0, 3.0]).unwrap();
        assert_eq!(w.params(), vec![2.0, 3.0]);
    }

    #[test]
    fn tag_parsing() {
        assert_eq!("log-normal".parse::<FamilyTag>().unwrap(), FamilyTag::LogNormal);
        assert_eq!("GPD".parse::<FamilyTag>().unwrap(), FamilyTag::Gpd);
        assert!("skew-normal".parse::<FamilyTag>().is_err());
    }

    #[test]
    fn numeric_families_need_five_points() {
        assert!(matches!(
            fit_family_mle(&[1.0, 2.0, 3.0], FamilyTag::Weibull),
            Err(Error::TooFewObservations { .. })
        ));
    }

    #[test]
    fn densities_integrate_to_cdf() {
        let fams = [
            SeverityFamily::Gamma { shape: 2.5, rate: 1.5 },
            SeverityFamily::Weibull { shape: 0.8, scale: 2.0 },
            SeverityFamily::LogLogistic { location: 0.3, scale: 0.7 },
            SeverityFamily::LogNormal { location: -0.2, scale: 1.1 },
        ];
        for f in fams {
            let r = crate::quad::integrate(|x| f.ln_pdf(x).exp(), 1e-12, 3.0, 1e-12, 1e-12, 400);
            assert_relative_eq!(r.value, f.cdf(3.0), max_relative = 1e-7);
        }
    }
}
