use serde::{Deserialize, Serialize};

use super::{RegressionFit, ResponseFamily};
use crate::data::CovariateRow;
use crate::dists::normal_quantile;
use crate::{Error, Result};

const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileResiduals {
    /// `Φ⁻¹(F̂(y_i))` in observation order.
    pub residuals: Vec<f64>,
    /// Residuals sorted ascending, paired with `theoretical`.
    pub sorted: Vec<f64>,
    /// Normal quantiles at plotting positions `(i - 0.5) / n`.
    pub theoretical: Vec<f64>,
    /// Observations whose fitted cdf value was clamped away from 0 or 1.
    pub clamped: Vec<usize>,
}

/// Normal quantile residuals of a fitted severity model.
pub fn quantile_residuals(fit: &RegressionFit, response: &[f64], rows: &[CovariateRow]) -> Result<QuantileResiduals> {
    if fit.family == ResponseFamily::Poisson {
        return Err(Error::Unsupported("quantile residuals for count models".into()));
    }
    if response.len() != rows.len() {
        return Err(Error::LengthMismatch { expected: response.len(), got: rows.len() });
    }
    if response.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let mut clamped = Vec::new();
    let mut residuals = Vec::with_capacity(response.len());
    for (i, (y, row)) in response.iter().zip(rows).enumerate() {
        let params = fit.predict(row)?;
        let mut u = fit.family.cdf(*y, &params);
        if !(CLAMP..=1.0 - CLAMP).contains(&u) {
            u = u.clamp(CLAMP, 1.0 - CLAMP);
            clamped.push(i);
        }
        residuals.push(normal_quantile(u));
    }
    let mut sorted = residuals.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let theoretical = (0..sorted.len())
        .map(|i| normal_quantile((i as f64 + 0.5) / n))
        .collect();
    Ok(QuantileResiduals { residuals, sorted, theoretical, clamped })
}
