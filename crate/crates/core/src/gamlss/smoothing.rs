use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_regression, LinkModelSpec, TimeEffect};
use crate::data::CovariateRow;
use crate::{Error, Result};

/// One grid point of a degrees-of-freedom search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPoint {
    /// Spline df per distribution parameter.
    pub dfs: Vec<f64>,
    pub aic: Option<f64>,
    pub effective_df: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingSelection {
    pub points: Vec<SmoothingPoint>,
    /// Index into `points` of the lowest AIC among successful fits.
    pub best: Option<usize>,
}

impl SmoothingSelection {
    pub fn best_dfs(&self) -> Option<&[f64]> {
        self.best.map(|i| self.points[i].dfs.as_slice())
    }
}

/// Fits the model at every combination of per-parameter spline df values
/// and picks the lowest AIC. Failed fits are kept in the table.
pub fn select_smoothing_df(
    response: &[f64],
    rows: &[CovariateRow],
    spec: &LinkModelSpec,
    df_grids: &[Vec<f64>],
) -> Result<SmoothingSelection> {
    if df_grids.len() != spec.family.n_parameters() || df_grids.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidParameter(format!(
            "need one nonempty df grid per parameter ({})",
            spec.family.n_parameters()
        )));
    }
    let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
    for grid in df_grids {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                grid.iter().map(move |df| {
                    let mut next = c.clone();
                    next.push(*df);
                    next
                })
            })
            .collect();
    }
    let points: Vec<SmoothingPoint> = combos
        .into_par_iter()
        .map(|dfs| {
            let s = spec
                .clone()
                .with_time_effects(dfs.iter().map(|d| TimeEffect::SplineDf(*d)).collect());
            match fit_regression(response, rows, &s) {
                Ok(fit) => SmoothingPoint {
                    dfs,
                    aic: Some(fit.aic),
                    effective_df: Some(fit.effective_df),
                    error: None,
                },
                Err(e) => SmoothingPoint { dfs, aic: None, effective_df: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let best = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.aic.map(|a| (i, a)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    Ok(SmoothingSelection { points, best })
}
