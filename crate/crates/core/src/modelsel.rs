//! Joint versus per-risk-type severity models, the variance form of the
//! Vuong closeness test, and family goodness-of-fit tables.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateRow, RiskType};
use crate::dists::{chi_squared_sf, fit_family_mle, FamilyTag};
use crate::gamlss::{fit_gpd_regression, LinkModelSpec, RegressionFit, ResponseFamily};
use crate::tail::ks_test;
use crate::{Error, Result};

/// Dummy columns for the risk types present, omitting a reference level:
/// the baseline type when present, else the first type present.
pub fn risk_type_columns(types: &[RiskType]) -> Vec<String> {
    let present: std::collections::BTreeSet<RiskType> = types.iter().copied().collect();
    let reference = if present.contains(&RiskType::BASELINE) {
        RiskType::BASELINE
    } else {
        *present.iter().next().unwrap_or(&RiskType::BASELINE)
    };
    RiskType::ALL
        .iter()
        .filter(|rt| present.contains(rt) && **rt != reference)
        .map(|rt| format!("RT_{}", rt.slug()))
        .collect()
}

fn check_types(n: usize, types: &[RiskType]) -> Result<()> {
    if types.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: types.len() });
    }
    Ok(())
}

/// One GPD regression over all risk types with type dummies in both
/// `log μ` and `log τ`. `rows` must carry the `RT_*` columns.
pub fn fit_joint_model(
    exceedances: &[f64],
    rows: &[CovariateRow],
    types: &[RiskType],
    spec: &LinkModelSpec,
) -> Result<RegressionFit> {
    check_types(exceedances.len(), types)?;
    let distinct: std::collections::BTreeSet<_> = types.iter().collect();
    if distinct.len() < 2 {
        return Err(Error::Precondition(format!(
            "joint model needs at least two risk types, found {}",
            distinct.len()
        )));
    }
    let mut s = spec.clone();
    s.design_columns.retain(|c| !c.starts_with("RT_"));
    s.design_columns.extend(risk_type_columns(types));
    fit_gpd_regression(exceedances, rows, &s)
}

/// Separate GPD regressions per risk type, in type order.
pub fn fit_decoupled_models(
    exceedances: &[f64],
    rows: &[CovariateRow],
    types: &[RiskType],
    spec: &LinkModelSpec,
) -> Result<BTreeMap<RiskType, Result<RegressionFit>>> {
    check_types(exceedances.len(), types)?;
    if rows.len() != exceedances.len() {
        return Err(Error::LengthMismatch { expected: exceedances.len(), got: rows.len() });
    }
    let mut groups: BTreeMap<RiskType, (Vec<f64>, Vec<CovariateRow>)> = BTreeMap::new();
    for ((y, row), rt) in exceedances.iter().zip(rows).zip(types) {
        let g = groups.entry(*rt).or_default();
        g.0.push(*y);
        g.1.push(row.clone());
    }
    let mut s = spec.clone();
    s.design_columns.retain(|c| !c.starts_with("RT_"));
    let fits: Vec<(RiskType, Result<RegressionFit>)> = groups
        .into_par_iter()
        .map(|(rt, (y, r))| (rt, fit_gpd_regression(&y, &r, &s)))
        .collect();
    Ok(fits.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VuongResult {
    /// `n` times the sample variance of the per-observation log ratios.
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub n: usize,
    /// Joint minus decoupled log-density, per observation.
    pub per_observation_llr: Vec<f64>,
}

/// Variance test of `H0`: joint and decoupled models are equally close to
/// the data. `dof` defaults to the larger model's coefficient count.
pub fn vuong_variance_test(
    joint: &RegressionFit,
    decoupled: &BTreeMap<RiskType, RegressionFit>,
    exceedances: &[f64],
    rows: &[CovariateRow],
    types: &[RiskType],
    dof: Option<usize>,
) -> Result<VuongResult> {
    check_types(exceedances.len(), types)?;
    let n = exceedances.len();
    if joint.n_obs != n {
        return Err(Error::Precondition(format!(
            "joint model fitted on {} observations, test given {n}",
            joint.n_obs
        )));
    }
    let mut per_type: BTreeMap<RiskType, usize> = BTreeMap::new();
    for rt in types {
        *per_type.entry(*rt).or_default() += 1;
    }
    for (rt, count) in &per_type {
        match decoupled.get(rt) {
            Some(f) if f.n_obs == *count => {}
            Some(f) => {
                return Err(Error::Precondition(format!(
                    "decoupled model for {rt} fitted on {} observations, test has {count}",
                    f.n_obs
                )))
            }
            None => return Err(Error::Precondition(format!("no decoupled model for {rt}"))),
        }
    }
    if decoupled.keys().any(|rt| !per_type.contains_key(rt)) {
        return Err(Error::Precondition("decoupled model for a type with no observations".into()));
    }

    let joint_ll = joint.log_densities(exceedances, rows)?;
    let mut llr = vec![0.0; n];
    for (rt, fit) in decoupled {
        let idx: Vec<usize> = (0..n).filter(|i| types[*i] == *rt).collect();
        let y: Vec<f64> = idx.iter().map(|i| exceedances[*i]).collect();
        let r: Vec<CovariateRow> = idx.iter().map(|i| rows[*i].clone()).collect();
        let ll = fit.log_densities(&y, &r)?;
        for (k, i) in idx.iter().enumerate() {
            llr[*i] = joint_ll[*i] - ll[k];
        }
    }

    let all_equal = llr.iter().all(|v| *v == llr[0]);
    let statistic = if all_equal || n < 2 {
        0.0
    } else {
        let mean = llr.iter().sum::<f64>() / n as f64;
        let var = llr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        n as f64 * var
    };
    let larger = joint
        .n_coefficients()
        .max(decoupled.values().map(|f| f.n_coefficients()).sum());
    let dof = dof.unwrap_or(larger).max(1);
    Ok(VuongResult {
        statistic,
        dof,
        p_value: chi_squared_sf(statistic, dof as f64),
        n,
        per_observation_llr: llr,
    })
}

/// One cell of a family goodness-of-fit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyComparisonRow {
    /// `all`, or the risk type's canonical name.
    pub group: String,
    pub family: FamilyTag,
    pub n: usize,
    pub log_likelihood: Option<f64>,
    pub aic: Option<f64>,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub error: Option<String>,
}

fn comparison_cell(group: String, losses: &[f64], family: FamilyTag) -> FamilyComparisonRow {
    let mut row = FamilyComparisonRow {
        group,
        family,
        n: losses.len(),
        log_likelihood: None,
        aic: None,
        ks_statistic: None,
        ks_p_value: None,
        error: None,
    };
    if losses.len() < 5 {
        row.error = Some(format!("needs at least 5 observations, got {}", losses.len()));
        return row;
    }
    match fit_family_mle(losses, family) {
        Ok(fit) => {
            row.log_likelihood = Some(fit.log_likelihood);
            row.aic = Some(fit.aic);
            match ks_test(losses, |x| fit.family.cdf(x)) {
                Ok(ks) => {
                    row.ks_statistic = Some(ks.statistic);
                    row.ks_p_value = Some(ks.p_value);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Fits each family to the pooled losses and, when `types` is given, to
/// each risk type separately. Failing cells carry their error.
pub fn family_comparison_table(
    losses: &[f64],
    families: &[FamilyTag],
    types: Option<&[RiskType]>,
) -> Result<Vec<FamilyComparisonRow>> {
    let mut groups: Vec<(String, Vec<f64>)> = vec![("all".into(), losses.to_vec())];
    if let Some(types) = types {
        check_types(losses.len(), types)?;
        let mut by: BTreeMap<RiskType, Vec<f64>> = BTreeMap::new();
        for (y, rt) in losses.iter().zip(types) {
            by.entry(*rt).or_default().push(*y);
        }
        groups.extend(by.into_iter().map(|(rt, v)| (rt.canonical_name().to_string(), v)));
    }
    let cells: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|g| (0..families.len()).map(move |f| (g, f)))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(g, f)| comparison_cell(groups[g].0.clone(), &groups[g].1, families[f]))
        .collect())
}

pub fn write_family_table_csv<W: Write>(writer: W, rows: &[FamilyComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "family", "n", "log_likelihood", "aic", "ks_statistic", "ks_p_value", "error"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.group.clone(),
            r.family.name().to_string(),
            r.n.to_string(),
            opt(r.log_likelihood),
            opt(r.aic),
            opt(r.ks_statistic),
            opt(r.ks_p_value),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// GPD link model with a linear time effect in both parameters.
pub fn default_severity_spec(design_columns: Vec<String>) -> LinkModelSpec {
    LinkModelSpec::new(ResponseFamily::Gpd, design_columns)
}
