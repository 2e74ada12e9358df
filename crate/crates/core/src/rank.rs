//! Rank-transformed regression, concordance curves, Rank Graduation
//! Accuracy (RGA) and the subsample significance test built on it.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateRow, RiskType};
use crate::dists::{normal_cdf, VarianceGammaParams};
use crate::rng::substream;
use crate::{Error, Result};

/// Ranks where every observation at a level shares the level's rank and
/// `r_z = n_{z-1} + r_{z-1}`, i.e. one plus the count of smaller values.
pub fn rank_transform(y: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|a, b| y[*a].total_cmp(&y[*b]));
    let mut ranks = vec![0.0; y.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && y[order[j + 1]] == y[order[i]] {
            j += 1;
        }
        for k in i..=j {
            ranks[order[k]] = (i + 1) as f64;
        }
        i = j + 1;
    }
    ranks
}

/// Response, its ranks and a regression design with an intercept.
#[derive(Debug, Clone)]
pub struct RankedDataset {
    pub response: Vec<f64>,
    pub ranks: Vec<f64>,
    pub mean_rank: f64,
    /// Design column names, `intercept` first.
    pub columns: Vec<String>,
    pub design: DMatrix<f64>,
}

impl RankedDataset {
    pub fn new(response: &[f64], rows: &[CovariateRow], columns: &[String]) -> Result<Self> {
        if response.is_empty() {
            return Err(Error::TooFewObservations { needed: 1, got: 0 });
        }
        if rows.len() != response.len() {
            return Err(Error::LengthMismatch { expected: response.len(), got: rows.len() });
        }
        let mut names = vec!["intercept".to_string()];
        names.extend(columns.iter().filter(|c| *c != "intercept").cloned());
        let mut design = DMatrix::zeros(response.len(), names.len());
        for (i, r) in rows.iter().enumerate() {
            design[(i, 0)] = 1.0;
            for (j, c) in names.iter().enumerate().skip(1) {
                design[(i, j)] = r
                    .get(c)
                    .ok_or_else(|| Error::ColumnMismatch(format!("row has no column `{c}`")))?;
            }
        }
        let ranks = rank_transform(response);
        let mean_rank = ranks.iter().sum::<f64>() / ranks.len() as f64;
        Ok(Self { response: response.to_vec(), ranks, mean_rank, columns: names, design })
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Indices of the named columns (intercept always included).
    fn column_indices(&self, columns: &[String]) -> Result<Vec<usize>> {
        let mut idx = vec![0];
        for c in columns.iter().filter(|c| *c != "intercept") {
            let j = self
                .columns
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::ColumnMismatch(format!("dataset has no column `{c}`")))?;
            if !idx.contains(&j) {
                idx.push(j);
            }
        }
        Ok(idx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOlsFit {
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_ratios: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residual_variance: f64,
}

fn ols_full_rank(x: &DMatrix<f64>, r: &DVector<f64>, names: &[String]) -> Result<RankOlsFit> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::TooFewObservations { needed: p + 1, got: n });
    }
    let qr = x.clone().qr();
    let rmat = qr.r();
    let scale = (0..p).map(|j| x.column(j).norm()).fold(0.0, f64::max);
    for j in 0..p {
        if rmat[(j, j)].abs() <= 1e-10 * scale.max(1.0) {
            return Err(Error::RankDeficient(format!(
                "column `{}` is linearly dependent on earlier columns",
                names[j]
            )));
        }
    }
    let qtr = qr.q().transpose() * r;
    let beta = rmat
        .solve_upper_triangular(&qtr)
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
    let fitted = x * &beta;
    let resid = r - &fitted;
    let sigma2 = resid.norm_squared() / (n - p) as f64;
    let rinv = rmat
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient("triangular inverse failed".into()))?;
    let cov = &rinv * rinv.transpose() * sigma2;
    let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    Ok(RankOlsFit {
        columns: names.to_vec(),
        coefficients: beta.iter().copied().collect(),
        t_ratios: beta.iter().zip(&se).map(|(b, s)| b / s).collect(),
        standard_errors: se,
        fitted: fitted.iter().copied().collect(),
        residual_variance: sigma2,
    })
}

/// Least squares of ranks on the full design.
pub fn fit_rank_ols(ranked: &RankedDataset) -> Result<RankOlsFit> {
    let r = DVector::from_column_slice(&ranked.ranks);
    ols_full_rank(&ranked.design, &r, &ranked.columns)
}

/// Least squares on a subset of columns.
pub fn fit_rank_ols_columns(ranked: &RankedDataset, columns: &[String]) -> Result<RankOlsFit> {
    let idx = ranked.column_indices(columns)?;
    let x = ranked.design.select_columns(&idx);
    let names: Vec<String> = idx.iter().map(|j| ranked.columns[*j].clone()).collect();
    let r = DVector::from_column_slice(&ranked.ranks);
    ols_full_rank(&x, &r, &names)
}

/// Fitted values of a least-squares projection; unique even when the
/// design is rank deficient.
fn projection(x: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let svd = x.clone().svd(true, true);
    let beta = svd
        .solve(r, 1e-10 * svd.singular_values.max().max(1.0))
        .expect("SVD with both factors");
    x * beta
}

fn predicted_order(predicted: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predicted.len()).collect();
    // stable sort keeps original index order among tied predictions
    order.sort_by(|a, b| predicted[*a].total_cmp(&predicted[*b]));
    order
}

/// Points `(i/n, Σ_{j≤i} r_(j) / (n r̄))` with observations taken in
/// ascending order of predicted rank.
pub fn concordance_curve(ranks: &[f64], predicted: &[f64]) -> Result<Vec<(f64, f64)>> {
    if ranks.len() != predicted.len() {
        return Err(Error::LengthMismatch { expected: ranks.len(), got: predicted.len() });
    }
    let n = ranks.len();
    let total: f64 = ranks.iter().sum();
    let mut cum = 0.0;
    Ok(predicted_order(predicted)
        .into_iter()
        .enumerate()
        .map(|(i, j)| {
            cum += ranks[j];
            ((i + 1) as f64 / n as f64, cum / total)
        })
        .collect())
}

/// Rank Graduation Accuracy `Σ_i (n/i) (C_i - i/n)²` of the concordance
/// curve `C` against the bisector.
pub fn rga(ranks: &[f64], predicted: &[f64]) -> Result<f64> {
    if ranks.len() != predicted.len() {
        return Err(Error::LengthMismatch { expected: ranks.len(), got: predicted.len() });
    }
    let n = ranks.len() as f64;
    let total: f64 = ranks.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    // same sum as (n C_i − i T)² / i over n T², which stays exact for integer ranks
    let mut cum = 0.0;
    let s: f64 = predicted_order(predicted)
        .into_iter()
        .enumerate()
        .map(|(i, j)| {
            cum += ranks[j];
            let i = (i + 1) as f64;
            let d = n * cum - i * total;
            d * d / i
        })
        .sum();
    Ok(s / (n * total * total))
}

pub fn write_concordance_csv<W: Write>(writer: W, curve: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "y"])?;
    for (x, y) in curve {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SClass {
    NeverSignificant,
    RarelySignificant,
    SometimesSignificant,
    FrequentlySignificant,
    AlmostAlwaysSignificant,
}

impl SClass {
    pub fn from_s_value(s: f64) -> Self {
        if s <= 0.0 {
            SClass::NeverSignificant
        } else if s <= 0.3 {
            SClass::RarelySignificant
        } else if s <= 0.5 {
            SClass::SometimesSignificant
        } else if s <= 0.7 {
            SClass::FrequentlySignificant
        } else {
            SClass::AlmostAlwaysSignificant
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SClass::NeverSignificant => "Never significant",
            SClass::RarelySignificant => "Rarely significant",
            SClass::SometimesSignificant => "Sometimes significant",
            SClass::FrequentlySignificant => "Frequently significant",
            SClass::AlmostAlwaysSignificant => "Almost Always Significant",
        }
    }
}

/// Outcome of the binomial test on an s-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinomialDecision {
    /// Holm-adjusted p-value for the band the s-value falls in.
    pub p_value: f64,
    pub rejected: bool,
    /// Conclusion about the success probability `p`.
    pub conclusion: String,
}

fn z_of(s: f64, p0: f64, d: usize) -> f64 {
    (s - p0) / (p0 * (1.0 - p0) / d as f64).sqrt()
}

/// Normal-approximation tests of the s-value against the band edges 0.3,
/// 0.5 and 0.7; the two one-sided tests of a middle band are combined with
/// Holm's step-down procedure. `None` when the s-value is zero.
pub fn s_value_binomial_test(s: f64, d: usize, alpha_s: f64) -> Option<BinomialDecision> {
    if s <= 0.0 {
        return None;
    }
    let upper = |p0: f64| 1.0 - normal_cdf(z_of(s, p0, d));
    let lower = |p0: f64| normal_cdf(z_of(s, p0, d));
    let fmt = |v: f64| format!("{v:.1}");
    let banded = |lo: f64, hi: f64| {
        let p_lo = upper(lo);
        let p_hi = lower(hi);
        let (first, second) = if p_lo <= p_hi { (p_lo, p_hi) } else { (p_hi, p_lo) };
        let adj1 = (2.0 * first).min(1.0);
        let adj2 = adj1.max(second).min(1.0);
        let rejected = adj1 <= alpha_s && adj2 <= alpha_s;
        let conclusion = if rejected {
            format!("p in ({}, {}]", fmt(lo), fmt(hi))
        } else if p_lo > alpha_s {
            format!("p <= {}", fmt(lo))
        } else {
            format!("p > {}", fmt(hi))
        };
        BinomialDecision { p_value: adj2, rejected, conclusion }
    };
    Some(if s > 0.7 {
        let p = upper(0.7);
        let rejected = p <= alpha_s;
        BinomialDecision {
            p_value: p,
            rejected,
            conclusion: if rejected { "p > 0.7" } else { "p <= 0.7" }.into(),
        }
    } else if s > 0.5 {
        banded(0.5, 0.7)
    } else if s > 0.3 {
        banded(0.3, 0.5)
    } else {
        let p = lower(0.3);
        let rejected = p <= alpha_s;
        BinomialDecision {
            p_value: p,
            rejected,
            conclusion: if rejected { "p <= 0.3" } else { "p > 0.3" }.into(),
        }
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RgaTestOptions {
    pub subsamples: usize,
    pub subsample_size: usize,
    /// Two-sided level of the variance-gamma critical value.
    pub alpha: f64,
    /// Level of the binomial test on the s-value.
    pub alpha_s: f64,
    /// Refit both models on every subsample; otherwise predict with the
    /// full-sample coefficients.
    pub refit: bool,
    pub seed: u64,
}

impl Default for RgaTestOptions {
    fn default() -> Self {
        Self { subsamples: 5000, subsample_size: 10, alpha: 0.05, alpha_s: 0.05, refit: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgaTestOutcome {
    pub rga_full: f64,
    pub rga_restricted: f64,
    /// `n r̄ (RGA_full − RGA_restricted)` on the whole sample.
    pub t_statistic: f64,
    pub critical_value: f64,
    pub s_value: f64,
    pub s_class: SClass,
    pub binomial: Option<BinomialDecision>,
    pub subsample_t: Vec<f64>,
}

/// `T = n r̄ (RGA_full − RGA_restricted)`.
pub fn t_statistic(ranks: &[f64], full_pred: &[f64], restricted_pred: &[f64]) -> Result<f64> {
    let n = ranks.len() as f64;
    let mean = ranks.iter().sum::<f64>() / n;
    Ok(n * mean * (rga(ranks, full_pred)? - rga(ranks, restricted_pred)?))
}

fn check_options(opts: &RgaTestOptions, n: usize, p_full: usize) -> Result<()> {
    if opts.subsamples == 0 {
        return Err(Error::InvalidParameter("need at least one subsample".into()));
    }
    if opts.subsample_size > n || opts.subsample_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "subsample size {} must lie in [2, {n}]",
            opts.subsample_size
        )));
    }
    if opts.refit && opts.subsample_size <= p_full {
        return Err(Error::TooFewObservations { needed: p_full + 1, got: opts.subsample_size });
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0 && opts.alpha_s > 0.0 && opts.alpha_s < 1.0) {
        return Err(Error::InvalidParameter("significance levels must lie in (0, 1)".into()));
    }
    Ok(())
}

fn linear_predict(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    (x * DVector::from_column_slice(beta)).iter().copied().collect()
}

/// Subsample RGA test of `full_columns` against `restricted_columns`.
pub fn rga_significance_test(
    ranked: &RankedDataset,
    full_columns: &[String],
    restricted_columns: &[String],
    opts: &RgaTestOptions,
) -> Result<RgaTestOutcome> {
    let full_idx = ranked.column_indices(full_columns)?;
    let rest_idx = ranked.column_indices(restricted_columns)?;
    check_options(opts, ranked.len(), full_idx.len())?;

    let x_full = ranked.design.select_columns(&full_idx);
    let x_rest = ranked.design.select_columns(&rest_idx);
    let fit_full = fit_rank_ols_columns(ranked, full_columns)?;
    let fit_rest = fit_rank_ols_columns(ranked, restricted_columns)?;
    let rga_full = rga(&ranked.ranks, &fit_full.fitted)?;
    let rga_restricted = rga(&ranked.ranks, &fit_rest.fitted)?;
    let t_all = t_statistic(&ranked.ranks, &fit_full.fitted, &fit_rest.fitted)?;

    let m = opts.subsample_size;
    let reference = VarianceGammaParams::rga_reference(m)?;
    let critical = reference.upper_quantile(opts.alpha / 2.0)?.abs();
    let same = full_idx.iter().collect::<std::collections::BTreeSet<_>>()
        == rest_idx.iter().collect::<std::collections::BTreeSet<_>>();

    let subsample_t: Vec<f64> = (0..opts.subsamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(opts.seed, b as u64);
            let idx = sample_indices(&mut rng, ranked.len(), m).into_vec();
            let y: Vec<f64> = idx.iter().map(|i| ranked.response[*i]).collect();
            let r = rank_transform(&y);
            if same {
                return 0.0;
            }
            let xf = x_full.select_rows(&idx);
            let xr = x_rest.select_rows(&idx);
            let (pf, pr) = if opts.refit {
                let rv = DVector::from_column_slice(&r);
                (
                    projection(&xf, &rv).iter().copied().collect::<Vec<_>>(),
                    projection(&xr, &rv).iter().copied().collect::<Vec<_>>(),
                )
            } else {
                (linear_predict(&xf, &fit_full.coefficients), linear_predict(&xr, &fit_rest.coefficients))
            };
            t_statistic(&r, &pf, &pr).expect("matching lengths")
        })
        .collect();

    let hits = subsample_t.iter().filter(|t| **t >= critical).count();
    let s_value = hits as f64 / opts.subsamples as f64;
    Ok(RgaTestOutcome {
        rga_full,
        rga_restricted,
        t_statistic: t_all,
        critical_value: critical,
        s_value,
        s_class: SClass::from_s_value(s_value),
        binomial: s_value_binomial_test(s_value, opts.subsamples, opts.alpha_s),
        subsample_t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSeparateOutcome {
    pub s_value: f64,
    pub s_class: SClass,
    pub binomial: Option<BinomialDecision>,
    pub critical_value: f64,
    pub types: Vec<RiskType>,
}

/// Pooled rank regression with type intercepts against per-type
/// regressions (every covariate interacted with type), on stratified
/// subsamples of `opts.subsample_size` observations per type. Both models
/// are scored on the pooled ranks of each subsample.
pub fn joint_vs_separate_rank_test(
    response: &[f64],
    rows: &[CovariateRow],
    types: &[RiskType],
    columns: &[String],
    opts: &RgaTestOptions,
) -> Result<JointSeparateOutcome> {
    if types.len() != response.len() || rows.len() != response.len() {
        return Err(Error::LengthMismatch { expected: response.len(), got: types.len().min(rows.len()) });
    }
    let mut by_type: BTreeMap<RiskType, Vec<usize>> = BTreeMap::new();
    for (i, t) in types.iter().enumerate() {
        by_type.entry(*t).or_default().push(i);
    }
    if by_type.len() < 2 {
        return Err(Error::Precondition(format!(
            "joint versus separate test needs at least two risk types, found {}",
            by_type.len()
        )));
    }
    let kinds: Vec<RiskType> = by_type.keys().copied().collect();
    let per = opts.subsample_size;
    let p_sep = kinds.len() * (1 + columns.len());
    if let Some((rt, v)) = by_type.iter().find(|(_, v)| v.len() < per) {
        return Err(Error::Precondition(format!(
            "{rt} has {} observations, fewer than the per-type subsample size {per}",
            v.len()
        )));
    }
    let m = per * kinds.len();
    if opts.subsamples == 0 || m <= p_sep {
        return Err(Error::TooFewObservations { needed: p_sep + 1, got: m });
    }

    let reference = VarianceGammaParams::rga_reference(m)?;
    let critical = reference.upper_quantile(opts.alpha / 2.0)?.abs();
    let base: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| columns.iter().map(|c| r.get(c)).collect::<Option<Vec<f64>>>())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::ColumnMismatch("rows lack a requested column".into()))?;

    let t_values: Vec<f64> = (0..opts.subsamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(opts.seed, b as u64);
            let mut idx = Vec::with_capacity(m);
            for rt in &kinds {
                let pool = &by_type[rt];
                idx.extend(sample_indices(&mut rng, pool.len(), per).into_iter().map(|k| pool[k]));
            }
            let y: Vec<f64> = idx.iter().map(|i| response[*i]).collect();
            let r = DVector::from_column_slice(&rank_transform(&y));
            let q = columns.len();
            let s = kinds.len();
            // joint: intercept, type intercepts, shared slopes
            let mut xj = DMatrix::zeros(m, s + q);
            // separate: per-type intercept and slopes
            let mut xs = DMatrix::zeros(m, s * (1 + q));
            for (row, i) in idx.iter().enumerate() {
                let k = kinds.iter().position(|t| *t == types[*i]).expect("known type");
                xj[(row, 0)] = 1.0;
                if k > 0 {
                    xj[(row, k)] = 1.0;
                }
                for (c, v) in base[*i].iter().enumerate() {
                    xj[(row, s + c)] = *v;
                    xs[(row, k * (1 + q) + 1 + c)] = *v;
                }
                xs[(row, k * (1 + q))] = 1.0;
            }
            let pj: Vec<f64> = projection(&xj, &r).iter().copied().collect();
            let ps: Vec<f64> = projection(&xs, &r).iter().copied().collect();
            t_statistic(r.as_slice(), &ps, &pj).expect("matching lengths")
        })
        .collect();
    let hits = t_values.iter().filter(|t| **t >= critical).count();
    let s_value = hits as f64 / opts.subsamples as f64;
    Ok(JointSeparateOutcome {
        s_value,
        s_class: SClass::from_s_value(s_value),
        binomial: s_value_binomial_test(s_value, opts.subsamples, opts.alpha_s),
        critical_value: critical,
        types: kinds,
    })
}

/// One line of a covariate significance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTableRow {
    pub covariate: String,
    /// RGA of the model without this covariate.
    pub rga: f64,
    pub s_value: f64,
    pub p_s_value: Option<f64>,
    pub result: Option<String>,
    pub s_class: String,
}

/// Drops each covariate in turn and tests the full model against the
/// restricted one.
pub fn covariate_significance_table(
    ranked: &RankedDataset,
    covariates: &[String],
    opts: &RgaTestOptions,
) -> Result<Vec<RankTableRow>> {
    covariates
        .iter()
        .map(|c| {
            let rest: Vec<String> = covariates.iter().filter(|x| *x != c).cloned().collect();
            let out = rga_significance_test(ranked, covariates, &rest, opts)?;
            Ok(RankTableRow {
                covariate: c.clone(),
                rga: out.rga_restricted,
                s_value: out.s_value,
                p_s_value: out.binomial.as_ref().map(|b| b.p_value),
                result: out.binomial.as_ref().map(|b| b.conclusion.clone()),
                s_class: out.s_class.label().to_string(),
            })
        })
        .collect()
}

pub fn write_rank_table_csv<W: Write>(writer: W, rows: &[RankTableRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["covariate", "rga", "s_value", "p_s_value", "result", "s_class"])?;
    for r in rows {
        w.write_record([
            r.covariate.clone(),
            r.rga.to_string(),
            r.s_value.to_string(),
            r.p_s_value.map(|p| p.to_string()).unwrap_or_else(|| "-".into()),
            r.result.clone().unwrap_or_else(|| "-".into()),
            r.s_class.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
