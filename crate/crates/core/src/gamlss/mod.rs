//! Link-function regressions for frequency (Poisson) and severity (GPD,
//! LogNormal, LogLogistic) parameters, fitted by penalised maximum
//! likelihood with optional natural-spline time effects.

mod design;
mod engine;
mod family;
mod report;
mod residuals;
mod smoothing;
mod spline;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use design::DesignLayout;
pub use family::{Link, ResponseFamily};
pub use report::{significance_stars, CoefficientRow};
pub use residuals::{quantile_residuals, QuantileResiduals};
pub use smoothing::{select_smoothing_df, SmoothingPoint, SmoothingSelection};
pub use spline::NaturalSpline;

use crate::data::{CovariateRow, FrequencyRecord};
use crate::dists::{normal_sf, GpdParams};
use crate::{Error, Result};
use design::{build_block, BlockDesign};
use engine::{inverse_pd, Curvature, Problem};

/// How `time` enters one parameter's linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeEffect {
    Absent,
    Linear,
    /// Natural cubic spline whose smoothing parameter is chosen to give
    /// this many effective degrees of freedom (1 is a straight line).
    SplineDf(f64),
    /// Natural cubic spline with a fixed curvature penalty weight.
    SplineGamma(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModelSpec {
    pub family: ResponseFamily,
    /// Covariate columns shared by every parameter, besides the intercept.
    pub design_columns: Vec<String>,
    /// One entry per distribution parameter.
    pub time_effects: Vec<TimeEffect>,
    /// Threshold the exceedances were taken over (GPD only).
    pub threshold_u: Option<f64>,
    pub max_cycles: usize,
    pub max_newton: usize,
    /// Fail with `NonConvergence` instead of returning a flagged fit.
    pub require_convergence: bool,
}

impl LinkModelSpec {
    /// Linear time effect in every parameter.
    pub fn new(family: ResponseFamily, design_columns: Vec<String>) -> Self {
        Self {
            family,
            design_columns,
            time_effects: vec![TimeEffect::Linear; family.n_parameters()],
            threshold_u: (family == ResponseFamily::Gpd).then_some(0.0),
            max_cycles: 30,
            max_newton: 100,
            require_convergence: true,
        }
    }

    pub fn with_time_effects(mut self, effects: Vec<TimeEffect>) -> Self {
        self.time_effects = effects;
        self
    }

    pub fn with_threshold(mut self, u: f64) -> Self {
        self.threshold_u = Some(u);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.time_effects.len() != self.family.n_parameters() {
            return Err(Error::InvalidParameter(format!(
                "{} needs {} time effects, got {}",
                self.family.name(),
                self.family.n_parameters(),
                self.time_effects.len()
            )));
        }
        for t in &self.time_effects {
            match *t {
                TimeEffect::SplineDf(df) if !(df >= 1.0 && df.is_finite()) => {
                    return Err(Error::InvalidParameter(format!("spline df must be >= 1, got {df}")))
                }
                TimeEffect::SplineGamma(g) if !(g >= 0.0 && g.is_finite()) => {
                    return Err(Error::InvalidParameter(format!("smoothing weight must be >= 0, got {g}")))
                }
                _ => {}
            }
        }
        match (self.family, self.threshold_u) {
            (ResponseFamily::Gpd, Some(u)) if u >= 0.0 => Ok(()),
            (ResponseFamily::Gpd, _) => Err(Error::InvalidParameter("GPD model needs a threshold u >= 0".into())),
            (_, Some(_)) => Err(Error::InvalidParameter(format!(
                "threshold only applies to GPD, not {}",
                self.family.name()
            ))),
            _ => Ok(()),
        }
    }
}

/// Estimates for one distribution parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimates {
    pub parameter: String,
    pub link: Link,
    pub layout: DesignLayout,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub score_ratios: Vec<f64>,
    pub time_effect: TimeEffect,
    pub gamma: f64,
    /// Effective degrees of freedom of this parameter's predictor.
    pub edf: f64,
}

impl ParameterEstimates {
    pub fn columns(&self) -> &[String] {
        &self.layout.columns
    }

    /// Estimate and standard error of a named coefficient.
    pub fn coefficient(&self, column: &str) -> Option<(f64, f64)> {
        let j = self.layout.columns.iter().position(|c| c == column)?;
        Some((self.coefficients[j], self.standard_errors[j]))
    }

    pub fn linear_predictor(&self, row: &CovariateRow) -> Result<f64> {
        let x = self.layout.row_vector(row)?;
        Ok(x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionFit {
    pub family: ResponseFamily,
    pub parameters: Vec<ParameterEstimates>,
    pub log_likelihood: f64,
    pub penalized_log_likelihood: f64,
    /// `-2 ℓ + 2 · effective_df`.
    pub aic: f64,
    pub effective_df: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
    pub threshold_u: Option<f64>,
    pub dropped_columns: Vec<String>,
    pub warnings: Vec<String>,
    /// Penalised log-likelihood after each accepted step.
    pub trace: Vec<f64>,
}

impl RegressionFit {
    pub fn parameter(&self, name: &str) -> Option<&ParameterEstimates> {
        self.parameters.iter().find(|p| p.parameter == name)
    }

    pub fn coefficient(&self, parameter: &str, column: &str) -> Option<(f64, f64)> {
        self.parameter(parameter)?.coefficient(column)
    }

    pub fn n_coefficients(&self) -> usize {
        self.parameters.iter().map(|p| p.coefficients.len()).sum()
    }

    /// Natural parameters for `row`, in the family's parameter order.
    pub fn predict(&self, row: &CovariateRow) -> Result<Vec<f64>> {
        self.parameters
            .iter()
            .map(|p| Ok(p.link.inverse(p.linear_predictor(row)?)))
            .collect()
    }

    pub fn predict_lambda(&self, row: &CovariateRow) -> Result<f64> {
        if self.family != ResponseFamily::Poisson {
            return Err(Error::Unsupported(format!("{} fit has no intensity", self.family.name())));
        }
        Ok(self.predict(row)?[0])
    }

    pub fn predict_gpd(&self, row: &CovariateRow) -> Result<GpdParams> {
        if self.family != ResponseFamily::Gpd {
            return Err(Error::Unsupported(format!("{} fit has no GPD parameters", self.family.name())));
        }
        let p = self.predict(row)?;
        GpdParams::new(p[0], p[1])
    }

    /// Log-density of each observation under the fitted parameters.
    pub fn log_densities(&self, response: &[f64], rows: &[CovariateRow]) -> Result<Vec<f64>> {
        if response.len() != rows.len() {
            return Err(Error::LengthMismatch { expected: response.len(), got: rows.len() });
        }
        self.family.validate_response(response)?;
        response
            .iter()
            .zip(rows)
            .map(|(y, row)| {
                let mut eta = [0.0; 2];
                for (k, p) in self.parameters.iter().enumerate() {
                    eta[k] = p.linear_predictor(row)?;
                }
                Ok(self.family.terms(*y, eta).ll + self.family.ll_constant(*y))
            })
            .collect()
    }
}

/// Natural parameters of `row` under `fit`.
pub fn predict_parameters(fit: &RegressionFit, row: &CovariateRow) -> Result<Vec<f64>> {
    fit.predict(row)
}

struct Prepared {
    blocks: Vec<BlockDesign>,
    warnings: Vec<String>,
    dropped: Vec<String>,
}

fn nominal_columns(spec: &LinkModelSpec) -> usize {
    spec.time_effects
        .iter()
        .map(|t| {
            1 + spec.design_columns.len()
                + match t {
                    TimeEffect::Absent => 0,
                    _ => 1,
                }
        })
        .sum()
}

fn check_separation(y: &[f64], block: &BlockDesign) -> Result<()> {
    for (j, name) in block.columns.iter().enumerate() {
        let col = block.x.column(j);
        if !col.iter().all(|v| *v == 0.0 || *v == 1.0) || name == "intercept" {
            continue;
        }
        for level in [1.0, 0.0] {
            let (mut rows, mut total) = (0usize, 0.0);
            for (i, v) in col.iter().enumerate() {
                if *v == level {
                    rows += 1;
                    total += y[i];
                }
            }
            if rows > 0 && total == 0.0 {
                return Err(Error::Separation(format!(
                    "every row with `{name}` = {level} has a zero count"
                )));
            }
        }
    }
    Ok(())
}

/// Effective degrees of freedom of a block's time term:
/// `tr((A + 2γΩ)⁻¹ A)` minus the unpenalised non-time columns.
pub(crate) fn time_term_edf(a: &DMatrix<f64>, omega: &DMatrix<f64>, gamma: f64, n_time: usize) -> f64 {
    let m = a + omega * (2.0 * gamma);
    let Some(inv) = inverse_pd(&m) else { return f64::NAN };
    (inv * a).trace() - (a.nrows() - n_time) as f64
}

const GAMMA_RANGE: (f64, f64) = (-25.0, 25.0);

fn gamma_for_df(a: &DMatrix<f64>, omega: &DMatrix<f64>, n_time: usize, df: f64) -> f64 {
    let (lo_ln, hi_ln) = GAMMA_RANGE;
    if df >= time_term_edf(a, omega, 0.0, n_time) - 1e-9 {
        return 0.0;
    }
    if df <= time_term_edf(a, omega, hi_ln.exp(), n_time) {
        return hi_ln.exp();
    }
    let (mut lo, mut hi) = (lo_ln, hi_ln);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if time_term_edf(a, omega, mid.exp(), n_time) > df {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn prepare(response: &[f64], rows: &[CovariateRow], spec: &LinkModelSpec) -> Result<Prepared> {
    spec.validate()?;
    if response.len() != rows.len() {
        return Err(Error::LengthMismatch { expected: response.len(), got: rows.len() });
    }
    let needed = nominal_columns(spec);
    if response.len() < needed.max(1) {
        return Err(Error::TooFewObservations { needed, got: response.len() });
    }
    spec.family.validate_response(response)?;

    let mut warnings = Vec::new();
    let mut dropped = Vec::new();
    let names = spec.family.parameter_names();
    let links = spec.family.links();
    let mut blocks = Vec::with_capacity(names.len());
    for k in 0..names.len() {
        blocks.push(build_block(
            names[k],
            links[k],
            &spec.design_columns,
            spec.time_effects[k],
            rows,
            &mut warnings,
            &mut dropped,
        )?);
    }
    if spec.family == ResponseFamily::Poisson {
        check_separation(response, &blocks[0])?;
    }

    if blocks.iter().any(|b| matches!(b.time_effect, TimeEffect::SplineDf(_))) {
        // pilot fit with straight-line time effects supplies working weights
        let pilot_effects: Vec<TimeEffect> = spec
            .time_effects
            .iter()
            .map(|t| match t {
                TimeEffect::SplineDf(_) | TimeEffect::SplineGamma(_) => TimeEffect::Linear,
                other => *other,
            })
            .collect();
        let pilot_blocks = (0..names.len())
            .map(|k| {
                build_block(names[k], links[k], &spec.design_columns, pilot_effects[k], rows, &mut Vec::new(), &mut Vec::new())
            })
            .collect::<Result<Vec<_>>>()?;
        let pilot = Problem::new(spec.family, response, pilot_blocks);
        let res = pilot.fit(spec.max_cycles, spec.max_newton)?;
        let etas = pilot_etas(&pilot, &res.theta);
        for (k, b) in blocks.iter_mut().enumerate() {
            if let TimeEffect::SplineDf(df) = b.time_effect {
                let p = b.columns.len();
                let mut a = DMatrix::zeros(p, p);
                for (i, e) in etas.iter().enumerate() {
                    let w = spec.family.terms(response[i], *e).fisher[k][k];
                    let xi = b.x.row(i);
                    for r in 0..p {
                        let s = w * xi[r];
                        for c in r..p {
                            a[(r, c)] += s * xi[c];
                        }
                    }
                }
                for r in 0..p {
                    for c in 0..r {
                        a[(r, c)] = a[(c, r)];
                    }
                }
                b.gamma = gamma_for_df(&a, &b.omega, 1 + b.n_spline(), df);
            }
        }
    }
    Ok(Prepared { blocks, warnings, dropped })
}

fn pilot_etas(problem: &Problem<'_>, theta: &[f64]) -> Vec<[f64; 2]> {
    let n = problem.y.len();
    let mut eta = vec![[0.0; 2]; n];
    let mut off = 0;
    for (k, b) in problem.blocks.iter().enumerate() {
        let q = b.columns.len();
        let beta = nalgebra::DVector::from_column_slice(&theta[off..off + q]);
        let e = &b.x * beta;
        for i in 0..n {
            eta[i][k] = e[i];
        }
        off += q;
    }
    eta
}

/// Fits any supported family; the typed wrappers below check the family.
pub fn fit_regression(response: &[f64], rows: &[CovariateRow], spec: &LinkModelSpec) -> Result<RegressionFit> {
    let prep = prepare(response, rows, spec)?;
    let problem = Problem::new(spec.family, response, prep.blocks);
    let res = problem.fit(spec.max_cycles, spec.max_newton)?;
    if !res.converged && spec.require_convergence {
        return Err(Error::NonConvergence {
            iterations: res.iterations,
            reason: format!("{} regression did not reach the gradient tolerance", spec.family.name()),
            trace: res.trace,
        });
    }

    let cov = inverse_pd(&res.info_penalized)
        .ok_or_else(|| Error::Degenerate("information matrix is singular at the optimum".into()))?;
    let edf_matrix = &cov * &res.info;
    let effective_df = edf_matrix.trace();
    let mut warnings = prep.warnings;
    if !res.converged {
        warnings.push("optimizer stopped before convergence; estimates are the best iterate".into());
    }

    let mut parameters = Vec::with_capacity(problem.blocks.len());
    let mut off = 0;
    for b in &problem.blocks {
        let q = b.columns.len();
        let coefficients = res.theta[off..off + q].to_vec();
        let standard_errors: Vec<f64> = (0..q).map(|j| cov[(off + j, off + j)].max(0.0).sqrt()).collect();
        let score_ratios = coefficients.iter().zip(&standard_errors).map(|(b, s)| b / s).collect();
        let edf = (0..q).map(|j| edf_matrix[(off + j, off + j)]).sum();
        parameters.push(ParameterEstimates {
            parameter: b.name.clone(),
            link: b.link,
            layout: b.layout(),
            coefficients,
            standard_errors,
            score_ratios,
            time_effect: b.time_effect,
            gamma: b.gamma,
            edf,
        });
        off += q;
    }

    Ok(RegressionFit {
        family: spec.family,
        parameters,
        log_likelihood: res.ll,
        penalized_log_likelihood: res.penalized,
        aic: -2.0 * res.ll + 2.0 * effective_df,
        effective_df,
        converged: res.converged,
        iterations: res.iterations,
        n_obs: response.len(),
        threshold_u: spec.threshold_u,
        dropped_columns: prep.dropped,
        warnings,
        trace: res.trace,
    })
}

fn expect_family(spec: &LinkModelSpec, allowed: &[ResponseFamily]) -> Result<()> {
    if allowed.contains(&spec.family) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("model family {} not valid here", spec.family.name())))
    }
}

pub fn fit_poisson_regression(records: &[FrequencyRecord], spec: &LinkModelSpec) -> Result<RegressionFit> {
    expect_family(spec, &[ResponseFamily::Poisson])?;
    let y: Vec<f64> = records.iter().map(|r| f64::from(r.count)).collect();
    let rows: Vec<CovariateRow> = records.iter().map(|r| r.covariates.clone()).collect();
    fit_regression(&y, &rows, spec)
}

/// GPD regression on exceedances `y - u` (strictly positive).
pub fn fit_gpd_regression(exceedances: &[f64], rows: &[CovariateRow], spec: &LinkModelSpec) -> Result<RegressionFit> {
    expect_family(spec, &[ResponseFamily::Gpd])?;
    fit_regression(exceedances, rows, spec)
}

pub fn fit_severity_family_regression(
    losses: &[f64],
    rows: &[CovariateRow],
    spec: &LinkModelSpec,
) -> Result<RegressionFit> {
    expect_family(spec, &[ResponseFamily::LogNormal, ResponseFamily::LogLogistic])?;
    fit_regression(losses, rows, spec)
}

/// Penalised log-likelihood of a model as a function of its stacked
/// coefficient vector, with its analytic gradient.
pub struct PenalizedObjective {
    family: ResponseFamily,
    response: Vec<f64>,
    blocks: Vec<BlockDesign>,
}

impl PenalizedObjective {
    pub fn new(response: &[f64], rows: &[CovariateRow], spec: &LinkModelSpec) -> Result<Self> {
        let prep = prepare(response, rows, spec)?;
        Ok(Self { family: spec.family, response: response.to_vec(), blocks: prep.blocks })
    }

    fn problem(&self) -> Problem<'_> {
        Problem::new(self.family, &self.response, self.blocks.clone())
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.columns.len()).sum()
    }

    /// `(parameter, column)` label of each coefficient.
    pub fn labels(&self) -> Vec<(String, String)> {
        self.blocks
            .iter()
            .flat_map(|b| b.columns.iter().map(move |c| (b.name.clone(), c.clone())))
            .collect()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.problem().penalized(theta)
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let ev = self.problem().evaluate(theta);
        (ev.penalized, ev.grad.iter().copied().collect())
    }

    /// Expected information at `theta`, without the penalty.
    pub fn fisher_information(&self, theta: &[f64]) -> DMatrix<f64> {
        self.problem().information(theta, Curvature::Expected)
    }
}

/// Two-sided normal p-value of a Wald ratio.
pub fn wald_p_value(score_ratio: f64) -> f64 {
    2.0 * normal_sf(score_ratio.abs())
}

#[cfg(test)]
mod tests;
