use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::encode::{years_since, CovariateRow, BASE_DUMMIES};
use super::event::{LossEvent, Sector, StudyWindow};
use super::frequency::FrequencyRecord;
use super::risk::RiskType;
use crate::dists::GpdParams;
use crate::rng::{open_unit, substream};
use crate::{Error, Result};

/// Coefficients of one log-linear predictor, keyed by column name.
/// `intercept` and `time` are recognised alongside the dummy columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients(pub BTreeMap<String, f64>);

impl Coefficients {
    pub fn intercept(value: f64) -> Self {
        let mut m = BTreeMap::new();
        m.insert("intercept".to_string(), value);
        Self(m)
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> f64 {
        self.0.get(name).copied().unwrap_or(0.0)
    }

    fn eval(&self, row: &CovariateRow) -> f64 {
        self.0
            .iter()
            .map(|(k, b)| {
                if k == "intercept" {
                    *b
                } else {
                    b * row.get(k).unwrap_or(0.0)
                }
            })
            .sum()
    }
}

/// Periodic term added to log λ: `amplitude · sin(2π t / period_years)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWave {
    pub amplitude: f64,
    pub period_years: f64,
}

/// Probabilities of the firm attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyMix {
    pub p_usa: f64,
    pub p_finance: f64,
    pub p_health: f64,
    /// Per company-year probability of the multi-company contagion class.
    pub p_multi_company: f64,
    /// Per company-year probability of the same-company multi-loss class.
    pub p_multi_loss: f64,
}

impl Default for CompanyMix {
    fn default() -> Self {
        Self {
            p_usa: 0.6,
            p_finance: 0.25,
            p_health: 0.2,
            p_multi_company: 0.15,
            p_multi_loss: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub companies: usize,
    pub years: usize,
    pub start_year: i32,
    /// Losses are `threshold_u + GPD` draws.
    pub threshold_u: f64,
    pub seed: u64,
    pub log_lambda: Coefficients,
    pub log_mu: Coefficients,
    pub log_tau: Coefficients,
    #[serde(default)]
    pub lambda_wave: Option<TimeWave>,
    #[serde(default)]
    pub mix: CompanyMix,
    /// Relative frequencies of risk types; empty means uniform.
    #[serde(default)]
    pub risk_weights: Vec<(RiskType, f64)>,
}

impl SyntheticSpec {
    /// Poisson(1) counts and GPD(1, 1) losses above zero.
    pub fn unit(companies: usize, years: usize, seed: u64) -> Self {
        Self {
            companies,
            years,
            start_year: 2008,
            threshold_u: 0.0,
            seed,
            log_lambda: Coefficients::intercept(0.0),
            log_mu: Coefficients::intercept(0.0),
            log_tau: Coefficients::intercept(0.0),
            lambda_wave: None,
            mix: CompanyMix::default(),
            risk_weights: Vec::new(),
        }
    }

    pub fn window(&self) -> Result<StudyWindow> {
        StudyWindow::years(self.start_year, self.start_year + self.years.max(1) as i32 - 1)
    }

    fn validate(&self) -> Result<()> {
        if self.companies == 0 || self.years == 0 {
            return Err(Error::InvalidParameter("synthetic spec needs companies and years".into()));
        }
        if !(self.threshold_u >= 0.0 && self.threshold_u.is_finite()) {
            return Err(Error::InvalidParameter(format!("threshold {}", self.threshold_u)));
        }
        let firm: BTreeSet<&str> = BASE_DUMMIES.iter().copied().chain(["intercept", "time"]).collect();
        let rt: Vec<String> = RiskType::ALL.iter().filter_map(|r| r.dummy_column()).collect();
        let check = |c: &Coefficients, label: &str, allow_rt: bool| -> Result<()> {
            for (k, v) in &c.0 {
                let known = firm.contains(k.as_str()) || (allow_rt && rt.contains(k));
                if !known {
                    return Err(Error::ColumnMismatch(format!("{label}: unknown coefficient `{k}`")));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!("{label}: coefficient `{k}` = {v}")));
                }
            }
            Ok(())
        };
        check(&self.log_lambda, "log_lambda", false)?;
        check(&self.log_mu, "log_mu", true)?;
        check(&self.log_tau, "log_tau", true)?;
        let probs = [
            self.mix.p_usa,
            self.mix.p_finance,
            self.mix.p_health,
            self.mix.p_multi_company,
            self.mix.p_multi_loss,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p))
            || self.mix.p_finance + self.mix.p_health > 1.0
            || self.mix.p_multi_company + self.mix.p_multi_loss > 1.0
        {
            return Err(Error::InvalidParameter("company mix probabilities".into()));
        }
        Ok(())
    }
}

/// Everything needed to check a fit against the generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub spec: SyntheticSpec,
    pub revenue_cutpoints: [f64; 2],
    pub employee_cutpoints: [f64; 2],
    pub n_events: usize,
    pub n_company_years: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticOutput {
    pub events: Vec<LossEvent>,
    pub truth: SyntheticTruth,
    /// Every company-year, including those with zero events, with the
    /// covariates used to generate it.
    pub panel: Vec<FrequencyRecord>,
}

// Revenue classes occupy disjoint decades so both fixed cutpoints and
// sample percentiles separate them.
const REVENUE_BASE: [f64; 3] = [1e6, 1e8, 1e10];
const EMPLOYEE_BASE: [f64; 3] = [10.0, 1e3, 1e5];
const REVENUE_CUTS: [f64; 2] = [3.2e7, 3.2e9];
const EMPLOYEE_CUTS: [f64; 2] = [320.0, 32_000.0];

fn checked_exp(eta: f64, what: &str) -> Result<f64> {
    let v = eta.exp();
    if v > 0.0 && v.is_finite() && v < 1e12 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!(
            "synthetic spec implies {what} = exp({eta}) outside (0, 1e12)"
        )))
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticOutput> {
    spec.validate()?;
    let window = spec.window()?;
    let weights: Vec<(RiskType, f64)> = if spec.risk_weights.is_empty() {
        RiskType::ALL.iter().map(|r| (*r, 1.0)).collect()
    } else {
        spec.risk_weights.clone()
    };
    let picker = WeightedIndex::new(weights.iter().map(|(_, w)| *w))
        .map_err(|e| Error::InvalidParameter(format!("risk weights: {e}")))?;

    let mut events = Vec::new();
    let mut panel = Vec::with_capacity(spec.companies * spec.years);

    for c in 0..spec.companies {
        let mut rng = substream(spec.seed, c as u64);
        let company_id = format!("C{c:05}");
        let in_usa = rng.random::<f64>() < spec.mix.p_usa;
        let s: f64 = rng.random();
        let sector = if s < spec.mix.p_finance {
            Sector::Finance
        } else if s < spec.mix.p_finance + spec.mix.p_health {
            Sector::Healthcare
        } else {
            Sector::Other
        };
        let rev_class = rng.random_range(0..3usize);
        let emp_class = rng.random_range(0..3usize);
        let revenue = (REVENUE_BASE[rev_class] * 10f64.powf(rng.random::<f64>())).round();
        let employees = (EMPLOYEE_BASE[emp_class] * 10f64.powf(rng.random::<f64>())).floor() as u64;

        for k in 0..spec.years {
            let year = spec.start_year + k as i32;
            let u: f64 = rng.random();
            let (mc, ml) = if u < spec.mix.p_multi_company {
                (true, false)
            } else if u < spec.mix.p_multi_company + spec.mix.p_multi_loss {
                (false, true)
            } else {
                (false, false)
            };
            let mut row = CovariateRow { time: k as f64, values: BTreeMap::new() };
            row.set("R_medium", f64::from(u8::from(rev_class == 1)));
            row.set("R_big", f64::from(u8::from(rev_class == 2)));
            row.set("E_medium", f64::from(u8::from(emp_class == 1)));
            row.set("E_big", f64::from(u8::from(emp_class == 2)));
            row.set("L_USA", f64::from(u8::from(in_usa)));
            row.set("B_financial", f64::from(u8::from(sector == Sector::Finance)));
            row.set("B_health", f64::from(u8::from(sector == Sector::Healthcare)));
            row.set("ML", f64::from(u8::from(ml)));
            row.set("MC", f64::from(u8::from(mc)));

            let mut eta = spec.log_lambda.eval(&row);
            if let Some(w) = spec.lambda_wave {
                eta += w.amplitude * (std::f64::consts::TAU * k as f64 / w.period_years).sin();
            }
            let lambda = checked_exp(eta, "lambda")?;
            let count = Poisson::new(lambda)
                .map_err(|e| Error::InvalidParameter(format!("poisson rate {lambda}: {e}")))?
                .sample(&mut rng) as u32;

            let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
            let days = if NaiveDate::from_ymd_opt(year, 2, 29).is_some() { 366 } else { 365 };
            let mut dated: Vec<(NaiveDate, RiskType, f64)> = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let date = jan1 + Duration::days(rng.random_range(0..days));
                let risk_type = weights[picker.sample(&mut rng)].0;
                let mut sev = row.clone();
                sev.time = years_since(window.start, date);
                for rt in RiskType::ALL {
                    if let Some(col) = rt.dummy_column() {
                        sev.set(&col, f64::from(u8::from(rt == risk_type)));
                    }
                }
                let mu = checked_exp(spec.log_mu.eval(&sev), "mu")?;
                let tau = checked_exp(spec.log_tau.eval(&sev), "tau")?;
                let gpd = GpdParams::new(mu, tau)?;
                let y = gpd.quantile(1.0 - open_unit(&mut rng))?;
                let y = if y > 0.0 { y } else { f64::MIN_POSITIVE };
                dated.push((date, risk_type, spec.threshold_u + y));
            }
            dated.sort_by_key(|d| d.0);
            debug_assert!(dated.iter().all(|d| d.0.year() == year));
            for (date, risk_type, loss) in dated {
                events.push(LossEvent {
                    company_id: company_id.clone(),
                    event_date: date,
                    loss,
                    risk_type,
                    revenue,
                    employees,
                    in_usa,
                    sector,
                    multi_loss_same_company: ml,
                    multi_company: mc,
                });
            }
            panel.push(FrequencyRecord {
                company_id: company_id.clone(),
                year,
                count,
                covariates: row,
            });
        }
    }

    let truth = SyntheticTruth {
        spec: spec.clone(),
        revenue_cutpoints: REVENUE_CUTS,
        employee_cutpoints: EMPLOYEE_CUTS,
        n_events: events.len(),
        n_company_years: panel.len(),
    };
    Ok(SyntheticOutput { events, truth, panel })
}
