use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::event::{LossEvent, Sector, StudyWindow};
use super::risk::RiskType;
use crate::{Error, Result};

/// Firm-level dummy columns shared by every design, in design order.
pub const BASE_DUMMIES: [&str; 9] = [
    "R_medium", "R_big", "E_medium", "E_big", "L_USA", "B_financial", "B_health", "ML", "MC",
];

/// Covariates of one observation. `time` is continuous; everything else
/// is looked up by column name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CovariateRow {
    pub time: f64,
    pub values: BTreeMap<String, f64>,
}

impl CovariateRow {
    /// Value of a named column; `"time"` resolves to the time covariate.
    pub fn get(&self, name: &str) -> Option<f64> {
        if name == "time" {
            Some(self.time)
        } else {
            self.values.get(name).copied()
        }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodeOptions {
    pub window: StudyWindow,
    pub include_risk_dummies: bool,
    /// Extra product columns, named `a:b`. Either side may be `time`.
    pub interactions: Vec<(String, String)>,
    /// Fixed `[small/medium, medium/big]` revenue cutpoints. When absent the
    /// 33rd and 66th sample percentiles are used.
    pub revenue_cutpoints: Option<[f64; 2]>,
    pub employee_cutpoints: Option<[f64; 2]>,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            window: StudyWindow::default(),
            include_risk_dummies: true,
            interactions: Vec::new(),
            revenue_cutpoints: None,
            employee_cutpoints: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoded {
    /// Column names in design order (excluding `time`).
    pub columns: Vec<String>,
    pub rows: Vec<CovariateRow>,
    pub revenue_cutpoints: [f64; 2],
    pub employee_cutpoints: [f64; 2],
}

/// Years elapsed since `origin`, counting 365.25 days per year.
pub fn years_since(origin: NaiveDate, date: NaiveDate) -> f64 {
    (date - origin).num_days() as f64 / 365.25
}

/// Lower empirical quantile: the `ceil(p n)`-th order statistic.
fn empirical_quantile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = ((p * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[k - 1]
}

fn cutpoints(values: impl Iterator<Item = f64>) -> [f64; 2] {
    let mut v: Vec<f64> = values.collect();
    [empirical_quantile(&mut v, 0.33), empirical_quantile(&mut v, 0.66)]
}

fn size_class(x: f64, cuts: [f64; 2]) -> (f64, f64) {
    if x <= cuts[0] {
        (0.0, 0.0)
    } else if x <= cuts[1] {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    }
}

/// Firm-level dummies of one event, with the contagion precedence MC over ML.
pub(crate) fn firm_row(ev: &LossEvent, rev_cuts: [f64; 2], emp_cuts: [f64; 2], time: f64) -> CovariateRow {
    let mut row = CovariateRow { time, values: BTreeMap::new() };
    let (rm, rb) = size_class(ev.revenue, rev_cuts);
    let (em, eb) = size_class(ev.employees as f64, emp_cuts);
    row.set("R_medium", rm);
    row.set("R_big", rb);
    row.set("E_medium", em);
    row.set("E_big", eb);
    row.set("L_USA", f64::from(u8::from(ev.in_usa)));
    row.set("B_financial", f64::from(u8::from(ev.sector == Sector::Finance)));
    row.set("B_health", f64::from(u8::from(ev.sector == Sector::Healthcare)));
    let mc = ev.multi_company;
    row.set("MC", f64::from(u8::from(mc)));
    row.set("ML", f64::from(u8::from(ev.multi_loss_same_company && !mc)));
    row
}

pub(crate) fn add_interactions(row: &mut CovariateRow, interactions: &[(String, String)]) -> Result<()> {
    for (a, b) in interactions {
        let va = row
            .get(a)
            .ok_or_else(|| Error::ColumnMismatch(format!("interaction references unknown column `{a}`")))?;
        let vb = row
            .get(b)
            .ok_or_else(|| Error::ColumnMismatch(format!("interaction references unknown column `{b}`")))?;
        row.set(&format!("{a}:{b}"), va * vb);
    }
    Ok(())
}

pub fn encode_covariates(events: &[LossEvent], opts: &EncodeOptions) -> Result<Encoded> {
    if events.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let rev_cuts = opts
        .revenue_cutpoints
        .unwrap_or_else(|| cutpoints(events.iter().map(|e| e.revenue)));
    let emp_cuts = opts
        .employee_cutpoints
        .unwrap_or_else(|| cutpoints(events.iter().map(|e| e.employees as f64)));

    let mut columns: Vec<String> = BASE_DUMMIES.iter().map(|s| s.to_string()).collect();
    if opts.include_risk_dummies {
        columns.extend(RiskType::ALL.iter().filter_map(|rt| rt.dummy_column()));
    }
    columns.extend(opts.interactions.iter().map(|(a, b)| format!("{a}:{b}")));

    let rows = events
        .iter()
        .map(|ev| {
            let mut row = firm_row(ev, rev_cuts, emp_cuts, years_since(opts.window.start, ev.event_date));
            if opts.include_risk_dummies {
                for rt in RiskType::ALL {
                    if let Some(col) = rt.dummy_column() {
                        row.set(&col, f64::from(u8::from(ev.risk_type == rt)));
                    }
                }
            }
            add_interactions(&mut row, &opts.interactions)?;
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Encoded {
        columns,
        rows,
        revenue_cutpoints: rev_cuts,
        employee_cutpoints: emp_cuts,
    })
}
