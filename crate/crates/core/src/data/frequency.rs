use std::collections::BTreeMap;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::encode::{add_interactions, firm_row, CovariateRow, EncodeOptions, BASE_DUMMIES};
use super::event::LossEvent;
use crate::{Error, Result};

/// Event count of one company in one calendar year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRecord {
    pub company_id: String,
    pub year: i32,
    pub count: u32,
    /// Firm dummies; `time` is years since the window's first year.
    pub covariates: CovariateRow,
}

/// Columns whose value differed between events of the same company-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateConflict {
    pub company_id: String,
    pub year: i32,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyData {
    pub columns: Vec<String>,
    pub records: Vec<FrequencyRecord>,
    pub conflicts: Vec<CovariateConflict>,
}

/// Aggregates events into company-year counts over each company's observed
/// span (first to last event year). Covariates come from the earliest event
/// of the year; years without events carry the previous year's covariates.
pub fn aggregate_frequency(events: &[LossEvent], opts: &EncodeOptions) -> Result<FrequencyData> {
    if events.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let base = super::encode::encode_covariates(
        events,
        &EncodeOptions {
            include_risk_dummies: false,
            interactions: Vec::new(),
            ..opts.clone()
        },
    )?;
    let rev = base.revenue_cutpoints;
    let emp = base.employee_cutpoints;
    let start_year = opts.window.start_year();

    let mut by_company: BTreeMap<&str, BTreeMap<i32, Vec<&LossEvent>>> = BTreeMap::new();
    for ev in events {
        by_company
            .entry(ev.company_id.as_str())
            .or_default()
            .entry(ev.event_date.year())
            .or_default()
            .push(ev);
    }

    let mut columns: Vec<String> = BASE_DUMMIES.iter().map(|s| s.to_string()).collect();
    columns.extend(opts.interactions.iter().map(|(a, b)| format!("{a}:{b}")));
    let mut records = Vec::new();
    let mut conflicts = Vec::new();

    for (company, years) in by_company {
        let first = *years.keys().next().expect("non-empty");
        let last = *years.keys().next_back().expect("non-empty");
        let mut carried: Option<CovariateRow> = None;
        for year in first..=last {
            let time = f64::from(year - start_year);
            let (count, mut row) = match years.get(&year) {
                Some(evs) => {
                    let mut evs = evs.clone();
                    evs.sort_by_key(|e| e.event_date);
                    let row = firm_row(evs[0], rev, emp, time);
                    let mut differing: Vec<String> = Vec::new();
                    for other in &evs[1..] {
                        let r = firm_row(other, rev, emp, time);
                        for (k, v) in &r.values {
                            if row.values.get(k) != Some(v) && !differing.contains(k) {
                                differing.push(k.clone());
                            }
                        }
                    }
                    if !differing.is_empty() {
                        differing.sort();
                        conflicts.push(CovariateConflict {
                            company_id: company.to_string(),
                            year,
                            columns: differing,
                        });
                    }
                    (evs.len() as u32, row)
                }
                None => {
                    let mut row = carried.clone().expect("first year always has events");
                    row.time = time;
                    (0, row)
                }
            };
            row.values.retain(|k, _| !k.contains(':'));
            carried = Some(row.clone());
            add_interactions(&mut row, &opts.interactions)?;
            records.push(FrequencyRecord {
                company_id: company.to_string(),
                year,
                count,
                covariates: row,
            });
        }
    }

    Ok(FrequencyData { columns, records, conflicts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RiskType, Sector};
    use chrono::NaiveDate;

    fn ev(company: &str, y: i32, m: u32, in_usa: bool) -> LossEvent {
        LossEvent {
            company_id: company.into(),
            event_date: NaiveDate::from_ymd_opt(y, m, 1).unwrap(),
            loss: 1.0,
            risk_type: RiskType::CyberExtortion,
            revenue: 5.0,
            employees: 3,
            in_usa,
            sector: Sector::Other,
            multi_loss_same_company: false,
            multi_company: false,
        }
    }

    #[test]
    fn gap_years_get_zero_counts() {
        let events = vec![ev("A", 2010, 1, true), ev("A", 2012, 5, true), ev("A", 2012, 2, true)];
        let f = aggregate_frequency(&events, &EncodeOptions::default()).unwrap();
        let summary: Vec<_> = f.records.iter().map(|r| (r.year, r.count, r.covariates.time)).collect();
        assert_eq!(summary, vec![(2010, 1, 2.0), (2011, 0, 3.0), (2012, 2, 4.0)]);
        assert!(f.conflicts.is_empty());
    }

    #[test]
    fn conflicting_covariates_reported_first_event_wins() {
        let events = vec![ev("B", 2015, 6, false), ev("B", 2015, 3, true)];
        let f = aggregate_frequency(&events, &EncodeOptions::default()).unwrap();
        assert_eq!(f.records[0].covariates.get("L_USA"), Some(1.0));
        assert_eq!(f.conflicts.len(), 1);
        assert_eq!(f.conflicts[0].columns, vec!["L_USA".to_string()]);
    }
}
