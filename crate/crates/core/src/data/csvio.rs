use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::event::{LossEvent, Sector, StudyWindow};
use super::risk::RiskType;
use crate::{Error, Result};

pub const CSV_COLUMNS: [&str; 10] = [
    "company_id",
    "event_date",
    "loss_musd",
    "risk_type",
    "revenue_usd",
    "employees",
    "country_iso",
    "naics_sector",
    "ml_flag",
    "mc_flag",
];

/// A data row that was skipped, with its 1-based line number in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRejection {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParsedEvents {
    pub events: Vec<LossEvent>,
    pub rejected: Vec<RowRejection>,
}

fn parse_flag(s: &str) -> std::result::Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "t" => Ok(true),
        "0" | "false" | "no" | "n" | "f" | "" => Ok(false),
        other => Err(format!("unrecognised flag `{other}`")),
    }
}

fn parse_row(
    rec: &csv::StringRecord,
    idx: &[usize; 10],
    window: Option<&StudyWindow>,
) -> std::result::Result<LossEvent, String> {
    let field = |i: usize| rec.get(idx[i]).unwrap_or("").trim();

    let company_id = field(0).to_string();
    if company_id.is_empty() {
        return Err("empty company_id".into());
    }
    let event_date = NaiveDate::parse_from_str(field(1), "%Y-%m-%d")
        .map_err(|e| format!("bad event_date `{}`: {e}", field(1)))?;
    if let Some(w) = window {
        if !w.contains(event_date) {
            return Err(format!("event_date {event_date} outside the study window"));
        }
    }
    let loss: f64 = field(2)
        .parse()
        .map_err(|_| format!("bad loss_musd `{}`", field(2)))?;
    if !(loss > 0.0 && loss.is_finite()) {
        return Err(format!("nonpositive loss ({loss})"));
    }
    let risk_type: RiskType = field(3).parse().map_err(|e: Error| e.to_string())?;
    let revenue: f64 = field(4)
        .parse()
        .map_err(|_| format!("bad revenue_usd `{}`", field(4)))?;
    if !(revenue >= 0.0 && revenue.is_finite()) {
        return Err(format!("revenue_usd must be nonnegative, got {revenue}"));
    }
    let employees: u64 = field(5)
        .parse::<f64>()
        .ok()
        .filter(|e| *e >= 0.0 && e.fract() == 0.0 && e.is_finite())
        .map(|e| e as u64)
        .ok_or_else(|| format!("bad employees `{}`", field(5)))?;
    let country = field(6);
    if country.is_empty() {
        return Err("empty country_iso".into());
    }
    let in_usa = matches!(country.to_ascii_uppercase().as_str(), "US" | "USA");
    let sector: Sector = field(7).parse().map_err(|e: Error| e.to_string())?;
    let multi_loss_same_company = parse_flag(field(8))?;
    let multi_company = parse_flag(field(9))?;

    Ok(LossEvent {
        company_id,
        event_date,
        loss,
        risk_type,
        revenue,
        employees,
        in_usa,
        sector,
        multi_loss_same_company,
        multi_company,
    })
}

/// Reads events from CSV. Malformed rows are collected in `rejected`; a
/// missing column is a schema error.
pub fn parse_csv<R: Read>(reader: R, window: Option<&StudyWindow>) -> Result<ParsedEvents> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::Headers)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 10];
    for (slot, col) in idx.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(col))
            .ok_or_else(|| Error::Schema(format!("missing column `{col}`")))?;
    }

    let mut out = ParsedEvents::default();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        match parse_row(&rec, &idx, window) {
            Ok(ev) => out.events.push(ev),
            Err(reason) => out.rejected.push(RowRejection { line, reason }),
        }
    }
    Ok(out)
}

pub fn parse_csv_path(path: &Path, window: Option<&StudyWindow>) -> Result<ParsedEvents> {
    parse_csv(std::fs::File::open(path)?, window)
}

pub fn write_csv<W: Write>(writer: W, events: &[LossEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for ev in events {
        w.write_record([
            ev.company_id.clone(),
            ev.event_date.format("%Y-%m-%d").to_string(),
            ev.loss.to_string(),
            ev.risk_type.canonical_name().to_string(),
            ev.revenue.to_string(),
            ev.employees.to_string(),
            if ev.in_usa { "US" } else { "XX" }.to_string(),
            ev.sector.code().to_string(),
            u8::from(ev.multi_loss_same_company).to_string(),
            u8::from(ev.multi_company).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
