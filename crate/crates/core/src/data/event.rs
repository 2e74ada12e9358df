use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::risk::RiskType;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sector {
    Finance,
    Healthcare,
    Other,
}

impl Sector {
    pub fn code(self) -> &'static str {
        match self {
            Sector::Finance => "FIN",
            Sector::Healthcare => "HEALTH",
            Sector::Other => "OTHER",
        }
    }
}

impl FromStr for Sector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FIN" | "FINANCE" => Ok(Sector::Finance),
            "HEALTH" | "HEALTHCARE" => Ok(Sector::Healthcare),
            "OTHER" => Ok(Sector::Other),
            _ => Err(Error::Domain(format!("unknown sector `{s}`"))),
        }
    }
}

/// One monetary loss record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEvent {
    pub company_id: String,
    pub event_date: NaiveDate,
    /// USD millions, strictly positive.
    pub loss: f64,
    pub risk_type: RiskType,
    pub revenue: f64,
    pub employees: u64,
    pub in_usa: bool,
    pub sector: Sector,
    pub multi_loss_same_company: bool,
    pub multi_company: bool,
}

/// Inclusive calendar window of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidParameter(format!(
                "study window ends ({end}) before it starts ({start})"
            )));
        }
        Ok(Self { start, end })
    }

    /// Whole calendar years `first..=last`.
    pub fn years(first: i32, last: i32) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(first, 1, 1)
            .ok_or_else(|| Error::InvalidParameter(format!("year {first}")))?;
        let end = NaiveDate::from_ymd_opt(last, 12, 31)
            .ok_or_else(|| Error::InvalidParameter(format!("year {last}")))?;
        Self::new(start, end)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn start_year(&self) -> i32 {
        self.start.year()
    }

    pub fn end_year(&self) -> i32 {
        self.end.year()
    }
}

impl Default for StudyWindow {
    fn default() -> Self {
        Self::years(2008, 2020).expect("valid default window")
    }
}
