use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{wald_p_value, RegressionFit};
use crate::Result;

/// One line of a coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub parameter: String,
    pub covariate: String,
    pub estimate: f64,
    pub se: f64,
    pub score_ratio: f64,
    pub p_value: f64,
    pub stars: String,
}

/// `***` below 1%, `**` below 5%, `*` below 10%.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

impl RegressionFit {
    pub fn coefficient_table(&self) -> Vec<CoefficientRow> {
        self.parameters
            .iter()
            .flat_map(|p| {
                p.layout.columns.iter().enumerate().map(move |(j, c)| {
                    let z = p.score_ratios[j];
                    let pv = wald_p_value(z);
                    CoefficientRow {
                        parameter: p.parameter.clone(),
                        covariate: c.clone(),
                        estimate: p.coefficients[j],
                        se: p.standard_errors[j],
                        score_ratio: z,
                        p_value: pv,
                        stars: significance_stars(pv).to_string(),
                    }
                })
            })
            .collect()
    }

    pub fn write_coefficients_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.coefficient_table() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
