use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::family::Link;
use super::spline::NaturalSpline;
use super::TimeEffect;
use crate::data::CovariateRow;
use crate::{Error, Result};

pub(crate) const MAX_KNOTS: usize = 20;

/// Design of one distribution parameter: the column layout and, for a
/// spline time effect, the basis and curvature penalty.
#[derive(Debug, Clone)]
pub(crate) struct BlockDesign {
    pub name: String,
    pub link: Link,
    pub columns: Vec<String>,
    pub x: DMatrix<f64>,
    /// `∫ h''²` Gram matrix embedded at the spline columns.
    pub omega: DMatrix<f64>,
    pub gamma: f64,
    pub spline: Option<NaturalSpline>,
    pub time_effect: TimeEffect,
}

fn spline_column(j: usize) -> String {
    format!("time_s{}", j + 1)
}

/// Layout of one parameter's design that can be re-applied to new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub columns: Vec<String>,
    pub spline: Option<NaturalSpline>,
}

impl DesignLayout {
    pub fn row_vector(&self, row: &CovariateRow) -> Result<Vec<f64>> {
        let basis = self.spline.as_ref().map(|s| s.eval(row.time));
        self.columns
            .iter()
            .map(|c| {
                if c == "intercept" {
                    return Ok(1.0);
                }
                if let Some(j) = c.strip_prefix("time_s").and_then(|j| j.parse::<usize>().ok()) {
                    if let Some(b) = &basis {
                        return b
                            .get(j - 1)
                            .copied()
                            .ok_or_else(|| Error::ColumnMismatch(format!("spline column `{c}`")));
                    }
                }
                row.get(c)
                    .ok_or_else(|| Error::ColumnMismatch(format!("row has no column `{c}`")))
            })
            .collect()
    }
}

/// Columns fixed by the model, before the spline basis is known.
pub(crate) fn build_block(
    name: &str,
    link: Link,
    design_columns: &[String],
    time_effect: TimeEffect,
    rows: &[CovariateRow],
    warnings: &mut Vec<String>,
    dropped: &mut Vec<String>,
) -> Result<BlockDesign> {
    let n = rows.len();
    let mut columns = vec!["intercept".to_string()];
    for c in design_columns {
        if c == "time" {
            return Err(Error::InvalidParameter(
                "`time` enters through the time effect, not the design columns".into(),
            ));
        }
        let first = rows[0]
            .get(c)
            .ok_or_else(|| Error::ColumnMismatch(format!("rows have no column `{c}`")))?;
        let mut constant = true;
        for r in rows {
            let v = r
                .get(c)
                .ok_or_else(|| Error::ColumnMismatch(format!("rows have no column `{c}`")))?;
            if !v.is_finite() {
                return Err(Error::Domain(format!("column `{c}` has non-finite value {v}")));
            }
            constant &= v == first;
        }
        if constant {
            if !dropped.contains(c) {
                warnings.push(format!("column `{c}` is constant ({first}) and was dropped"));
                dropped.push(c.clone());
            }
            continue;
        }
        columns.push(c.clone());
    }

    let spline = match time_effect {
        TimeEffect::Absent => None,
        TimeEffect::Linear => {
            columns.push("time".into());
            None
        }
        TimeEffect::SplineDf(_) | TimeEffect::SplineGamma(_) => {
            columns.push("time".into());
            let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
            let s = NaturalSpline::from_times(&times, MAX_KNOTS)?;
            for j in 0..s.n_basis() {
                columns.push(spline_column(j));
            }
            Some(s)
        }
    };

    let layout = DesignLayout { columns: columns.clone(), spline: spline.clone() };
    let p = columns.len();
    let mut x = DMatrix::zeros(n, p);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in layout.row_vector(r)?.into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let mut omega = DMatrix::zeros(p, p);
    if let Some(s) = &spline {
        let pen = s.penalty();
        let off = p - s.n_basis();
        omega.view_mut((off, off), (s.n_basis(), s.n_basis())).copy_from(&pen);
    }
    let gamma = match time_effect {
        TimeEffect::SplineGamma(g) => g,
        _ => 0.0,
    };
    check_rank(&x, &columns)?;
    Ok(BlockDesign {
        name: name.to_string(),
        link,
        columns,
        x,
        omega,
        gamma,
        spline,
        time_effect,
    })
}

impl BlockDesign {
    pub fn layout(&self) -> DesignLayout {
        DesignLayout { columns: self.columns.clone(), spline: self.spline.clone() }
    }

    pub fn n_spline(&self) -> usize {
        self.spline.as_ref().map_or(0, |s| s.n_basis())
    }
}

/// Modified Gram–Schmidt in column order; the first column that is
/// numerically in the span of its predecessors is reported.
fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col;
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            return Err(Error::RankDeficient(format!(
                "column `{name}` is linearly dependent on earlier columns"
            )));
        }
        basis.push(v / norm);
    }
    Ok(())
}
