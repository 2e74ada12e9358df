use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Natural cubic spline in truncated-power form. The constant and linear
/// parts are carried by the intercept and `time` columns; this basis holds
/// the `K - 2` nonlinear functions for `K` knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalSpline {
    pub knots: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(mut knots: Vec<f64>) -> Result<Self> {
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        if knots.len() < 2 || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidParameter("spline needs at least two finite knots".into()));
        }
        Ok(Self { knots })
    }

    /// Knots at the distinct whole years present in `times`, thinned to at
    /// most `max_knots` by quantiles.
    pub fn from_times(times: &[f64], max_knots: usize) -> Result<Self> {
        let mut years: Vec<f64> = times.iter().map(|t| t.floor()).collect();
        years.sort_by(f64::total_cmp);
        years.dedup();
        if years.len() > max_knots {
            let m = years.len() - 1;
            years = (0..max_knots)
                .map(|i| years[(i * m + (max_knots - 1) / 2) / (max_knots - 1)])
                .collect();
            years.dedup();
        }
        Self::new(years)
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len().saturating_sub(2)
    }

    fn d(&self, k: usize, x: f64) -> f64 {
        let last = *self.knots.last().expect("non-empty");
        let a = (x - self.knots[k]).max(0.0);
        let b = (x - last).max(0.0);
        (a * a * a - b * b * b) / (last - self.knots[k])
    }

    fn d2(&self, k: usize, x: f64) -> f64 {
        let last = *self.knots.last().expect("non-empty");
        6.0 * ((x - self.knots[k]).max(0.0) - (x - last).max(0.0)) / (last - self.knots[k])
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let kk = self.knots.len();
        if kk < 3 {
            return Vec::new();
        }
        let tail = self.d(kk - 2, x);
        (0..kk - 2).map(|k| self.d(k, x) - tail).collect()
    }

    fn eval_d2(&self, x: f64) -> Vec<f64> {
        let kk = self.knots.len();
        if kk < 3 {
            return Vec::new();
        }
        let tail = self.d2(kk - 2, x);
        (0..kk - 2).map(|k| self.d2(k, x) - tail).collect()
    }

    /// Gram matrix `∫ N_j'' N_k''` over the knot range. Second derivatives
    /// are linear between knots, so Simpson's rule per interval is exact.
    pub fn penalty(&self) -> DMatrix<f64> {
        let m = self.n_basis();
        let mut omega = DMatrix::zeros(m, m);
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let h = b - a;
            let fa = self.eval_d2(a + 1e-12 * h);
            let fm = self.eval_d2(0.5 * (a + b));
            let fb = self.eval_d2(b - 1e-12 * h);
            for j in 0..m {
                for k in 0..m {
                    omega[(j, k)] += h / 6.0 * (fa[j] * fa[k] + 4.0 * fm[j] * fm[k] + fb[j] * fb[k]);
                }
            }
        }
        omega
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_linear_beyond_boundary_knots() {
        let s = NaturalSpline::new(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        for j in 0..s.n_basis() {
            let f = |x: f64| s.eval(x)[j];
            // second differences vanish outside [0, 4]
            assert!((f(5.0) - 2.0 * f(6.0) + f(7.0)).abs() < 1e-9);
            assert!((f(-3.0) - 2.0 * f(-2.0) + f(-1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_matches_numerical_integral() {
        let s = NaturalSpline::new(vec![0.0, 1.5, 2.0, 4.0]).unwrap();
        let omega = s.penalty();
        let n = 200_000;
        let h = 4.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x = (i as f64 + 0.5) * h;
            let v = s.eval_d2(x);
            acc += v[0] * v[1] * h;
        }
        assert!((omega[(0, 1)] - acc).abs() < 1e-6 * acc.abs().max(1.0));
        assert!(omega.clone().cholesky().is_some());
    }

    #[test]
    fn knots_from_times() {
        let s = NaturalSpline::from_times(&[0.2, 1.7, 1.1, 3.0, 2.5], 20).unwrap();
        assert_eq!(s.knots, vec![0.0, 1.0, 2.0, 3.0]);
        let many: Vec<f64> = (0..100).map(f64::from).collect();
        let s = NaturalSpline::from_times(&many, 10).unwrap();
        assert_eq!(s.knots.len(), 10);
        assert_eq!(s.knots[0], 0.0);
        assert_eq!(*s.knots.last().unwrap(), 99.0);
    }
}
