use nalgebra::{DMatrix, DVector};

use super::design::BlockDesign;
use super::family::ResponseFamily;
use crate::optim::{minimize_bfgs, BfgsOptions};
use crate::{Error, Result};

/// Penalised log-likelihood of a multi-parameter link model.
pub(crate) struct Problem<'a> {
    pub family: ResponseFamily,
    pub y: &'a [f64],
    pub blocks: Vec<BlockDesign>,
    pub ll_constant: f64,
}

pub(crate) struct Evaluation {
    pub ll: f64,
    pub penalized: f64,
    pub grad: DVector<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Curvature {
    Observed,
    Expected,
}

pub(crate) struct EngineResult {
    pub theta: Vec<f64>,
    pub ll: f64,
    pub penalized: f64,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<f64>,
    /// Negative penalised Hessian and its unpenalised part.
    pub info_penalized: DMatrix<f64>,
    pub info: DMatrix<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(family: ResponseFamily, y: &'a [f64], blocks: Vec<BlockDesign>) -> Self {
        let ll_constant = y.iter().map(|v| family.ll_constant(*v)).sum();
        Self { family, y, blocks, ll_constant }
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.columns.len()).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len());
        let mut acc = 0;
        for b in &self.blocks {
            off.push(acc);
            acc += b.columns.len();
        }
        off
    }

    fn etas(&self, theta: &[f64]) -> Vec<[f64; 2]> {
        let n = self.y.len();
        let mut eta = vec![[0.0; 2]; n];
        for (k, (b, off)) in self.blocks.iter().zip(self.offsets()).enumerate() {
            let beta = DVector::from_column_slice(&theta[off..off + b.columns.len()]);
            let e = &b.x * beta;
            for i in 0..n {
                eta[i][k] = e[i];
            }
        }
        eta
    }

    fn penalty(&self, theta: &[f64]) -> (f64, DVector<f64>) {
        let mut value = 0.0;
        let mut grad = DVector::zeros(theta.len());
        for (b, off) in self.blocks.iter().zip(self.offsets()) {
            if b.gamma == 0.0 || b.n_spline() == 0 {
                continue;
            }
            let p = b.columns.len();
            let beta = DVector::from_column_slice(&theta[off..off + p]);
            let ob = &b.omega * &beta;
            value += b.gamma * beta.dot(&ob);
            grad.rows_mut(off, p).axpy(2.0 * b.gamma, &ob, 0.0);
        }
        (value, grad)
    }

    pub fn evaluate(&self, theta: &[f64]) -> Evaluation {
        let eta = self.etas(theta);
        let offs = self.offsets();
        let mut ll = self.ll_constant;
        let mut grad = DVector::zeros(theta.len());
        for (i, e) in eta.iter().enumerate() {
            let t = self.family.terms(self.y[i], *e);
            ll += t.ll;
            for (k, b) in self.blocks.iter().enumerate() {
                let g = t.grad[k];
                for j in 0..b.columns.len() {
                    grad[offs[k] + j] += g * b.x[(i, j)];
                }
            }
        }
        let (pen, pen_grad) = self.penalty(theta);
        Evaluation {
            ll,
            penalized: ll - pen,
            grad: grad - pen_grad,
        }
    }

    pub fn penalized(&self, theta: &[f64]) -> f64 {
        let eta = self.etas(theta);
        let ll: f64 = eta
            .iter()
            .zip(self.y)
            .map(|(e, y)| self.family.terms(*y, *e).ll)
            .sum::<f64>()
            + self.ll_constant;
        ll - self.penalty(theta).0
    }

    /// Information matrix (negative Hessian) of the unpenalised
    /// log-likelihood, restricted to `blocks` when given.
    pub fn information(&self, theta: &[f64], curvature: Curvature) -> DMatrix<f64> {
        let eta = self.etas(theta);
        let offs = self.offsets();
        let p = self.n_params();
        let mut info = DMatrix::zeros(p, p);
        let nb = self.blocks.len();
        let mut rowbuf: Vec<Vec<f64>> = self.blocks.iter().map(|b| vec![0.0; b.columns.len()]).collect();
        for (i, e) in eta.iter().enumerate() {
            let t = self.family.terms(self.y[i], *e);
            let w = match curvature {
                Curvature::Observed => [[-t.hess[0][0], -t.hess[0][1]], [-t.hess[1][0], -t.hess[1][1]]],
                Curvature::Expected => t.fisher,
            };
            for (k, b) in self.blocks.iter().enumerate() {
                for j in 0..b.columns.len() {
                    rowbuf[k][j] = b.x[(i, j)];
                }
            }
            for a in 0..nb {
                for c in a..nb {
                    let wac = w[a][c];
                    if wac == 0.0 {
                        continue;
                    }
                    let (ra, rc) = (&rowbuf[a], &rowbuf[c]);
                    for (ja, xa) in ra.iter().enumerate() {
                        let s = wac * xa;
                        let row = offs[a] + ja;
                        let start = if a == c { ja } else { 0 };
                        for (jc, xc) in rc.iter().enumerate().skip(start) {
                            info[(row, offs[c] + jc)] += s * xc;
                        }
                    }
                }
            }
        }
        for r in 0..p {
            for c in 0..r {
                info[(r, c)] = info[(c, r)];
            }
        }
        info
    }

    pub fn penalty_hessian(&self) -> DMatrix<f64> {
        let p = self.n_params();
        let mut s = DMatrix::zeros(p, p);
        for (b, off) in self.blocks.iter().zip(self.offsets()) {
            if b.gamma == 0.0 {
                continue;
            }
            let q = b.columns.len();
            let mut view = s.view_mut((off, off), (q, q));
            view += &b.omega * (2.0 * b.gamma);
        }
        s
    }

    fn block_step(&self, theta: &[f64], k: usize) -> Option<DVector<f64>> {
        let off = self.offsets()[k];
        let q = self.blocks[k].columns.len();
        let ev = self.evaluate(theta);
        let info = self.information(theta, Curvature::Expected) + self.penalty_hessian();
        let sub = info.view((off, off), (q, q)).into_owned();
        let g = ev.grad.rows(off, q).into_owned();
        solve_pd(&sub, &g)
    }

    fn start(&self) -> Result<Vec<f64>> {
        let s = self.family.start(self.y)?;
        let mut theta = vec![0.0; self.n_params()];
        for (k, off) in self.offsets().into_iter().enumerate() {
            theta[off] = s[k];
        }
        Ok(theta)
    }

    /// Alternating block scoring cycles, then a joint Newton polish, then
    /// BFGS if the polish stalls.
    pub fn fit(&self, max_cycles: usize, max_newton: usize) -> Result<EngineResult> {
        let mut theta = self.start()?;
        let mut lp = self.penalized(&theta);
        if !lp.is_finite() {
            return Err(Error::Degenerate("non-finite likelihood at the starting point".into()));
        }
        let mut trace = vec![lp];
        let mut iterations = 0;

        for _ in 0..max_cycles {
            let lp_cycle = lp;
            for k in 0..self.blocks.len() {
                let Some(step) = self.block_step(&theta, k) else { continue };
                let off = self.offsets()[k];
                if let Some((t, v)) = self.halving(&theta, lp, |th, s| {
                    for j in 0..step.len() {
                        th[off + j] += s * step[j];
                    }
                }) {
                    theta = t;
                    lp = v;
                }
            }
            iterations += 1;
            trace.push(lp);
            if (lp - lp_cycle).abs() <= 1e-8 * (1.0 + lp.abs()) {
                break;
            }
        }

        let mut converged = false;
        for _ in 0..max_newton {
            let ev = self.evaluate(&theta);
            let pen_h = self.penalty_hessian();
            let step = solve_pd(&(self.information(&theta, Curvature::Observed) + &pen_h), &ev.grad)
                .or_else(|| solve_pd(&(self.information(&theta, Curvature::Expected) + &pen_h), &ev.grad));
            let Some(step) = step else { break };
            let decrement = ev.grad.dot(&step);
            if decrement.abs() < 1e-10 * (1.0 + lp.abs()) {
                // inside the quadratic region: take the full step unguarded
                let t: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let v = self.penalized(&t);
                if v.is_finite() && v >= lp - 1e-9 * (1.0 + lp.abs()) {
                    theta = t;
                    lp = v;
                }
                converged = true;
                break;
            }
            iterations += 1;
            match self.halving(&theta, lp, |th, s| {
                for j in 0..step.len() {
                    th[j] += s * step[j];
                }
            }) {
                Some((t, v)) => {
                    theta = t;
                    lp = v;
                    trace.push(lp);
                }
                None => {
                    // rounding noise in the objective blocks further progress
                    converged = decrement.abs() < 1e-8 * (1.0 + lp.abs());
                    break;
                }
            }
        }

        if !converged {
            let mut opts = BfgsOptions::default();
            opts.max_iter = 2000;
            let m = minimize_bfgs(
                |th: &[f64], g: &mut [f64]| {
                    let ev = self.evaluate(th);
                    for (gi, v) in g.iter_mut().zip(ev.grad.iter()) {
                        *gi = -v;
                    }
                    -ev.penalized
                },
                &theta,
                &opts,
            );
            if -m.value >= lp {
                theta = m.x;
                lp = -m.value;
                trace.push(lp);
            }
            iterations += m.iterations;
            converged = m.converged;
        }

        let ev = self.evaluate(&theta);
        let pen_h = self.penalty_hessian();
        let mut info = self.information(&theta, Curvature::Observed);
        let mut info_penalized = &info + &pen_h;
        if info_penalized.clone().cholesky().is_none() {
            info = self.information(&theta, Curvature::Expected);
            info_penalized = &info + &pen_h;
        }
        Ok(EngineResult {
            theta,
            ll: ev.ll,
            penalized: ev.penalized,
            converged,
            iterations,
            trace,
            info_penalized,
            info,
        })
    }

    /// Step halving: the first of `s = 1, 1/2, 1/4, …` that does not lower
    /// the penalised likelihood.
    fn halving<F: Fn(&mut Vec<f64>, f64)>(&self, theta: &[f64], lp: f64, apply: F) -> Option<(Vec<f64>, f64)> {
        let mut s = 1.0;
        for _ in 0..40 {
            let mut t = theta.to_vec();
            apply(&mut t, s);
            let v = self.penalized(&t);
            if v.is_finite() && v >= lp {
                return Some((t, v));
            }
            s *= 0.5;
        }
        None
    }
}

pub(crate) fn solve_pd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Inverse of a symmetric positive definite matrix, falling back to a
/// general inverse.
pub(crate) fn inverse_pd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    match a.clone().cholesky() {
        Some(c) => Some(c.inverse()),
        None => a.clone().try_inverse(),
    }
}
