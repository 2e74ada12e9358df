//! Quasi-Newton minimisation with a monotone backtracking line search.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Relative change in the objective below which the run may stop.
    pub rel_tol: f64,
    /// Gradient infinity-norm tolerance, relative to `max(1, |f|)`.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-9,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after every accepted step, starting with `f(x0)`.
    pub trace: Vec<f64>,
}

impl Minimum {
    pub fn grad_norm(&self) -> f64 {
        inf_norm(&self.gradient)
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `objective`, which returns `f(x)` and writes the gradient into
/// its second argument. Non-finite objective values are treated as `+inf`.
pub fn minimize_bfgs<F>(mut objective: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    if !f.is_finite() {
        return Minimum {
            x,
            value: f64::INFINITY,
            gradient: g,
            iterations: 0,
            converged: false,
            trace: vec![f64::INFINITY],
        };
    }
    let mut trace = vec![f];
    // inverse Hessian approximation, row-major
    let mut h = vec![0.0; n * n];
    let g0 = inf_norm(&g).max(1e-8);
    for i in 0..n {
        h[i * n + i] = 1.0 / g0.max(1.0);
    }
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if inf_norm(&g) <= opts.grad_tol * f.abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;
        for i in 0..n {
            dir[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // reset to steepest descent
            h.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                h[i * n + i] = 1.0 / inf_norm(&g).max(1.0);
                dir[i] = -h[i * n + i] * g[i];
            }
            slope = dot(&dir, &g);
        }
        let mut step = 1.0;
        let mut accepted = false;
        let mut f_new = f;
        for _ in 0..80 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = objective(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = inf_norm(&g) <= 1e-6 * f.abs().max(1.0);
            break;
        }
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        let f_old = f;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        trace.push(f);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
                .collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        let small_change = (f_old - f).abs() <= opts.rel_tol * f.abs().max(1e-300);
        if small_change && inf_norm(&g) <= 1e-7 * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    Minimum {
        x,
        value: f,
        gradient: g,
        iterations,
        converged,
        trace,
    }
}
