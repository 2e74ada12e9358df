//! Acceptance criteria, one test each. Every test writes a single
//! `PASS`/`FAIL` line straight to stderr so it shows up without
//! `--nocapture`, then asserts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use lda_core::capital::{
    mc_var, point_mass_var, sla_correction_constant, sla_var_or_uncorrected, SlaInputs, Severity, YearParameters,
};
use lda_core::data::{
    encode_covariates, generate_synthetic, Coefficients, CovariateRow, EncodeOptions, RiskType, SyntheticSpec,
    BASE_DUMMIES,
};
use lda_core::dists::{vg_upper_tail, GpdParams, VarianceGammaParams};
use lda_core::gamlss::{
    fit_gpd_regression, fit_poisson_regression, LinkModelSpec, PenalizedObjective, ResponseFamily, TimeEffect,
};
use lda_core::insure::{
    pool_gap, pool_size, premium_max, premium_min, premium_timeseries, simulate_panel, InsuranceCase, PoolSize,
    PremiumOptions, PremiumStatus, Utility, DEFAULT_POOL_BRACKET,
};
use lda_core::modelsel::{fit_decoupled_models, fit_joint_model, vuong_variance_test};
use lda_core::quad::integrate;
use lda_core::rank::{
    covariate_significance_table, fit_rank_ols_columns, rga, t_statistic, RankedDataset, RgaTestOptions,
};
use lda_core::rng::{open_unit, substream};
use lda_core::tail::{hill_curve, hill_estimate};

fn report(id: u32, name: &str, pass: bool, started: Instant, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "{verdict} criterion {id:>2} {name} ({:.1}s): {detail}\n",
        started.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn std_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let (u, v) = (open_unit(rng), open_unit(rng));
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

#[test]
fn criterion_01_gpd_round_trip() {
    let t0 = Instant::now();
    let mut worst_lower: f64 = 0.0;
    let mut worst_upper: f64 = 0.0;
    let mut worst_literal: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    for (mu, tau) in [(1.0, 0.5), (1.0, 1.0), (2.5, 2.0), (0.01, 3.0), (100.0, 0.8)] {
        let g = GpdParams::new(mu, tau).unwrap();
        for i in 0..=240 {
            let y = mu * 10f64.powf(-6.0 + 12.0 * i as f64 / 240.0);
            let p = g.cdf(y).unwrap();
            let q = g.sf(y).unwrap();
            let rel = |b: f64| ((b - y) / y).abs();
            let plain = if p < 1.0 { rel(g.quantile(p).unwrap()) } else { f64::INFINITY };
            // cdf near 1 keeps too few digits of 1 - F; the upper-tail pair covers that half
            if p <= 0.5 {
                worst_lower = worst_lower.max(plain);
            } else {
                worst_upper = worst_upper.max(rel(g.quantile_upper(q).unwrap()));
            }
            worst_literal = worst_literal.max(plain);
        }
        // y = μ(e^x − 1) maps the support to x ≥ 0; the tail past X has mass e^{−τX}
        let x_max = 40.0 / tau;
        let mass = integrate(
            |x| {
                let y = mu * x.exp_m1();
                g.pdf(y).unwrap() * mu * x.exp()
            },
            0.0,
            x_max,
            1e-12,
            1e-13,
            2000,
        )
        .value
            + (-tau * x_max).exp();
        worst_mass = worst_mass.max((mass - 1.0).abs());
    }
    let pass = worst_lower < 1e-10 && worst_upper < 1e-10 && worst_mass < 1e-6 && t0.elapsed().as_secs_f64() < 1.0;
    report(
        1,
        "GPD round trip",
        pass,
        t0,
        &format!(
            "max rel error quantile(cdf) for F <= 0.5 {worst_lower:.2e}, quantile_upper(sf) for F > 0.5 \
             {worst_upper:.2e} (plain quantile(cdf) over the whole grid {worst_literal:.2e}); |∫pdf − 1| {worst_mass:.2e}"
        ),
    );
}

fn pareto_sample(tau: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 0);
    (0..n).map(|_| open_unit(&mut rng).powf(-1.0 / tau)).collect()
}

#[test]
fn criterion_02_hill_consistency() {
    let t0 = Instant::now();
    let n = 100_000;
    let k = (n as f64).powf(0.6).floor() as usize;
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, tau) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let est = hill_estimate(&pareto_sample(tau, n, 200 + i as u64), k).unwrap();
        ok &= (est - tau).abs() < 0.1 * tau;
        parts.push(format!("τ={tau}: {est:.4}"));
    }
    let spec = SyntheticSpec { log_tau: Coefficients::intercept(0.4f64.ln()), ..SyntheticSpec::unit(300, 13, 21) };
    let out = generate_synthetic(&spec).unwrap();
    let losses: Vec<f64> = out.events.iter().map(|e| e.loss).collect();
    let curve = hill_curve(&losses, 5, losses.len() - 1).unwrap();
    let median = curve.summary().median;
    ok &= median < 0.5;
    let pass = ok && t0.elapsed().as_secs_f64() < 10.0;
    report(
        2,
        "Hill consistency",
        pass,
        t0,
        &format!("k={k}, {}; median Hill curve on GPD τ=0.4 data (n={}) {median:.4}", parts.join(", "), losses.len()),
    );
}

#[test]
fn criterion_03_regression_recovery() {
    let t0 = Instant::now();
    let reps = 50u64;
    let freq_truth = [("intercept", -0.2), ("R_big", 0.4), ("L_USA", -0.3), ("time", 0.04)];
    let mu_truth = [("intercept", 0.5), ("R_big", 0.4), ("B_financial", -0.3)];
    let tau_truth = [("intercept", 0.0), ("L_USA", 0.3)];
    let design = columns(&BASE_DUMMIES);
    let mut covered: BTreeMap<String, usize> = BTreeMap::new();
    let mut all_covered = 0;
    let mut exceedances = 0usize;
    let mut company_years = 0usize;
    for rep in 0..reps {
        let mut spec = SyntheticSpec::unit(500, 10, 1000 + rep);
        spec.log_lambda = freq_truth.iter().fold(Coefficients::default(), |c, (k, v)| c.with(k, *v));
        spec.log_mu = mu_truth.iter().fold(Coefficients::default(), |c, (k, v)| c.with(k, *v));
        spec.log_tau = tau_truth.iter().fold(Coefficients::default(), |c, (k, v)| c.with(k, *v));
        let out = generate_synthetic(&spec).unwrap();
        company_years += out.panel.len();
        exceedances += out.events.len();
        let freq = fit_poisson_regression(&out.panel, &LinkModelSpec::new(ResponseFamily::Poisson, design.clone()))
            .unwrap();
        let enc = encode_covariates(
            &out.events,
            &EncodeOptions {
                window: spec.window().unwrap(),
                include_risk_dummies: false,
                revenue_cutpoints: Some(out.truth.revenue_cutpoints),
                employee_cutpoints: Some(out.truth.employee_cutpoints),
                ..Default::default()
            },
        )
        .unwrap();
        let y: Vec<f64> = out.events.iter().map(|e| e.loss).collect();
        let sev = fit_gpd_regression(&y, &enc.rows, &LinkModelSpec::new(ResponseFamily::Gpd, design.clone())).unwrap();
        let mut this_rep = true;
        let checks = freq_truth
            .iter()
            .map(|(c, b)| ("lambda", &freq, *c, *b))
            .chain(mu_truth.iter().map(|(c, b)| ("mu", &sev, *c, *b)))
            .chain(tau_truth.iter().map(|(c, b)| ("tau", &sev, *c, *b)));
        for (param, fit, col, beta) in checks {
            if beta == 0.0 {
                continue;
            }
            let (est, se) = fit.coefficient(param, col).unwrap();
            let hit = (est - beta).abs() <= 1.959_963_984_540_054 * se;
            this_rep &= hit;
            *covered.entry(format!("{param}:{col}")).or_default() += usize::from(hit);
        }
        all_covered += usize::from(this_rep);
    }
    let worst = covered.values().copied().min().unwrap_or(0) as f64 / reps as f64;
    let pass = worst >= 0.9 && t0.elapsed().as_secs_f64() < 300.0;
    let rates: Vec<String> =
        covered.iter().map(|(k, v)| format!("{k} {:.2}", *v as f64 / reps as f64)).collect();
    report(
        3,
        "regression recovery",
        pass,
        t0,
        &format!(
            "{} company-years and {} exceedances per replication on average; per-coefficient coverage [{}]; \
             all nonzero coefficients covered together in {:.2} of replications",
            company_years / reps as usize,
            exceedances / reps as usize,
            rates.join(", "),
            all_covered as f64 / reps as f64
        ),
    );
}

fn gradient_error(obj: &PenalizedObjective, theta: &[f64]) -> f64 {
    let (_, g) = obj.value_and_gradient(theta);
    let mut worst: f64 = 0.0;
    for j in 0..theta.len() {
        let h = 1e-5 * theta[j].abs().max(1.0);
        let mut up = theta.to_vec();
        let mut down = theta.to_vec();
        up[j] += h;
        down[j] -= h;
        let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
        worst = worst.max((g[j] - fd).abs() / g[j].abs().max(1.0));
    }
    worst
}

#[test]
fn criterion_04_gradient_correctness() {
    let t0 = Instant::now();
    let spec = SyntheticSpec {
        log_lambda: Coefficients::intercept(0.0).with("R_big", 0.3),
        log_mu: Coefficients::intercept(0.3).with("L_USA", 0.2),
        log_tau: Coefficients::intercept(0.2),
        ..SyntheticSpec::unit(300, 10, 77)
    };
    let out = generate_synthetic(&spec).unwrap();
    let design = columns(&["R_big", "L_USA", "B_financial"]);
    let counts: Vec<f64> = out.panel.iter().map(|r| f64::from(r.count)).collect();
    let panel_rows: Vec<CovariateRow> = out.panel.iter().map(|r| r.covariates.clone()).collect();
    let freq = PenalizedObjective::new(
        &counts,
        &panel_rows,
        &LinkModelSpec::new(ResponseFamily::Poisson, design.clone()).with_time_effects(vec![TimeEffect::SplineGamma(5.0)]),
    )
    .unwrap();
    let enc = encode_covariates(
        &out.events,
        &EncodeOptions { window: spec.window().unwrap(), include_risk_dummies: false, ..Default::default() },
    )
    .unwrap();
    let y: Vec<f64> = out.events.iter().map(|e| e.loss).collect();
    let sev = PenalizedObjective::new(
        &y,
        &enc.rows,
        &LinkModelSpec::new(ResponseFamily::Gpd, design)
            .with_time_effects(vec![TimeEffect::SplineGamma(2.0), TimeEffect::SplineGamma(8.0)]),
    )
    .unwrap();
    let mut rng = substream(4, 0);
    let mut worst = [0.0f64; 2];
    for (m, obj) in [&freq, &sev].into_iter().enumerate() {
        for _ in 0..20 {
            let theta: Vec<f64> = (0..obj.n_params()).map(|_| 0.3 * std_normal(&mut rng)).collect();
            worst[m] = worst[m].max(gradient_error(obj, &theta));
        }
    }
    let pass = worst.iter().all(|w| *w < 1e-4) && t0.elapsed().as_secs_f64() < 30.0;
    report(
        4,
        "gradient correctness",
        pass,
        t0,
        &format!(
            "max relative gradient error Poisson ({} params) {:.2e}, GPD ({} params) {:.2e}",
            freq.n_params(),
            worst[0],
            sev.n_params(),
            worst[1]
        ),
    );
}

/// Two risk types with a 0/1 covariate; `tau(type, x)` sets the tail.
fn vuong_sample(
    n: usize,
    seed: u64,
    tau: impl Fn(usize, f64) -> f64,
) -> (Vec<f64>, Vec<CovariateRow>, Vec<RiskType>) {
    let kinds = [RiskType::Phishing, RiskType::CyberExtortion];
    let mut rng = substream(seed, 0);
    let mut y = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut types = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % 2;
        let x = f64::from(u8::from(open_unit(&mut rng) < 0.5));
        let g = GpdParams::new(1.0, tau(k, x)).unwrap();
        y.push(g.quantile_upper(open_unit(&mut rng)).unwrap().max(1e-300));
        let mut r = CovariateRow { time: 12.0 * open_unit(&mut rng), ..Default::default() };
        r.set("L_USA", x);
        for rt in RiskType::ALL {
            if let Some(c) = rt.dummy_column() {
                r.set(&c, f64::from(u8::from(rt == kinds[k])));
            }
        }
        rows.push(r);
        types.push(kinds[k]);
    }
    (y, rows, types)
}

fn vuong_rejects(sample: (Vec<f64>, Vec<CovariateRow>, Vec<RiskType>)) -> bool {
    let (y, rows, types) = sample;
    let spec = LinkModelSpec::new(ResponseFamily::Gpd, columns(&["L_USA"]));
    let joint = fit_joint_model(&y, &rows, &types, &spec).unwrap();
    let dec: BTreeMap<_, _> = fit_decoupled_models(&y, &rows, &types, &spec)
        .unwrap()
        .into_iter()
        .map(|(k, v)| (k, v.unwrap()))
        .collect();
    vuong_variance_test(&joint, &dec, &y, &rows, &types, None).unwrap().p_value < 0.05
}

#[test]
fn criterion_05_vuong_calibration() {
    let t0 = Instant::now();
    let n = 2000;
    let null = (0..100).filter(|s| vuong_rejects(vuong_sample(n, 500 + s, |_, _| 1.0))).count();
    // the types' tails differ by a factor 6 in opposite directions of the covariate
    let power = (0..100)
        .filter(|s| {
            vuong_rejects(vuong_sample(n, 900 + s, |k, x| if (k == 0) == (x == 0.0) { 0.5 } else { 3.0 }))
        })
        .count();
    let pass = null <= 10 && power >= 50 && t0.elapsed().as_secs_f64() < 600.0;
    report(
        5,
        "Vuong calibration",
        pass,
        t0,
        &format!("n={n}: null rejections {null}/100 at 5%, power {power}/100"),
    );
}

/// Exact rational RGA for small integer fixtures.
fn rga_oracle(ranks: &[i64], predicted: &[i64]) -> f64 {
    let n = ranks.len() as i128;
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by_key(|&i| (predicted[i], i));
    let total: i128 = ranks.iter().map(|r| *r as i128).sum();
    // Σ (n/i) (C_i/total − i/n)² = Σ (n C_i − i total)² / (i n total²)
    let (mut num, mut den) = (0i128, 1i128);
    let mut cum = 0i128;
    for (pos, &j) in order.iter().enumerate() {
        let i = pos as i128 + 1;
        cum += ranks[j] as i128;
        let a = n * cum - i * total;
        let (tn, td) = (a * a, i * n * total * total);
        num = num * td + tn * den;
        den *= td;
        let g = gcd(num.abs(), den);
        num /= g;
        den /= g;
    }
    num as f64 / den as f64
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let c = cdf(*x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_06_rga_machinery() {
    let t0 = Instant::now();
    let as_f = |v: &[i64]| v.iter().map(|x| *x as f64).collect::<Vec<_>>();
    let base = rga(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
    let mut exact = base == 0.125;
    let fixtures: [(&[i64], &[i64]); 6] = [
        (&[1, 2, 3], &[3, 2, 1]),
        (&[1, 1, 1, 1], &[4, 1, 3, 2]),
        (&[1], &[1]),
        (&[3, 1, 2, 5, 4, 6], &[2, 1, 3, 6, 4, 5]),
        (&[6, 5, 4, 3, 2, 1], &[1, 2, 3, 4, 5, 6]),
        (&[2, 4, 1, 3, 5], &[1, 1, 2, 2, 3]),
    ];
    let mut worst_fixture: f64 = 0.0;
    for (r, p) in fixtures {
        let got = rga(&as_f(r), &as_f(p)).unwrap();
        let want = rga_oracle(r, p);
        worst_fixture = worst_fixture.max((got - want).abs());
        exact &= (got - want).abs() <= 4.0 * f64::EPSILON * want.max(1.0);
    }

    // null: response independent of x, full model x against intercept only
    let m = 30;
    let reps = 10_000u64;
    let vg = VarianceGammaParams::rga_reference(m).unwrap();
    let mut ts: Vec<f64> = (0..reps)
        .map(|rep| {
            let mut rng = substream(99, rep);
            let y: Vec<f64> = (0..m).map(|_| open_unit(&mut rng)).collect();
            let rows: Vec<CovariateRow> = (0..m)
                .map(|_| {
                    let mut r = CovariateRow::default();
                    r.set("x", open_unit(&mut rng));
                    r
                })
                .collect();
            let ds = RankedDataset::new(&y, &rows, &columns(&["x"])).unwrap();
            let full = fit_rank_ols_columns(&ds, &columns(&["x"])).unwrap();
            let rest = fit_rank_ols_columns(&ds, &[]).unwrap();
            t_statistic(&ds.ranks, &full.fitted, &rest.fitted).unwrap()
        })
        .collect();
    ts.sort_by(f64::total_cmp);
    let mean = ts.iter().sum::<f64>() / reps as f64;
    let sd = (ts.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
    let vg_sd = vg.variance().sqrt();
    let ks_raw = ks_distance(&ts, |t| 1.0 - vg_upper_tail(t, &vg).unwrap());
    let standardized: Vec<f64> = ts.iter().map(|t| (t - mean) / sd).collect();
    let ks_std = ks_distance(&standardized, |z| 1.0 - vg_upper_tail(z * vg_sd, &vg).unwrap());

    // full covariate table shape on a synthetic sample
    let spec = SyntheticSpec {
        log_mu: Coefficients::intercept(0.0).with("R_big", 0.5),
        ..SyntheticSpec::unit(200, 13, 8)
    };
    let out = generate_synthetic(&spec).unwrap();
    let enc = encode_covariates(
        &out.events,
        &EncodeOptions { window: spec.window().unwrap(), include_risk_dummies: false, ..Default::default() },
    )
    .unwrap();
    let y: Vec<f64> = out.events.iter().map(|e| e.loss).collect();
    let mut cols = columns(&BASE_DUMMIES);
    cols.push("time".into());
    let ds = RankedDataset::new(&y, &enc.rows, &cols).unwrap();
    let opts = RgaTestOptions { subsamples: 5000, subsample_size: 10, refit: false, seed: 3, ..Default::default() };
    let table = covariate_significance_table(&ds, &cols, &opts).unwrap();
    let shape_ok = table.len() == cols.len() && table.iter().all(|r| (0.0..=1.0).contains(&r.s_value));

    let pass = exact && ks_std < 0.05 && shape_ok && t0.elapsed().as_secs_f64() < 300.0;
    report(
        6,
        "RGA machinery",
        pass,
        t0,
        &format!(
            "fixtures exact: {exact} (0.125 case {base}, max deviation {worst_fixture:.1e}); null T at m={m}: \
             mean {mean:.2} sd {sd:.2} vs reference sd {vg_sd:.2}, KS raw {ks_raw:.4}, KS standardized {ks_std:.4} \
             (need < 0.05); table run d=5000 m=10 over {} covariates ok: {shape_ok}",
            table.len()
        ),
    );
}

/// Γ(x) for x > 0 by upward recurrence and the Stirling series.
fn gamma_oracle(x: f64) -> f64 {
    let mut shift = 1.0;
    let mut z = x;
    while z < 20.0 {
        shift *= z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0)))));
    let ln_g = (z - 0.5) * z.ln() - z + 0.5 * std::f64::consts::TAU.ln() + series;
    ln_g.exp() / shift
}

#[test]
fn criterion_07_sla_against_monte_carlo() {
    let t0 = Instant::now();
    let alpha = 0.999;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (seed, (tau, lambda)) in
        [(1.5, 5.0), (1.5, 10.0), (2.2, 5.0), (2.2, 10.0), (3.0, 5.0), (3.0, 10.0)].into_iter().enumerate()
    {
        let gpd = GpdParams::new(1.0, tau).unwrap();
        let sla = sla_var_or_uncorrected(&SlaInputs { alpha, lambda_hat: lambda, gpd, threshold_u: 0.0 }).unwrap();
        let mc = mc_var(alpha, lambda, &Severity::Gpd(gpd), 0.0, 10_000_000, 40 + seed as u64).unwrap();
        let rel = (sla.var - mc.var).abs() / mc.var;
        worst = worst.max(rel);
        parts.push(format!(
            "τ={tau} λ={lambda}: sla {:.3}{} mc {:.3}±{:.3} rel {rel:.3}",
            sla.var,
            if sla.correction_skipped { " (uncorrected)" } else { "" },
            mc.var,
            mc.standard_error
        ));
    }
    let mut point_ok = true;
    for (lambda, a, mass) in [(2.0, 0.95, 1.0), (5.0, 0.999, 3.0), (0.5, 0.9, 2.0), (4.0, 0.99, 0.5)] {
        let exact = point_mass_var(a, lambda, mass, 0.0).unwrap();
        let mut cdf = 0.0;
        let mut term = (-lambda as f64).exp();
        let mut n = 0u32;
        loop {
            cdf += term;
            if cdf >= a {
                break;
            }
            n += 1;
            term *= lambda / f64::from(n);
        }
        let mc = mc_var(a, lambda, &Severity::PointMass(mass), 0.0, 200_000, 9).unwrap();
        point_ok &= exact == f64::from(n) * mass && mc.var == exact;
    }
    let c = sla_correction_constant(0.4).unwrap();
    let c_oracle = 0.5 * 0.6 * gamma_oracle(0.6).powi(2) / gamma_oracle(0.2);
    let c_ok = (c - c_oracle).abs() < 1e-6;
    let pass = worst <= 0.15 && point_ok && c_ok && t0.elapsed().as_secs_f64() < 300.0;
    report(
        7,
        "SLA against Monte Carlo",
        pass,
        t0,
        &format!(
            "{}; worst {worst:.3} (need <= 0.15); point-mass exact: {point_ok}; c(0.4) {c:.10} vs oracle {c_oracle:.10}",
            parts.join("; ")
        ),
    );
}

/// Largest root in `m` of `Σ p_n ln(max(P m + P − s n, 1)) = ln(P m)` with
/// exact Poisson weights.
fn pool_size_oracle(lambda: f64, mass: f64, premium: f64) -> f64 {
    let gap = |m: f64| {
        let mut p = (-lambda).exp();
        let mut e = 0.0;
        for n in 0..200 {
            if n > 0 {
                p *= lambda / n as f64;
            }
            e += p * (premium * m + premium - mass * n as f64).max(1.0).ln();
        }
        e - (premium * m).max(1.0).ln()
    };
    let (mut lo, mut hi) = (0.5, 2.0);
    assert!(gap(lo).signum() != gap(hi).signum());
    let s_hi = gap(hi).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid).signum() == s_hi {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_08_premium_solver() {
    let t0 = Instant::now();
    let zero = InsuranceCase { wealth_w: 10.0, cover_fraction_k: 0.5, lambda: 0.0, severity: Severity::PointMass(2.0) };
    let p_plus0 = premium_max(&zero, &Utility::Log, 10_000, 1).unwrap().premium;
    let p_minus0 = premium_min(&zero, &Utility::Log, 50.0, 10_000, 1).unwrap().premium;
    let zero_ok = p_plus0 == 0.0 && p_minus0 == 0.0;

    // truncated Lomax mean μ/(τ−1)(1 − (1 + c/μ)^{1−τ}) with μ=1, τ=2, c=1
    let lomax = 1.0 / (2.0 - 1.0) * (1.0 - 2f64.powf(1.0 - 2.0));
    let linear_case = InsuranceCase {
        wealth_w: 1e6,
        cover_fraction_k: 1e-6,
        lambda: 1.0,
        severity: Severity::Gpd(GpdParams::new(1.0, 2.0).unwrap()),
    };
    let mut linear_parts = Vec::new();
    let mut linear_ok = (lomax - 0.5f64).abs() < 1e-15;
    for gamma in [0.0, 1e-3] {
        let p = premium_max(&linear_case, &Utility::Crra(gamma), 1_000_000, 2).unwrap().premium;
        linear_ok &= (p - lomax).abs() / lomax < 0.01;
        linear_parts.push(format!("γ={gamma}: {p:.4}"));
    }

    let pm = InsuranceCase { wealth_w: 10.0, cover_fraction_k: 0.2, lambda: 1.0, severity: Severity::PointMass(2.0) };
    let oracle = pool_size_oracle(1.0, 2.0, 1.5);
    let m_star = match pool_size(&pm, &Utility::Log, 1.5, 1_000_000, 3, DEFAULT_POOL_BRACKET).unwrap() {
        PoolSize::Root(m) => m,
        PoolSize::NoSolution { .. } => f64::NAN,
    };
    let pool_ok = (m_star - 0.997).abs() <= 0.005 && (oracle - 0.997).abs() <= 0.005;

    // residual of the pool equation at the root, on an independent panel
    let gpd_case = InsuranceCase {
        wealth_w: 1000.0,
        cover_fraction_k: 0.1,
        lambda: 1.0,
        severity: Severity::Gpd(GpdParams::new(1.0, 2.0).unwrap()),
    };
    let p = premium_max(&gpd_case, &Utility::Log, 1_000_000, 5).unwrap().premium;
    let (resid_gpd, m_gpd) = match pool_size(&gpd_case, &Utility::Log, p, 1_000_000, 5, DEFAULT_POOL_BRACKET).unwrap() {
        PoolSize::Root(m) => {
            let fresh = simulate_panel(&gpd_case, 1_000_000, 6).unwrap();
            (pool_gap(&fresh, &Utility::Log, p, m).abs(), m)
        }
        PoolSize::NoSolution { .. } => (f64::INFINITY, f64::NAN),
    };
    // per-year utility changes here have sd ≈ 0.5, so 10^6 draws leave noise near 5e-4;
    // 10^8 fresh draws in equal chunks bring it to about 5e-5
    let chunks = 10u64;
    let resid_pm = ((0..chunks)
        .map(|c| pool_gap(&simulate_panel(&pm, 10_000_000, 700 + c).unwrap(), &Utility::Log, 1.5, m_star))
        .sum::<f64>()
        / chunks as f64)
        .abs();
    let resid_ok = resid_gpd < 1e-4 && resid_pm < 1e-4;

    let pass = zero_ok && linear_ok && pool_ok && resid_ok && t0.elapsed().as_secs_f64() < 120.0;
    report(
        8,
        "premium solver",
        pass,
        t0,
        &format!(
            "λ=0: P+ {p_plus0} P- {p_minus0}; linear limit (target {lomax}) {}; point-mass m* {m_star:.4} vs \
             exact-Poisson oracle {oracle:.4}; fresh-seed residual {resid_pm:.2e} (point mass), {resid_gpd:.2e} \
             (GPD τ=2, P+ {p:.4}, m* {m_gpd:.3})",
            linear_parts.join(", ")
        ),
    );
}

fn regime(taus: &[f64]) -> Vec<YearParameters> {
    taus.iter()
        .enumerate()
        .map(|(i, t)| YearParameters {
            year: 2008 + i as i32,
            lambda: 1.0,
            gpd: GpdParams::new(10.0, *t).unwrap(),
            threshold_u: 0.0,
        })
        .collect()
}

#[test]
fn criterion_09_regime_reproduction() {
    let t0 = Instant::now();
    let (w, k) = (1000.0, 0.1);
    let utilities = [Utility::Log, Utility::Crra(0.2), Utility::Crra(0.7)];
    let opts = PremiumOptions { n_sims: 100_000, seed: 12, ..Default::default() };
    let finite: Vec<f64> = (0..13).map(|i| 1.5 + 0.125 * i as f64).collect();
    let infinite: Vec<f64> = (0..13).map(|i| 0.4 + 0.04 * i as f64).collect();
    let crossing: Vec<f64> = (0..13).map(|i| 0.5 + 0.125 * i as f64).collect();
    let run = |taus: &[f64]| premium_timeseries(&regime(taus), w, k, &utilities, &opts).unwrap();

    let a = run(&finite);
    let finite_ok = a
        .iter()
        .all(|p| matches!(&p.result, Ok(r) if r.status == PremiumStatus::Feasible && r.relative_wealth.is_some()));

    let b = run(&infinite);
    let marker = |p: &lda_core::insure::PremiumSeriesPoint| match &p.result {
        Ok(r) => r.status == PremiumStatus::Uninsurable || r.p_plus.is_some_and(|v| v >= 0.5 * w),
        Err(_) => false,
    };
    let infinite_hits = b.iter().filter(|p| marker(p)).count();
    let infinite_ok = infinite_hits == b.len();
    let statuses: BTreeMap<String, usize> = b.iter().fold(BTreeMap::new(), |mut m, p| {
        let s = p.result.as_ref().map(|r| format!("{:?}", r.status)).unwrap_or_else(|_| "Error".into());
        *m.entry(s).or_default() += 1;
        m
    });

    let c = run(&crossing);
    let mut drops = Vec::new();
    let mut crossing_ok = true;
    for u in &utilities {
        let series: Vec<_> = c.iter().filter(|p| p.utility == *u).collect();
        let log_rw = |p: &&lda_core::insure::PremiumSeriesPoint| match &p.result {
            Ok(r) if r.status == PremiumStatus::Uninsurable => f64::INFINITY,
            Ok(r) => r.relative_wealth.map_or(f64::NAN, f64::ln),
            Err(_) => f64::NAN,
        };
        let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
        let before = mean(series.iter().filter(|p| p.tau < 1.0).map(log_rw).collect());
        let after = mean(series.iter().filter(|p| p.tau > 1.0).map(log_rw).collect());
        let orders = (before - after) / std::f64::consts::LN_10;
        crossing_ok &= orders >= 2.0;
        drops.push(format!("{} {orders:.2}", u.label()));
    }

    let pass = finite_ok && infinite_ok && crossing_ok && t0.elapsed().as_secs_f64() < 300.0;
    report(
        9,
        "premium regimes",
        pass,
        t0,
        &format!(
            "τ>1 all feasible: {finite_ok}; τ<1 uninsurable or P+ >= w/2 in {infinite_hits}/{} points \
             (statuses {statuses:?}); crossing drop in log10 mean relative wealth (need >= 2) [{}]",
            b.len(),
            drops.join(", ")
        ),
    );
}

fn lda(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_lda")).args(args).output().expect("spawn lda");
    assert!(out.status.success(), "lda {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_10_cli_determinism() {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let profile = root.join("profile.json");
    fs::write(&profile, r#"{"R_big": 1, "L_USA": 1}"#).unwrap();
    let (profile, events) = (profile.to_str().unwrap().to_string(), root.join("sim0/events.csv"));
    let events = events.to_str().unwrap().to_string();
    let stages: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["--seed", "17"]),
        ("ingest", vec!["--input", &events]),
        ("describe", vec!["--input", &events]),
        ("hill", vec!["--input", &events]),
        ("threshold", vec!["--input", &events]),
        ("fit", vec!["--joint", "--input", &events]),
        ("fit", vec!["--decoupled", "--input", &events]),
        ("vuong", vec!["--input", &events]),
        ("ks-table", vec!["--input", &events]),
        ("rank", vec!["--input", &events, "--rga-test", "--d", "300", "--seed", "2"]),
        ("var", vec!["--input", &events, "--profile", &profile, "--mc-sims", "20000", "--seed", "2"]),
        ("premium", vec!["--input", &events, "--profile", &profile, "--n-sims", "10000", "--seed", "2"]),
    ];
    let mut identical = 0;
    let mut differing = Vec::new();
    for (i, (stage, args)) in stages.iter().enumerate() {
        let mut runs = Vec::new();
        for run in 0..2 {
            let out = if *stage == "simulate" { root.join(format!("sim{run}")) } else { root.join(format!("s{i}_{run}")) };
            let mut full = vec![*stage];
            full.extend(args.iter().copied());
            full.push("--out");
            let o = out.to_str().unwrap().to_string();
            full.push(&o);
            lda(&full);
            runs.push(snapshot(&out));
        }
        if runs[0] == runs[1] && runs[0].len() > 1 {
            identical += 1;
        } else {
            differing.push(*stage);
        }
    }
    let pass = differing.is_empty() && t0.elapsed().as_secs_f64() < 60.0;
    report(
        10,
        "CLI determinism",
        pass,
        t0,
        &format!("{identical}/{} stage runs byte-identical; differing: {differing:?}", stages.len()),
    );
}
