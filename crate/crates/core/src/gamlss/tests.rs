use super::*;
use crate::data::{generate_synthetic, Coefficients, SyntheticSpec};
use crate::dists::fit_gpd_mle;
use crate::rng::seeded;
use rand::Rng;

fn plain_rows(n: usize) -> Vec<CovariateRow> {
    (0..n).map(|i| CovariateRow { time: (i % 10) as f64, ..Default::default() }).collect()
}

fn intercept_only(family: ResponseFamily) -> LinkModelSpec {
    LinkModelSpec::new(family, vec![]).with_time_effects(vec![TimeEffect::Absent; family.n_parameters()])
}

#[test]
fn poisson_intercept_is_log_mean() {
    let y = vec![4.0; 30];
    let fit = fit_regression(&y, &plain_rows(30), &intercept_only(ResponseFamily::Poisson)).unwrap();
    let (b0, _) = fit.coefficient("lambda", "intercept").unwrap();
    assert!((b0 - 4f64.ln()).abs() < 1e-10);
    assert!(fit.converged);
    assert!((fit.effective_df - 1.0).abs() < 1e-12);
}

#[test]
fn gpd_intercept_only_matches_univariate_mle() {
    let y = GpdParams::new(2.0, 0.8).unwrap().sample(3000, 9);
    let fit = fit_gpd_regression(&y, &plain_rows(y.len()), &intercept_only(ResponseFamily::Gpd)).unwrap();
    let mle = fit_gpd_mle(&y).unwrap();
    let p = fit.predict(&CovariateRow::default()).unwrap();
    assert!((p[0] / mle.params.scale_mu - 1.0).abs() < 1e-6);
    assert!((p[1] / mle.params.tail_tau - 1.0).abs() < 1e-6);
    assert!((fit.log_likelihood - mle.log_likelihood).abs() < 1e-6);
}

#[test]
fn lognormal_intercept_only_closed_form() {
    let mut rng = seeded(2);
    let y: Vec<f64> = (0..500).map(|_| (rng.random::<f64>() * 3.0).exp()).collect();
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = logs.iter().sum::<f64>() / 500.0;
    let s = (logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / 500.0).sqrt();
    let fit = fit_severity_family_regression(&y, &plain_rows(500), &intercept_only(ResponseFamily::LogNormal)).unwrap();
    let p = fit.predict(&CovariateRow::default()).unwrap();
    assert!((p[0] - m).abs() < 1e-8);
    assert!((p[1] / s - 1.0).abs() < 1e-8);
    let fam = crate::dists::fit_family_mle(&y, crate::dists::FamilyTag::LogNormal).unwrap();
    assert!((fam.log_likelihood - fit.log_likelihood).abs() < 1e-6);
}

#[test]
fn prediction_link_algebra() {
    let spec = SyntheticSpec {
        log_lambda: Coefficients::intercept(0.2).with("time", 0.1).with("L_USA", 0.4),
        ..SyntheticSpec::unit(400, 8, 3)
    };
    let out = generate_synthetic(&spec).unwrap();
    let fit = fit_poisson_regression(&out.panel, &LinkModelSpec::new(ResponseFamily::Poisson, vec!["L_USA".into()])).unwrap();
    let mut row = CovariateRow::default();
    row.set("L_USA", 0.0);
    let a = fit.predict_lambda(&row).unwrap();
    let b0 = fit.coefficient("lambda", "intercept").unwrap().0;
    assert!((a - b0.exp()).abs() < 1e-12);
    row.time = 1.0;
    let bt = fit.coefficient("lambda", "time").unwrap().0;
    assert!((fit.predict_lambda(&row).unwrap() / a - bt.exp()).abs() < 1e-12);
    assert!(matches!(fit.predict(&CovariateRow::default()), Err(Error::ColumnMismatch(_))));
}

#[test]
fn heavy_penalty_collapses_spline_to_line() {
    let spec = SyntheticSpec {
        log_lambda: Coefficients::intercept(0.0).with("time", 0.05),
        lambda_wave: Some(crate::data::TimeWave { amplitude: 0.3, period_years: 6.0 }),
        ..SyntheticSpec::unit(300, 10, 4)
    };
    let out = generate_synthetic(&spec).unwrap();
    let linear = fit_poisson_regression(&out.panel, &LinkModelSpec::new(ResponseFamily::Poisson, vec![])).unwrap();
    let stiff = fit_poisson_regression(
        &out.panel,
        &LinkModelSpec::new(ResponseFamily::Poisson, vec![]).with_time_effects(vec![TimeEffect::SplineGamma(1e13)]),
    )
    .unwrap();
    let free = fit_poisson_regression(
        &out.panel,
        &LinkModelSpec::new(ResponseFamily::Poisson, vec![]).with_time_effects(vec![TimeEffect::SplineGamma(0.0)]),
    )
    .unwrap();
    assert!((stiff.log_likelihood - linear.log_likelihood).abs() < 1e-6);
    assert!(free.log_likelihood > linear.log_likelihood + 1.0);
    assert!((free.effective_df - 10.0).abs() < 1e-8);
}

#[test]
fn edf_decreases_with_penalty() {
    let spline = NaturalSpline::new((0..8).map(f64::from).collect()).unwrap();
    let p = 2 + spline.n_basis();
    let omega_small = spline.penalty();
    let mut omega = DMatrix::zeros(p, p);
    omega.view_mut((2, 2), (spline.n_basis(), spline.n_basis())).copy_from(&omega_small);
    let mut a = DMatrix::zeros(p, p);
    for i in 0..80 {
        let t = (i % 8) as f64 + 0.3 * ((i / 8) as f64 / 10.0);
        let mut x = vec![1.0, t];
        x.extend(spline.eval(t));
        for r in 0..p {
            for c in 0..p {
                a[(r, c)] += x[r] * x[c];
            }
        }
    }
    let mut last = f64::INFINITY;
    for lg in -10..20 {
        let e = time_term_edf(&a, &omega, (lg as f64 * 0.7).exp(), p - 1);
        assert!(e < last && e > 1.0 - 1e-9, "{lg}: {e}");
        last = e;
    }
    let g = gamma_for_df(&a, &omega, p - 1, 3.5);
    assert!((time_term_edf(&a, &omega, g, p - 1) - 3.5).abs() < 1e-8);
}

#[test]
fn insufficient_data_and_rank_checks() {
    let cols: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
    let mut row = CovariateRow::default();
    for c in &cols {
        row.set(c, 1.0);
    }
    let spec = LinkModelSpec::new(ResponseFamily::Gpd, cols);
    assert!(matches!(
        fit_gpd_regression(&[1.0], &[row], &spec),
        Err(Error::TooFewObservations { .. })
    ));

    let rows: Vec<CovariateRow> = (0..50)
        .map(|i| {
            let mut r = CovariateRow { time: i as f64, ..Default::default() };
            r.set("a", f64::from(i % 2));
            r.set("b", 1.0 - f64::from(i % 2));
            r
        })
        .collect();
    let y: Vec<f64> = (0..50).map(|i| 1.0 + f64::from(i)).collect();
    let spec = LinkModelSpec::new(ResponseFamily::Gpd, vec!["a".into(), "b".into()]);
    match fit_gpd_regression(&y, &rows, &spec) {
        Err(Error::RankDeficient(msg)) => assert!(msg.contains("`b`")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn separation_names_the_column() {
    let rows: Vec<CovariateRow> = (0..40)
        .map(|i| {
            let mut r = CovariateRow { time: f64::from(i % 5), ..Default::default() };
            r.set("MC", f64::from(u8::from(i < 10)));
            r
        })
        .collect();
    let y: Vec<f64> = (0..40).map(|i| if i < 10 { 0.0 } else { f64::from(i % 3) + 1.0 }).collect();
    let records: Vec<FrequencyRecord> = rows
        .into_iter()
        .zip(&y)
        .map(|(covariates, y)| FrequencyRecord { company_id: "A".into(), year: 2010, count: *y as u32, covariates })
        .collect();
    match fit_poisson_regression(&records, &LinkModelSpec::new(ResponseFamily::Poisson, vec!["MC".into()])) {
        Err(Error::Separation(msg)) => assert!(msg.contains("MC")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn constant_column_dropped_with_warning() {
    let rows = plain_rows(200)
        .into_iter()
        .map(|mut r| {
            r.set("B_health", 0.0);
            r
        })
        .collect::<Vec<_>>();
    let y = GpdParams::new(1.0, 1.0).unwrap().sample(200, 1);
    let fit = fit_gpd_regression(&y, &rows, &LinkModelSpec::new(ResponseFamily::Gpd, vec!["B_health".into()])).unwrap();
    assert_eq!(fit.dropped_columns, vec!["B_health".to_string()]);
    assert!(fit.coefficient("tau", "B_health").is_none());
    assert!(!fit.warnings.is_empty());
}

#[test]
fn scale_invariance_of_gpd_regression() {
    let spec = SyntheticSpec {
        log_mu: Coefficients::intercept(0.5).with("R_big", 0.4),
        log_tau: Coefficients::intercept(0.0).with("L_USA", 0.3),
        ..SyntheticSpec::unit(800, 4, 12)
    };
    let out = generate_synthetic(&spec).unwrap();
    let enc = crate::data::encode_covariates(
        &out.events,
        &crate::data::EncodeOptions {
            window: spec.window().unwrap(),
            revenue_cutpoints: Some(out.truth.revenue_cutpoints),
            employee_cutpoints: Some(out.truth.employee_cutpoints),
            ..Default::default()
        },
    )
    .unwrap();
    let y: Vec<f64> = out.events.iter().map(|e| e.loss).collect();
    let m = LinkModelSpec::new(ResponseFamily::Gpd, vec!["R_big".into(), "L_USA".into()]);
    let a = fit_gpd_regression(&y, &enc.rows, &m).unwrap();
    let c = 37.5;
    let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
    let b = fit_gpd_regression(&yc, &enc.rows, &m).unwrap();
    let shift = b.coefficient("mu", "intercept").unwrap().0 - a.coefficient("mu", "intercept").unwrap().0;
    assert!((shift - c.ln()).abs() < 1e-6);
    let (ta, tb) = (a.parameter("tau").unwrap(), b.parameter("tau").unwrap());
    for j in 0..ta.coefficients.len() {
        assert!((ta.coefficients[j] - tb.coefficients[j]).abs() < 1e-6);
        assert!((ta.score_ratios[j] - tb.score_ratios[j]).abs() < 1e-6);
    }
    let penalised_monotone = a.trace.windows(2).all(|w| w[1] >= w[0]);
    assert!(penalised_monotone);
}

#[test]
fn single_observation_residual() {
    let y = GpdParams::new(1.0, 1.0).unwrap().sample(100, 5);
    let fit = fit_gpd_regression(&y, &plain_rows(100), &intercept_only(ResponseFamily::Gpd)).unwrap();
    let r = quantile_residuals(&fit, &y[..1], &plain_rows(1)).unwrap();
    assert_eq!(r.residuals.len(), 1);
    assert!(r.residuals[0].is_finite());
}

