//! One function per subcommand; each returns the artifacts to commit.

use std::collections::BTreeMap;
use std::path::PathBuf;

use lda_core::capital::{mc_var, var_trajectory, write_var_trajectory_csv, Severity, YearParameters};
use lda_core::data::{generate_synthetic, write_csv, CovariateRow, LossEvent, RiskType, SyntheticSpec};
use lda_core::dists::FamilyTag;
use lda_core::gamlss::{
    fit_gpd_regression, fit_severity_family_regression, quantile_residuals, select_smoothing_df, LinkModelSpec,
    RegressionFit, ResponseFamily, TimeEffect,
};
use lda_core::insure::{premium_timeseries, write_premium_series_csv, PremiumOptions, Utility, DEFAULT_POOL_BRACKET};
use lda_core::modelsel::{
    family_comparison_table, fit_decoupled_models, fit_joint_model, risk_type_columns, vuong_variance_test,
    write_family_table_csv,
};
use lda_core::rank::{
    concordance_curve, covariate_significance_table, fit_rank_ols, joint_vs_separate_rank_test, rga,
    rga_significance_test, write_concordance_csv, write_rank_table_csv, RankedDataset, RgaTestOptions,
};
use lda_core::tail::{hill_curve, select_threshold};
use serde::Serialize;
use serde_json::json;

use crate::artifacts::{commit, Artifacts};
use crate::models::{
    base_columns, choose_threshold, encode, exceedances, fit_frequency, group_events, load, load_profile,
    parse_risk_type, require_seed, threshold_options, Loaded,
};
use crate::{CliError, CliResult, Command};

fn config_of<T: Serialize>(command: &str, args: &T) -> serde_json::Value {
    json!({ "command": command, "args": args })
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Stage { stage: "render", cause: e.to_string() }
}

fn figure(name: &str, csv: &str, x: &str, y: &str, log_x: bool, log_y: bool) -> serde_json::Value {
    json!({ "figure": name, "csv": csv, "x": x, "y": y, "log_x": log_x, "log_y": log_y })
}

pub fn run(command: Command) -> CliResult<PathBuf> {
    let (stage, out, config, input_sha, artifacts) = match command {
        Command::Ingest(a) => {
            let l = load(&a)?;
            ("ingest", a.out.clone(), config_of("ingest", &a), Some(l.input_sha256.clone()), ingest(&l)?)
        }
        Command::Describe(a) => {
            let l = load(&a)?;
            ("describe", a.out.clone(), config_of("describe", &a), Some(l.input_sha256.clone()), describe(&l)?)
        }
        Command::Hill(a) => {
            let l = load(&a.common)?;
            let arts = hill(&l, a.k_min, a.k_max)?;
            ("hill", a.common.out.clone(), config_of("hill", &a), Some(l.input_sha256), arts)
        }
        Command::Threshold(a) => {
            let l = load(&a.common)?;
            let arts = threshold(&l, &a.select)?;
            ("threshold", a.common.out.clone(), config_of("threshold", &a), Some(l.input_sha256), arts)
        }
        Command::Fit(a) => {
            let l = load(&a.common)?;
            let arts = fit(&l, &a)?;
            ("fit", a.common.out.clone(), config_of("fit", &a), Some(l.input_sha256), arts)
        }
        Command::Vuong(a) => {
            let l = load(&a.common)?;
            let arts = vuong(&l, &a)?;
            ("vuong", a.common.out.clone(), config_of("vuong", &a), Some(l.input_sha256), arts)
        }
        Command::KsTable(a) => {
            let l = load(&a.common)?;
            let arts = ks_table(&l, &a)?;
            ("ks-table", a.common.out.clone(), config_of("ks-table", &a), Some(l.input_sha256), arts)
        }
        Command::Rank(a) => {
            let l = load(&a.common)?;
            let arts = rank(&l, &a)?;
            ("rank", a.common.out.clone(), config_of("rank", &a), Some(l.input_sha256), arts)
        }
        Command::Var(a) => {
            let l = load(&a.common)?;
            let arts = var(&l, &a)?;
            ("var", a.common.out.clone(), config_of("var", &a), Some(l.input_sha256), arts)
        }
        Command::Premium(a) => {
            let l = load(&a.common)?;
            let arts = premium(&l, &a)?;
            ("premium", a.common.out.clone(), config_of("premium", &a), Some(l.input_sha256), arts)
        }
        Command::Simulate(a) => {
            let (arts, spec) = simulate(&a)?;
            let config = json!({ "command": "simulate", "args": &a, "spec": spec });
            ("simulate", a.out.clone(), config, None, arts)
        }
    };
    commit(&out, stage, &config, input_sha, artifacts).map_err(|cause| CliError::Stage { stage, cause })
}

fn ingest(l: &Loaded) -> CliResult<Artifacts> {
    let mut a = Artifacts::default();
    a.add_csv("events.csv", |w| write_csv(w, &l.parsed.events)).map_err(csv_err)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["line", "reason"]).map_err(csv_err)?;
        for r in &l.parsed.rejected {
            w.write_record([r.line.to_string(), r.reason.clone()]).map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)?;
    }
    a.add("rejections.csv", buf);
    a.add_json(
        "ingest.json",
        &json!({ "accepted": l.parsed.events.len(), "rejected": l.parsed.rejected.len() }),
    )
    .map_err(csv_err)?;
    Ok(a)
}

#[derive(Serialize)]
struct Moments {
    group: String,
    n: usize,
    min: f64,
    mean: f64,
    median: f64,
    sd: f64,
    skewness: f64,
    kurtosis: f64,
}

fn moments(group: String, values: &[f64]) -> Moments {
    let n = values.len();
    let nf = n as f64;
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let mean = s.iter().sum::<f64>() / nf;
    let m = |p: i32| s.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / nf;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
    Moments {
        group,
        n,
        min: s[0],
        mean,
        median,
        sd: if n > 1 { (m2 * nf / (nf - 1.0)).sqrt() } else { 0.0 },
        skewness: if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 },
        kurtosis: if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 },
    }
}

fn write_rows<T: Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)?;
    }
    Ok(buf)
}

fn losses_of(events: &[LossEvent]) -> Vec<f64> {
    events.iter().map(|e| e.loss).collect()
}

fn describe(l: &Loaded) -> CliResult<Artifacts> {
    let mut rows = Vec::new();
    for (rt, evs) in group_events(&l.parsed.events) {
        rows.push(moments(rt.canonical_name().to_string(), &losses_of(&evs)));
    }
    rows.push(moments("All".into(), &losses_of(&l.parsed.events)));
    let mut a = Artifacts::default();
    a.add("summary_stats.csv", write_rows(&rows)?);
    Ok(a)
}

fn hill(l: &Loaded, k_min: usize, k_max: Option<usize>) -> CliResult<Artifacts> {
    let mut a = Artifacts::default();
    let mut summaries = Vec::new();
    let mut groups: Vec<(String, Vec<f64>)> = vec![("all".into(), losses_of(&l.parsed.events))];
    groups.extend(group_events(&l.parsed.events).into_iter().map(|(rt, e)| (rt.slug().to_string(), losses_of(&e))));
    let mut figures = Vec::new();
    for (name, losses) in groups {
        let kmax = k_max.unwrap_or(losses.len().saturating_sub(1)).min(losses.len().saturating_sub(1));
        match hill_curve(&losses, k_min, kmax) {
            Ok(curve) => {
                let file = format!("hill_{name}.csv");
                a.add_csv(file.clone(), |w| curve.write_csv(w)).map_err(csv_err)?;
                figures.push(figure("hill", &file, "k", "tau_hat", false, false));
                summaries.push(json!({ "group": name, "n": losses.len(), "summary": curve.summary() }));
            }
            Err(e) => summaries.push(json!({ "group": name, "n": losses.len(), "error": e.to_string() })),
        }
    }
    a.add_json("hill_summary.json", &summaries).map_err(csv_err)?;
    a.add_json("hill_figures.json", &figures).map_err(csv_err)?;
    Ok(a)
}

#[derive(Serialize)]
struct ThresholdRow {
    group: String,
    level: Option<f64>,
    u: Option<f64>,
    mu: Option<f64>,
    tau: Option<f64>,
    p_value: Option<f64>,
    min: Option<f64>,
    n: Option<usize>,
    mean: Option<f64>,
    median: Option<f64>,
    sd: Option<f64>,
    skewness: Option<f64>,
    kurtosis: Option<f64>,
    error: Option<String>,
}

fn threshold(l: &Loaded, sel: &crate::ThresholdSelectArgs) -> CliResult<Artifacts> {
    let (grid, opts) = threshold_options(sel)?;
    let mut groups: Vec<(String, Vec<f64>)> = group_events(&l.parsed.events)
        .into_iter()
        .map(|(rt, e)| (rt.canonical_name().to_string(), losses_of(&e)))
        .collect();
    groups.push(("All".into(), losses_of(&l.parsed.events)));
    let mut table = Vec::new();
    let mut candidates = Vec::new();
    for (group, losses) in groups {
        let mut row = ThresholdRow {
            group: group.clone(),
            level: None,
            u: None,
            mu: None,
            tau: None,
            p_value: None,
            min: None,
            n: None,
            mean: None,
            median: None,
            sd: None,
            skewness: None,
            kurtosis: None,
            error: None,
        };
        match select_threshold(&losses, &grid, &opts) {
            Ok(s) => {
                for c in &s.candidates {
                    candidates.push(json!({
                        "group": group, "level": c.level, "u": c.u, "n_exceed": c.n_exceed,
                        "mu": c.params.map(|p| p.scale_mu), "tau": c.params.map(|p| p.tail_tau),
                        "ks": c.ks.as_ref().map(|k| k.statistic), "p_value": c.p_value,
                        "passed": c.passed, "failure": c.failure,
                    }));
                }
                let chosen = if sel.threshold_level.is_some() { s.candidates.first().cloned() } else { s.selected };
                match chosen {
                    Some(c) => {
                        let above: Vec<f64> = losses.iter().copied().filter(|x| *x > c.u).collect();
                        if !above.is_empty() {
                            let m = moments(group.clone(), &above);
                            row.min = Some(m.min);
                            row.n = Some(m.n);
                            row.mean = Some(m.mean);
                            row.median = Some(m.median);
                            row.sd = Some(m.sd);
                            row.skewness = Some(m.skewness);
                            row.kurtosis = Some(m.kurtosis);
                        }
                        row.level = Some(c.level);
                        row.u = Some(c.u);
                        row.mu = c.params.map(|p| p.scale_mu);
                        row.tau = c.params.map(|p| p.tail_tau);
                        row.p_value = c.p_value;
                    }
                    None => row.error = Some("no threshold passes".into()),
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        table.push(row);
    }
    let mut a = Artifacts::default();
    a.add("thresholds.csv", write_rows(&table)?);
    a.add_json("threshold_candidates.json", &candidates).map_err(csv_err)?;
    Ok(a)
}

fn coefficient_csv(models: &[(&str, &RegressionFit)]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["model", "parameter", "covariate", "estimate", "se", "score_ratio", "p_value", "stars"])
            .map_err(csv_err)?;
        for (name, fit) in models {
            for r in fit.coefficient_table() {
                w.write_record([
                    name.to_string(),
                    r.parameter,
                    r.covariate,
                    r.estimate.to_string(),
                    r.se.to_string(),
                    r.score_ratio.to_string(),
                    r.p_value.to_string(),
                    r.stars,
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(csv_err)?;
    }
    Ok(buf)
}

fn fit_summary(fit: &RegressionFit) -> serde_json::Value {
    json!({
        "family": fit.family.name(), "n_obs": fit.n_obs, "log_likelihood": fit.log_likelihood,
        "aic": fit.aic, "effective_df": fit.effective_df, "converged": fit.converged,
        "iterations": fit.iterations, "dropped_columns": fit.dropped_columns, "warnings": fit.warnings,
    })
}

fn severity_family(name: &str) -> CliResult<ResponseFamily> {
    match name.to_ascii_lowercase().as_str() {
        "gpd" => Ok(ResponseFamily::Gpd),
        "lognormal" => Ok(ResponseFamily::LogNormal),
        "loglogistic" => Ok(ResponseFamily::LogLogistic),
        other => Err(CliError::Input(format!("unknown severity family `{other}` (gpd, lognormal, loglogistic)"))),
    }
}

fn severity_spec(family: ResponseFamily, columns: Vec<String>, u: f64) -> LinkModelSpec {
    let spec = LinkModelSpec::new(family, columns);
    if family == ResponseFamily::Gpd {
        spec.with_threshold(u)
    } else {
        spec
    }
}

fn fit_severity(y: &[f64], rows: &[CovariateRow], spec: &LinkModelSpec) -> lda_core::Result<RegressionFit> {
    if spec.family == ResponseFamily::Gpd {
        fit_gpd_regression(y, rows, spec)
    } else {
        fit_severity_family_regression(y, rows, spec)
    }
}

fn fit(l: &Loaded, a: &crate::FitArgs) -> CliResult<Artifacts> {
    let family = severity_family(&a.family)?;
    let events = &l.parsed.events;
    let mut groups: Vec<(String, Vec<LossEvent>)> = Vec::new();
    if a.mode.joint {
        groups.push(("all".into(), events.clone()));
    } else {
        groups.extend(group_events(events).into_iter().map(|(rt, e)| (rt.slug().to_string(), e)));
    }
    let mut out = Artifacts::default();
    let mut summary = BTreeMap::new();
    for (name, evs) in groups {
        let mut entry = serde_json::Map::new();
        let result = (|| -> CliResult<()> {
            let encoded = encode(&evs, l.window, a.mode.joint)?;
            let c = choose_threshold(&losses_of(&evs), &a.select)?;
            let ex = exceedances(&evs, &encoded, &c);
            entry.insert("threshold_u".into(), json!(ex.u));
            entry.insert("threshold_level".into(), json!(ex.level));
            entry.insert("n_exceed".into(), json!(ex.y.len()));
            let mut spec = severity_spec(family, base_columns(), ex.u);
            if a.mode.joint {
                spec.design_columns.extend(risk_type_columns(&ex.types));
            }
            if let Some(grid) = &a.spline_df_grid {
                let grids = vec![grid.clone(); family.n_parameters()];
                let sel = select_smoothing_df(&ex.y, &ex.rows, &spec, &grids).map_err(CliError::stage("fit"))?;
                let file = format!("aic_{name}.csv");
                let mut rows = Vec::new();
                for p in &sel.points {
                    let mut r = serde_json::Map::new();
                    for (i, d) in p.dfs.iter().enumerate() {
                        r.insert(format!("df_{}", family.parameter_names()[i]), json!(d));
                    }
                    r.insert("aic".into(), json!(p.aic));
                    r.insert("effective_df".into(), json!(p.effective_df));
                    r.insert("error".into(), json!(p.error));
                    rows.push(r);
                }
                out.add_json(format!("aic_{name}.json"), &rows).map_err(csv_err)?;
                entry.insert("aic_surface".into(), json!(file.replace(".csv", ".json")));
                if let Some(best) = sel.best_dfs() {
                    spec = spec.with_time_effects(best.iter().map(|d| TimeEffect::SplineDf(*d)).collect());
                    entry.insert("selected_df".into(), json!(best));
                }
            }
            let severity = fit_severity(&ex.y, &ex.rows, &spec).map_err(CliError::stage("fit severity"))?;
            let frequency = fit_frequency(&evs, l.window).map_err(CliError::stage("fit frequency"))?;
            out.add(format!("coefficients_{name}.csv"), coefficient_csv(&[("frequency", &frequency), ("severity", &severity)])?);
            if let Ok(q) = quantile_residuals(&severity, &ex.y, &ex.rows) {
                let rows: Vec<_> = q
                    .theoretical
                    .iter()
                    .zip(&q.sorted)
                    .map(|(t, s)| json!({ "theoretical": t, "sample": s }))
                    .collect();
                let file = format!("qq_{name}.json");
                out.add_json(file.clone(), &json!({
                    "figure": figure("qq", &file, "theoretical", "sample", false, false),
                    "clamped": q.clamped,
                    "points": rows,
                }))
                .map_err(csv_err)?;
            }
            entry.insert("severity".into(), fit_summary(&severity));
            entry.insert("frequency".into(), fit_summary(&frequency));
            Ok(())
        })();
        if let Err(e) = result {
            let msg = match e {
                CliError::Input(m) => return Err(CliError::Input(m)),
                CliError::Stage { stage, cause } => format!("{stage}: {cause}"),
            };
            entry.insert("error".into(), json!(msg));
        }
        summary.insert(name, serde_json::Value::Object(entry));
    }
    out.add_json("fit_summary.json", &summary).map_err(csv_err)?;
    Ok(out)
}

fn pooled_exceedances(l: &Loaded, sel: &crate::ThresholdSelectArgs) -> CliResult<crate::models::Exceedances> {
    let events = &l.parsed.events;
    let encoded = encode(events, l.window, true)?;
    let c = choose_threshold(&losses_of(events), sel)?;
    Ok(exceedances(events, &encoded, &c))
}

fn vuong(l: &Loaded, a: &crate::VuongArgs) -> CliResult<Artifacts> {
    let ex = pooled_exceedances(l, &a.select)?;
    let spec = severity_spec(ResponseFamily::Gpd, base_columns(), ex.u);
    let joint = fit_joint_model(&ex.y, &ex.rows, &ex.types, &spec).map_err(CliError::stage("joint model"))?;
    let mut decoupled = BTreeMap::new();
    for (rt, f) in fit_decoupled_models(&ex.y, &ex.rows, &ex.types, &spec).map_err(CliError::stage("decoupled models"))? {
        decoupled.insert(rt, f.map_err(|e| CliError::Stage { stage: "decoupled models", cause: format!("{rt}: {e}") })?);
    }
    let v = vuong_variance_test(&joint, &decoupled, &ex.y, &ex.rows, &ex.types, a.dof)
        .map_err(CliError::stage("vuong"))?;
    let mut out = Artifacts::default();
    out.add_json(
        "vuong.json",
        &json!({
            "threshold_u": ex.u, "n": v.n, "statistic": v.statistic, "dof": v.dof, "p_value": v.p_value,
            "joint": fit_summary(&joint),
            "decoupled": decoupled.iter().map(|(rt, f)| (rt.slug().to_string(), fit_summary(f))).collect::<BTreeMap<_, _>>(),
        }),
    )
    .map_err(csv_err)?;
    let llr: Vec<_> = v
        .per_observation_llr
        .iter()
        .zip(&ex.types)
        .map(|(d, rt)| json!({ "risk_type": rt.slug(), "llr": d }))
        .collect();
    out.add_json("vuong_llr.json", &llr).map_err(csv_err)?;
    Ok(out)
}

fn ks_table(l: &Loaded, a: &crate::KsArgs) -> CliResult<Artifacts> {
    let families: Vec<FamilyTag> = match &a.families {
        Some(list) => list
            .iter()
            .map(|s| s.parse().map_err(|e: lda_core::Error| CliError::Input(e.to_string())))
            .collect::<CliResult<_>>()?,
        None => FamilyTag::ALL.to_vec(),
    };
    let losses = losses_of(&l.parsed.events);
    let types: Vec<RiskType> = l.parsed.events.iter().map(|e| e.risk_type).collect();
    let rows = family_comparison_table(&losses, &families, a.by_type.then_some(types.as_slice()))
        .map_err(CliError::stage("ks-table"))?;
    let mut out = Artifacts::default();
    out.add_csv("ks_table.csv", |w| write_family_table_csv(w, &rows)).map_err(csv_err)?;
    Ok(out)
}

fn rank(l: &Loaded, a: &crate::RankArgs) -> CliResult<Artifacts> {
    let events = &l.parsed.events;
    let encoded = encode(events, l.window, true)?;
    let types: Vec<RiskType> = events.iter().map(|e| e.risk_type).collect();
    let rt_cols = risk_type_columns(&types);
    let mut columns = base_columns();
    columns.push("time".into());
    columns.extend(rt_cols.iter().cloned());
    let losses = losses_of(events);
    let ds = RankedDataset::new(&losses, &encoded.rows, &columns).map_err(CliError::stage("rank"))?;
    // constant dummies cannot be estimated; drop them from the design
    let informative: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(j, _)| {
            let col = ds.design.column(j + 1);
            col.iter().any(|v| *v != col[0])
        })
        .map(|(_, c)| c.clone())
        .collect();
    let ds = RankedDataset::new(&losses, &encoded.rows, &informative).map_err(CliError::stage("rank"))?;
    let fit = fit_rank_ols(&ds).map_err(CliError::stage("rank regression"))?;
    let mut out = Artifacts::default();
    let coef: Vec<RankCoefficient> = fit
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| RankCoefficient {
            covariate: c.clone(),
            estimate: fit.coefficients[j],
            se: fit.standard_errors[j],
            t_ratio: fit.t_ratios[j],
        })
        .collect();
    out.add("rank_coefficients.csv", write_rows(&coef)?);
    let curve = concordance_curve(&ds.ranks, &fit.fitted).map_err(CliError::stage("rank"))?;
    out.add_csv("concordance.csv", |w| write_concordance_csv(w, &curve)).map_err(csv_err)?;
    out.add_json("concordance_figure.json", &figure("concordance", "concordance.csv", "x", "y", false, false))
        .map_err(csv_err)?;
    let mut summary = serde_json::Map::new();
    summary.insert("rga_full".into(), json!(rga(&ds.ranks, &fit.fitted).map_err(CliError::stage("rank"))?));
    summary.insert("columns".into(), json!(informative));
    if a.rga_test {
        let seed = require_seed(a.seed, "--rga-test")?;
        let refit = a.refit;
        let opts = RgaTestOptions { subsamples: a.d, subsample_size: a.subsample, refit, seed, ..Default::default() };
        let table = covariate_significance_table(&ds, &informative, &opts).map_err(CliError::stage("rga test"))?;
        out.add_csv("covariate_tests.csv", |w| write_rank_table_csv(w, &table)).map_err(csv_err)?;
        let present_rt: Vec<String> = informative.iter().filter(|c| rt_cols.contains(c)).cloned().collect();
        if !present_rt.is_empty() {
            let rest: Vec<String> = informative.iter().filter(|c| !present_rt.contains(c)).cloned().collect();
            let joint = rga_significance_test(&ds, &informative, &rest, &opts).map_err(CliError::stage("rga test"))?;
            summary.insert(
                "risk_types_jointly".into(),
                json!({ "s_value": joint.s_value, "s_class": joint.s_class.label(), "binomial": joint.binomial }),
            );
        }
        if let Some(per) = a.per_type_subsample {
            let base: Vec<String> = informative.iter().filter(|c| !rt_cols.contains(c)).cloned().collect();
            let js_opts = RgaTestOptions { subsample_size: per, ..opts.clone() };
            let entry = match joint_vs_separate_rank_test(&losses, &encoded.rows, &types, &base, &js_opts) {
                Ok(r) => json!({ "s_value": r.s_value, "s_class": r.s_class.label(), "binomial": r.binomial }),
                Err(e) => json!({ "error": e.to_string() }),
            };
            summary.insert("joint_vs_separate".into(), entry);
        }
    }
    out.add_json("rank_summary.json", &summary).map_err(csv_err)?;
    Ok(out)
}

#[derive(Serialize)]
struct RankCoefficient {
    covariate: String,
    estimate: f64,
    se: f64,
    t_ratio: f64,
}

/// Fitted frequency and severity models evaluated per study year.
fn yearly_parameters(l: &Loaded, p: &crate::ProfileArgs) -> CliResult<(Vec<YearParameters>, serde_json::Value)> {
    let mut profile = load_profile(&p.profile)?;
    for c in base_columns() {
        if !profile.values.contains_key(&c) {
            profile.set(&c, 0.0);
        }
    }
    let events: Vec<LossEvent> = match &p.risk_type {
        Some(s) => {
            let rt = parse_risk_type(s)?;
            l.parsed.events.iter().filter(|e| e.risk_type == rt).cloned().collect()
        }
        None => l.parsed.events.clone(),
    };
    if events.is_empty() {
        return Err(CliError::Input("no events for the requested risk type".into()));
    }
    let encoded = encode(&events, l.window, false)?;
    let c = choose_threshold(&losses_of(&events), &p.select)?;
    let ex = exceedances(&events, &encoded, &c);
    let spec = severity_spec(ResponseFamily::Gpd, base_columns(), ex.u);
    let severity = fit_gpd_regression(&ex.y, &ex.rows, &spec).map_err(CliError::stage("fit severity"))?;
    let frequency = fit_frequency(&events, l.window).map_err(CliError::stage("fit frequency"))?;
    let start = l.window.start_year();
    let mut years = Vec::new();
    for year in start..=l.window.end_year() {
        let offset = f64::from(year - start);
        let freq_row = CovariateRow { time: offset, values: profile.values.clone() };
        // severities are indexed by event time; use the middle of the year
        let sev_row = CovariateRow { time: offset + 0.5, values: profile.values.clone() };
        let lambda = frequency.predict_lambda(&freq_row).map_err(CliError::stage("predict"))?;
        let gpd = severity.predict_gpd(&sev_row).map_err(CliError::stage("predict"))?;
        years.push(YearParameters { year, lambda, gpd, threshold_u: ex.u });
    }
    let meta = json!({
        "threshold_u": ex.u, "threshold_level": ex.level, "n_exceed": ex.y.len(),
        "frequency": fit_summary(&frequency), "severity": fit_summary(&severity), "profile": profile.values,
    });
    Ok((years, meta))
}

fn var(l: &Loaded, a: &crate::VarArgs) -> CliResult<Artifacts> {
    let (years, meta) = yearly_parameters(l, &a.profile)?;
    let points = var_trajectory(a.alpha, &years);
    let mut out = Artifacts::default();
    out.add_csv("var_trajectory.csv", |w| write_var_trajectory_csv(w, &points)).map_err(csv_err)?;
    out.add_json("var_figure.json", &figure("var", "var_trajectory.csv", "year", "log_var", false, false))
        .map_err(csv_err)?;
    if let Some(n) = a.mc_sims {
        let seed = require_seed(a.profile.select.seed, "--mc-sims")?;
        let mut rows = Vec::new();
        for (i, y) in years.iter().enumerate() {
            let r = mc_var(a.alpha, y.lambda, &Severity::Gpd(y.gpd), y.threshold_u, n, seed.wrapping_add(i as u64));
            rows.push(match r {
                Ok(m) => json!({ "year": y.year, "mc_var": m.var, "standard_error": m.standard_error }),
                Err(e) => json!({ "year": y.year, "error": e.to_string() }),
            });
        }
        out.add_json("var_mc.json", &rows).map_err(csv_err)?;
    }
    out.add_json("models.json", &meta).map_err(csv_err)?;
    Ok(out)
}

fn premium(l: &Loaded, a: &crate::PremiumArgs) -> CliResult<Artifacts> {
    let seed = require_seed(a.profile.select.seed, "premium")?;
    let utilities: Vec<Utility> = a
        .utilities
        .iter()
        .map(|s| s.parse().map_err(|e: lda_core::Error| CliError::Input(e.to_string())))
        .collect::<CliResult<_>>()?;
    let (years, meta) = yearly_parameters(l, &a.profile)?;
    let opts = PremiumOptions { n_sims: a.n_sims, seed, insurer_wealth: None, pool_bracket: DEFAULT_POOL_BRACKET };
    let series = premium_timeseries(&years, a.w, a.k, &utilities, &opts).map_err(CliError::stage("premium"))?;
    let mut out = Artifacts::default();
    out.add_csv("premium_series.csv", |w| write_premium_series_csv(w, &series)).map_err(csv_err)?;
    out.add_json(
        "premium_figures.json",
        &json!([
            figure("premium", "premium_series.csv", "year", "p_plus", false, true),
            figure("relative_wealth", "premium_series.csv", "year", "log_relative_wealth", false, false),
        ]),
    )
    .map_err(csv_err)?;
    out.add_json("models.json", &meta).map_err(csv_err)?;
    Ok(out)
}

fn simulate(a: &crate::SimulateArgs) -> CliResult<(Artifacts, SyntheticSpec)> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<SyntheticSpec>(&text)
                .map_err(|e| CliError::Input(format!("spec {}: {e}", path.display())))?
        }
        None => SyntheticSpec::unit(a.companies, a.years, a.seed),
    };
    spec.seed = a.seed;
    let sim = generate_synthetic(&spec).map_err(CliError::stage("simulate"))?;
    let mut out = Artifacts::default();
    out.add_csv("events.csv", |w| write_csv(w, &sim.events)).map_err(csv_err)?;
    out.add_json("truth.json", &sim.truth).map_err(csv_err)?;
    let mut names: Vec<String> = sim
        .panel
        .iter()
        .flat_map(|r| r.covariates.values.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    names.sort();
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["company_id".to_string(), "year".into(), "count".into(), "time".into()];
        header.extend(names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for r in &sim.panel {
            let mut rec = vec![r.company_id.clone(), r.year.to_string(), r.count.to_string(), r.covariates.time.to_string()];
            rec.extend(names.iter().map(|n| r.covariates.get(n).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)?;
    }
    out.add("panel.csv", buf);
    Ok((out, spec))
}
