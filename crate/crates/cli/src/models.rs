//! Loading, threshold choice and model fitting shared by several stages.

use std::collections::BTreeMap;
use std::path::Path;

use lda_core::data::{
    aggregate_frequency, encode_covariates, parse_csv_path, CovariateRow, EncodeOptions, Encoded, LossEvent,
    ParsedEvents, RiskType, StudyWindow, BASE_DUMMIES,
};
use lda_core::gamlss::{fit_poisson_regression, LinkModelSpec, RegressionFit, ResponseFamily};
use lda_core::tail::{default_threshold_grid, select_threshold, BootstrapOptions, ThresholdCandidate, ThresholdOptions};

use crate::artifacts::sha256_hex;
use crate::{CliError, CliResult, InputArgs, ThresholdSelectArgs};

pub struct Loaded {
    pub window: StudyWindow,
    pub parsed: ParsedEvents,
    pub input_sha256: String,
}

pub fn load(args: &InputArgs) -> CliResult<Loaded> {
    let window = StudyWindow::years(args.window_start, args.window_end)
        .map_err(|e| CliError::Input(format!("study window: {e}")))?;
    let bytes = std::fs::read(&args.input)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.input.display())))?;
    let parsed = parse_csv_path(Path::new(&args.input), Some(&window))
        .map_err(|e| CliError::Input(format!("{}: {e}", args.input.display())))?;
    if parsed.events.is_empty() {
        return Err(CliError::Input(format!("{}: no valid loss rows", args.input.display())));
    }
    Ok(Loaded { window, parsed, input_sha256: sha256_hex(&bytes) })
}

pub fn encode(events: &[LossEvent], window: StudyWindow, risk_dummies: bool) -> CliResult<Encoded> {
    let opts = EncodeOptions { window, include_risk_dummies: risk_dummies, ..Default::default() };
    encode_covariates(events, &opts).map_err(CliError::stage("encode"))
}

pub fn require_seed(seed: Option<u64>, what: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Input(format!("{what} is stochastic and needs --seed")))
}

pub fn threshold_options(sel: &ThresholdSelectArgs) -> CliResult<(Vec<f64>, ThresholdOptions)> {
    let bootstrap = match sel.bootstrap {
        Some(resamples) => Some(BootstrapOptions { resamples, seed: require_seed(sel.seed, "--bootstrap")? }),
        None => None,
    };
    let (grid, refine) = match sel.threshold_level {
        Some(level) => (vec![level], false),
        None => (sel.grid.clone().unwrap_or_else(default_threshold_grid), true),
    };
    Ok((grid, ThresholdOptions { alpha: sel.gof_alpha, refine, bootstrap }))
}

/// Selected threshold for one group; a fixed `--threshold-level` is used
/// whether or not it passes the test.
pub fn choose_threshold(losses: &[f64], sel: &ThresholdSelectArgs) -> CliResult<ThresholdCandidate> {
    let (grid, opts) = threshold_options(sel)?;
    let s = select_threshold(losses, &grid, &opts).map_err(CliError::stage("threshold"))?;
    if sel.threshold_level.is_some() {
        return s
            .candidates
            .into_iter()
            .next()
            .ok_or_else(|| CliError::Stage { stage: "threshold", cause: "no candidate evaluated".into() });
    }
    s.selected.ok_or_else(|| CliError::Stage {
        stage: "threshold",
        cause: format!("no threshold on the grid passes the GPD test at level {}", sel.gof_alpha),
    })
}

/// Exceedances `loss − u` over `u` with their covariate rows and types.
pub struct Exceedances {
    pub u: f64,
    pub level: f64,
    pub y: Vec<f64>,
    pub rows: Vec<CovariateRow>,
    pub types: Vec<RiskType>,
}

pub fn exceedances(events: &[LossEvent], encoded: &Encoded, c: &ThresholdCandidate) -> Exceedances {
    let mut out = Exceedances { u: c.u, level: c.level, y: Vec::new(), rows: Vec::new(), types: Vec::new() };
    for (ev, row) in events.iter().zip(&encoded.rows) {
        if ev.loss > c.u {
            out.y.push(ev.loss - c.u);
            out.rows.push(row.clone());
            out.types.push(ev.risk_type);
        }
    }
    out
}

pub fn base_columns() -> Vec<String> {
    BASE_DUMMIES.iter().map(|s| s.to_string()).collect()
}

pub fn fit_frequency(events: &[LossEvent], window: StudyWindow) -> lda_core::Result<RegressionFit> {
    let opts = EncodeOptions { window, include_risk_dummies: false, ..Default::default() };
    let freq = aggregate_frequency(events, &opts)?;
    let spec = LinkModelSpec::new(ResponseFamily::Poisson, freq.columns.clone());
    fit_poisson_regression(&freq.records, &spec)
}

pub fn group_events(events: &[LossEvent]) -> BTreeMap<RiskType, Vec<LossEvent>> {
    let mut by: BTreeMap<RiskType, Vec<LossEvent>> = BTreeMap::new();
    for ev in events {
        by.entry(ev.risk_type).or_default().push(ev.clone());
    }
    by
}

pub fn parse_risk_type(s: &str) -> CliResult<RiskType> {
    s.parse().map_err(|e: lda_core::Error| CliError::Input(e.to_string()))
}

/// Profile JSON: `{"R_big": 1, "L_USA": 1, ...}`.
pub fn load_profile(path: &Path) -> CliResult<CovariateRow> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read profile {}: {e}", path.display())))?;
    let values: BTreeMap<String, f64> = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("profile {}: {e}", path.display())))?;
    if values.contains_key("time") {
        return Err(CliError::Input("profile must not set `time`; it is set per year".into()));
    }
    Ok(CovariateRow { time: 0.0, values })
}
