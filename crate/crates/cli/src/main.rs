//! `lda`: batch front end over `lda-core`.
//!
//! Every subcommand reads its inputs, renders all artifacts in memory and
//! only then writes them, together with a `manifest.json`, into `--out`.

mod artifacts;
mod models;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "lda", version, about = "Frequency, severity, capital and premium analysis of event losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a loss CSV and write the accepted and rejected rows.
    Ingest(InputArgs),
    /// Descriptive statistics per risk type.
    Describe(InputArgs),
    /// Hill estimator curves per risk type.
    Hill(HillArgs),
    /// Threshold selection by the GPD goodness-of-fit test.
    Threshold(ThresholdArgs),
    /// Frequency and severity regressions.
    Fit(FitArgs),
    /// Variance test of the joint against the per-type severity models.
    Vuong(VuongArgs),
    /// Log-likelihood, AIC and KS p-values for candidate severity families.
    KsTable(KsArgs),
    /// Rank regression, concordance curve and RGA significance tests.
    Rank(RankArgs),
    /// Yearly single-loss-approximation VaR for a covariate profile.
    Var(VarArgs),
    /// Yearly premiums, pool sizes and relative wealth for a profile.
    Premium(PremiumArgs),
    /// Generate a synthetic loss CSV from a known model.
    Simulate(SimulateArgs),
}

#[derive(Args, Serialize, Clone)]
pub struct InputArgs {
    /// Loss CSV.
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2008)]
    pub window_start: i32,
    #[arg(long, default_value_t = 2020)]
    pub window_end: i32,
}

#[derive(Args, Serialize, Clone)]
pub struct HillArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: InputArgs,
    /// Smallest number of upper order statistics.
    #[arg(long, default_value_t = 5)]
    pub k_min: usize,
    /// Largest number of upper order statistics; default n - 1.
    #[arg(long)]
    pub k_max: Option<usize>,
}

#[derive(Args, Serialize, Clone)]
pub struct ThresholdSelectArgs {
    /// Goodness-of-fit level.
    #[arg(long = "gof-alpha", default_value_t = 0.05)]
    pub gof_alpha: f64,
    /// Comma-separated quantile levels; default 0, 0.50, 0.55, ..., 0.95.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Use this quantile level instead of searching.
    #[arg(long)]
    pub threshold_level: Option<f64>,
    /// Parametric bootstrap resamples for the KS p-value (needs --seed).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Serialize, Clone)]
pub struct ThresholdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub select: ThresholdSelectArgs,
}

#[derive(Args, Serialize, Clone)]
#[group(required = true, multiple = false)]
pub struct FitMode {
    /// One model over all risk types with type dummies.
    #[arg(long)]
    pub joint: bool,
    /// One model per risk type.
    #[arg(long)]
    pub decoupled: bool,
}

#[derive(Args, Serialize, Clone)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub mode: FitMode,
    #[command(flatten)]
    #[serde(flatten)]
    pub select: ThresholdSelectArgs,
    /// Severity family: gpd, lognormal or loglogistic.
    #[arg(long, default_value = "gpd")]
    pub family: String,
    /// Effective degrees of freedom to try for the time spline of each
    /// severity parameter (AIC selection).
    #[arg(long, value_delimiter = ',')]
    pub spline_df_grid: Option<Vec<f64>>,
}

#[derive(Args, Serialize, Clone)]
pub struct VuongArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub select: ThresholdSelectArgs,
    /// Degrees of freedom; default the larger model's coefficient count.
    #[arg(long)]
    pub dof: Option<usize>,
}

#[derive(Args, Serialize, Clone)]
pub struct KsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: InputArgs,
    /// Comma-separated families; default all.
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    /// Add one block per risk type.
    #[arg(long)]
    pub by_type: bool,
}

#[derive(Args, Serialize, Clone)]
pub struct RankArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: InputArgs,
    /// Run the subsample RGA significance tests.
    #[arg(long)]
    pub rga_test: bool,
    /// Number of subsamples.
    #[arg(long, default_value_t = 5000)]
    pub d: usize,
    /// Subsample size.
    #[arg(long, default_value_t = 10)]
    pub subsample: usize,
    /// Refit both models on every subsample instead of reusing the
    /// full-sample coefficients.
    #[arg(long)]
    pub refit: bool,
    /// Per-type subsample size for the joint-versus-separate test.
    #[arg(long)]
    pub per_type_subsample: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Serialize, Clone)]
pub struct ProfileArgs {
    /// JSON object mapping covariate columns to values.
    #[arg(long)]
    #[serde(skip)]
    pub profile: PathBuf,
    /// Restrict both models to one risk type (slug or name).
    #[arg(long)]
    pub risk_type: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub select: ThresholdSelectArgs,
}

#[derive(Args, Serialize, Clone)]
pub struct VarArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub profile: ProfileArgs,
    #[arg(long, default_value_t = 0.999)]
    pub alpha: f64,
    /// Also run the Monte Carlo oracle with this many years (needs --seed).
    #[arg(long)]
    pub mc_sims: Option<usize>,
}

#[derive(Args, Serialize, Clone)]
pub struct PremiumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub profile: ProfileArgs,
    /// Company wealth in loss units.
    #[arg(long, default_value_t = 1000.0)]
    pub w: f64,
    /// Per-event cover limit as a fraction of wealth.
    #[arg(long, default_value_t = 0.1)]
    pub k: f64,
    /// Comma-separated utilities: log, crra_<gamma>.
    #[arg(long, value_delimiter = ',', default_value = "log,crra_0.2,crra_0.7")]
    pub utilities: Vec<String>,
    #[arg(long, default_value_t = 100_000)]
    pub n_sims: usize,
}

#[derive(Args, Serialize, Clone)]
pub struct SimulateArgs {
    /// Generator spec (JSON); default an intercept-only model.
    #[arg(long)]
    #[serde(skip)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Companies for the default spec.
    #[arg(long, default_value_t = 200)]
    pub companies: usize,
    /// Years for the default spec.
    #[arg(long, default_value_t = 13)]
    pub years: usize,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Stage { stage: &'static str, cause: String },
}

impl CliError {
    pub fn stage(stage: &'static str) -> impl Fn(lda_core::Error) -> CliError {
        move |e| CliError::Stage { stage, cause: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match stages::run(cli.command) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(CliError::Input(msg)) => {
            eprintln!("input error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Stage { stage, cause }) => {
            eprintln!("{stage} failed: {cause}");
            ExitCode::from(1)
        }
    }
}
