//! Loss-event records, CSV ingestion, covariate encoding and synthetic data.
//!
//! Monetary losses are in USD millions throughout.

mod csvio;
mod encode;
mod event;
mod frequency;
mod risk;
mod synth;

pub use csvio::{parse_csv, parse_csv_path, write_csv, ParsedEvents, RowRejection, CSV_COLUMNS};
pub use encode::{
    encode_covariates, years_since, CovariateRow, EncodeOptions, Encoded, BASE_DUMMIES,
};
pub use event::{LossEvent, Sector, StudyWindow};
pub use frequency::{aggregate_frequency, CovariateConflict, FrequencyData, FrequencyRecord};
pub use risk::RiskType;
pub use synth::{
    generate_synthetic, CompanyMix, Coefficients, SyntheticOutput, SyntheticSpec, SyntheticTruth,
    TimeWave,
};
