//! Probability laws and special functions shared by the rest of the crate.

mod family;
mod gamma;
mod gpd;
mod normal;
mod vargamma;

pub use family::{fit_family_mle, FamilyFit, FamilyTag, SeverityFamily};
pub use gamma::{digamma, ln_gamma, real_gamma};
pub use gpd::{fit_gpd_mle, GpdFit, GpdParams};
pub use normal::{chi_squared_sf, normal_cdf, normal_quantile, normal_sf};
pub use vargamma::{vg_upper_tail, VarianceGammaParams};
