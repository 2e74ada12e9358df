use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(x: f64) -> f64 {
    standard().cdf(x)
}

pub fn normal_sf(x: f64) -> f64 {
    standard().sf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

/// Upper tail P[X >= x] of a chi-squared law with `dof` degrees of freedom.
pub fn chi_squared_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(dof).map(|d| d.sf(x)).unwrap_or(f64::NAN)
}
