//! Chi-square upper tail for integer degrees of freedom.

use crate::error::{invalid, Result};

/// `P(χ²_df > t)` in closed form: a Poisson sum for even `df`, the normal
/// tail plus a finite series for odd `df`.
pub fn chi2_sf(t: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(invalid("chi-square degrees of freedom must be positive"));
    }
    if t.is_nan() || t < 0.0 {
        return Err(invalid("chi-square statistic must be non-negative"));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    if t == f64::INFINITY {
        return Ok(0.0);
    }
    let half = 0.5 * t;
    let p = if df % 2 == 0 {
        let mut term = (-half).exp();
        let mut sum = term;
        for k in 1..df / 2 {
            term *= half / k as f64;
            sum += term;
        }
        sum
    } else {
        let mut sum = libm::erfc(half.sqrt());
        if df >= 3 {
            let lead = (2.0 * t / core::f64::consts::PI).sqrt() * (-half).exp();
            let mut term = 1.0;
            let mut series = 1.0;
            for j in 2..=(df - 1) / 2 {
                term *= t / (2 * j - 1) as f64;
                series += term;
            }
            sum += lead * series;
        }
        sum
    };
    Ok(p.clamp(0.0, 1.0))
}
