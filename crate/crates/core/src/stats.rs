//! Distribution helpers for p-values and confidence levels. statrs works in
//! f64; generic callers bridge through `Real::as_f64` — test statistics stay
//! in the caller's scalar type, only tail probabilities pass through here.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Upper tail of the chi-squared distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if !x.is_finite() || x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).expect("df > 0").sf(x)
}

/// Upper tail of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().sf(z)
}

/// Two-sided p-value for a z statistic.
pub fn normal_two_sided(z: f64) -> f64 {
    2.0 * normal_sf(z.abs())
}

/// z multiplier for a two-sided confidence level (0.95 -> 1.9600).
pub fn z_for_level(level: f64) -> f64 {
    assert!(level > 0.0 && level < 1.0, "confidence level in (0,1)");
    Normal::new(0.0, 1.0)
        .unwrap()
        .inverse_cdf(0.5 + level / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_reference_values() {
        // qchisq(0.95, 1) = 3.841459
        assert!((chi2_sf(3.841459, 1.0) - 0.05).abs() < 1e-6);
        // pchisq(5, 2, lower=FALSE) = exp(-2.5)
        assert!((chi2_sf(5.0, 2.0) - (-2.5f64).exp()).abs() < 1e-12);
        assert_eq!(chi2_sf(0.0, 3.0), 1.0);
    }

    #[test]
    fn normal_reference_values() {
        assert!((z_for_level(0.95) - 1.959964).abs() < 1e-5);
        assert!((normal_sf(1.644854) - 0.05).abs() < 1e-6);
        assert!((normal_two_sided(-1.959964) - 0.05).abs() < 1e-6);
    }
}
