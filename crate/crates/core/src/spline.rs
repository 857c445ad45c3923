//! Restricted cubic spline basis (natural spline, Harrell parameterization):
//! k knots give k-1 columns, the first of which is the identity, and the
//! curve is linear beyond the boundary knots.

use crate::error::{Error, Result};
use crate::real::Real;

pub const DEFAULT_KNOT_QUANTILES: [f64; 4] = [0.05, 0.35, 0.65, 0.95];

/// Basis row for one value: `[x, s_1(x), ..., s_{k-2}(x)]`.
pub fn rcs_basis<F: Real>(x: F, knots: &[F]) -> Vec<F> {
    let k = knots.len();
    debug_assert!(k >= 3);
    let t_last = knots[k - 1];
    let t_pen = knots[k - 2];
    let norm = (t_last - knots[0]) * (t_last - knots[0]);
    let cube = |v: F| {
        if v > F::zero() {
            v * v * v
        } else {
            F::zero()
        }
    };
    let mut out = Vec::with_capacity(k - 1);
    out.push(x);
    for j in 0..(k - 2) {
        let tj = knots[j];
        let term = cube(x - tj)
            - cube(x - t_pen) * (t_last - tj) / (t_last - t_pen)
            + cube(x - t_last) * (t_pen - tj) / (t_last - t_pen);
        out.push(term / norm);
    }
    out
}

pub fn validate_knots<F: Real>(knots: &[F]) -> Result<()> {
    if knots.len() < 3 {
        return Err(Error::Invalid(format!(
            "restricted cubic spline needs at least 3 knots, got {}",
            knots.len()
        )));
    }
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::Invalid("non-finite spline knot".into()));
    }
    for w in knots.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Invalid(
                "spline knots must be strictly ascending".into(),
            ));
        }
    }
    Ok(())
}

/// Default knots: the {5, 35, 65, 95}% quantiles (linear-interpolation
/// quantiles) of the observed values. Fails when the values are too
/// concentrated to give distinct knots.
pub fn default_knots<F: Real>(values: &[F]) -> Result<Vec<F>> {
    if values.is_empty() {
        return Err(Error::Invalid("no values to place spline knots on".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let knots: Vec<F> = DEFAULT_KNOT_QUANTILES
        .iter()
        .map(|&p| {
            let h = F::of(p) * F::of_usize(n - 1);
            let lo = h.floor().as_f64() as usize;
            let frac = h - h.floor();
            if lo + 1 < n {
                sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
            } else {
                sorted[n - 1]
            }
        })
        .collect();
    validate_knots(&knots).map_err(|_| {
        Error::Invalid("covariate values too concentrated for distinct default spline knots".into())
    })?;
    Ok(knots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_count_is_knots_minus_one() {
        let knots = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(rcs_basis(1.5, &knots).len(), 3);
        assert_eq!(rcs_basis(1.5, &knots[..3]).len(), 2);
    }

    #[test]
    fn first_column_is_identity_and_zero_below_first_knot() {
        let knots = [1.0, 2.0, 3.0, 4.0];
        let b = rcs_basis(0.5, &knots);
        assert_eq!(b[0], 0.5);
        assert_eq!(&b[1..], &[0.0, 0.0]);
    }

    #[test]
    fn linear_beyond_boundary_knots() {
        let knots = [0.0, 1.0, 2.0, 3.0];
        // three collinear x beyond the last knot: second differences vanish
        let b1 = rcs_basis(4.0, &knots);
        let b2 = rcs_basis(5.0, &knots);
        let b3 = rcs_basis(6.0, &knots);
        for j in 0..b1.len() {
            let second_diff: f64 = (b3[j] - b2[j]) - (b2[j] - b1[j]);
            assert!(second_diff.abs() < 1e-10, "column {j}: {second_diff}");
        }
    }

    #[test]
    fn default_knots_are_quantiles() {
        let values: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let knots = default_knots(&values).unwrap();
        assert_eq!(knots, vec![5.0, 35.0, 65.0, 95.0]);
    }

    #[test]
    fn concentrated_values_fail() {
        let values = vec![1.0f64; 50];
        assert!(default_knots(&values).is_err());
        assert!(validate_knots(&[1.0f64, 1.0, 2.0]).is_err());
        assert!(validate_knots(&[1.0f64, 2.0]).is_err());
    }
}
