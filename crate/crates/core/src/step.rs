use crate::error::{Error, Result};
use crate::real::Real;

/// Right-continuous step function: value is `initial` before the first jump
/// time and `values[i]` on `[times[i], times[i+1])`. Estimator curves
/// (cumulative hazards, survival, cumulative incidence) all live here;
/// variance and confidence bands are per-jump and optional.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction<F: Real = f64> {
    initial: F,
    times: Vec<F>,
    values: Vec<F>,
    variance: Option<Vec<F>>,
    lower: Option<Vec<F>>,
    upper: Option<Vec<F>>,
}

impl<F: Real> StepFunction<F> {
    pub fn new(initial: F, times: Vec<F>, values: Vec<F>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Invalid(format!(
                "step function has {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if !initial.is_finite() {
            return Err(Error::Invalid("non-finite initial value".into()));
        }
        for w in times.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Invalid(format!(
                    "jump times not strictly ascending at {}",
                    w[1]
                )));
            }
        }
        if times.iter().any(|t| !t.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite step function entry".into()));
        }
        Ok(Self {
            initial,
            times,
            values,
            variance: None,
            lower: None,
            upper: None,
        })
    }

    pub fn constant(initial: F) -> Self {
        Self {
            initial,
            times: Vec::new(),
            values: Vec::new(),
            variance: None,
            lower: None,
            upper: None,
        }
    }

    pub fn with_variance(mut self, variance: Vec<F>) -> Result<Self> {
        if variance.len() != self.times.len() {
            return Err(Error::Invalid("variance length mismatch".into()));
        }
        self.variance = Some(variance);
        Ok(self)
    }

    pub fn with_band(mut self, lower: Vec<F>, upper: Vec<F>) -> Result<Self> {
        if lower.len() != self.times.len() || upper.len() != self.times.len() {
            return Err(Error::Invalid("confidence band length mismatch".into()));
        }
        self.lower = Some(lower);
        self.upper = Some(upper);
        Ok(self)
    }

    /// Value at t (right-continuous).
    pub fn eval(&self, t: F) -> F {
        let n = self.times.partition_point(|x| *x <= t);
        if n == 0 {
            self.initial
        } else {
            self.values[n - 1]
        }
    }

    /// Left limit: value just before t.
    pub fn eval_before(&self, t: F) -> F {
        let n = self.times.partition_point(|x| *x < t);
        if n == 0 {
            self.initial
        } else {
            self.values[n - 1]
        }
    }

    pub fn initial(&self) -> F {
        self.initial
    }

    pub fn times(&self) -> &[F] {
        &self.times
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn variance(&self) -> Option<&[F]> {
        self.variance.as_deref()
    }

    pub fn lower(&self) -> Option<&[F]> {
        self.lower.as_deref()
    }

    pub fn upper(&self) -> Option<&[F]> {
        self.upper.as_deref()
    }

    pub fn n_jumps(&self) -> usize {
        self.times.len()
    }

    pub fn last_time(&self) -> Option<F> {
        self.times.last().copied()
    }

    /// Jump size at the i-th jump time.
    pub fn delta(&self, i: usize) -> F {
        if i == 0 {
            self.values[0] - self.initial
        } else {
            self.values[i] - self.values[i - 1]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (F, F)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sf() -> StepFunction {
        StepFunction::new(1.0, vec![2.0, 4.0], vec![0.5, 0.25]).unwrap()
    }

    #[test]
    fn eval_is_right_continuous() {
        let s = sf();
        assert_eq!(s.eval(1.9), 1.0);
        assert_eq!(s.eval(2.0), 0.5);
        assert_eq!(s.eval(3.9), 0.5);
        assert_eq!(s.eval(4.0), 0.25);
        assert_eq!(s.eval(100.0), 0.25);
    }

    #[test]
    fn left_limits() {
        let s = sf();
        assert_eq!(s.eval_before(2.0), 1.0);
        assert_eq!(s.eval_before(2.5), 0.5);
        assert_eq!(s.eval_before(4.0), 0.5);
    }

    #[test]
    fn deltas() {
        let s = sf();
        assert_eq!(s.delta(0), -0.5);
        assert_eq!(s.delta(1), -0.25);
    }

    #[test]
    fn rejects_unordered_times() {
        assert!(StepFunction::new(0.0, vec![2.0, 2.0], vec![1.0, 2.0]).is_err());
        assert!(StepFunction::new(0.0, vec![3.0, 2.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn empty_function_is_constant() {
        let s = StepFunction::constant(1.0f64);
        assert_eq!(s.eval(5.0), 1.0);
        assert_eq!(s.last_time(), None);
    }
}
