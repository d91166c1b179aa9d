use crate::error::{Error, Result};

/// Piecewise-linear function of time through strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::domain(format!(
                "curve needs >= 2 matching knots, got {} times and {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("curve knots must be strictly increasing"));
        }
        Ok(Self { times, values })
    }

    /// Constant curve on `[t0, t1]`.
    pub fn constant(t0: f64, t1: f64, value: f64) -> Result<Self> {
        Self::new(vec![t0, t1], vec![value, value])
    }

    /// Samples `f` on `n + 1` uniform knots of `[t0, t1]`.
    pub fn sample<F: FnMut(f64) -> f64>(t0: f64, t1: f64, n: usize, mut f: F) -> Result<Self> {
        let n = n.max(1);
        let times: Vec<f64> = (0..=n)
            .map(|k| if k == n { t1 } else { t0 + (t1 - t0) * k as f64 / n as f64 })
            .collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::domain(format!(
                "t = {t} outside [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        Ok(self.at(t))
    }

    /// Evaluation without the range check; clamps outside the knots.
    pub(crate) fn at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&k| k <= t);
        if idx == 0 {
            return self.values[0];
        }
        let i = idx - 1;
        if self.times[i] == t || i + 1 == self.times.len() {
            return self.values[i];
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// Pointwise product with a scalar.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_at_knots_and_linear_between() {
        let c = Curve::new(vec![0.0, 0.5, 2.0], vec![1.0, 3.0, -1.0]).unwrap();
        assert_eq!(c.eval(0.5).unwrap(), 3.0);
        assert_eq!(c.eval(2.0).unwrap(), -1.0);
        assert_eq!(c.eval(0.25).unwrap(), 2.0);
        assert_eq!(c.eval(1.25).unwrap(), 1.0);
        assert!(c.eval(2.0 + 1e-12).is_err());
        assert!(c.eval(-1e-12).is_err());
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(Curve::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Curve::new(vec![0.0], vec![1.0]).is_err());
        assert!(Curve::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }
}
