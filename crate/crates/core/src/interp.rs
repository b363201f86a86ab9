//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson).

use crate::error::{PfiError, Result};

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    /// `x` must be strictly increasing with at least two points.
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(PfiError::Domain("interpolation needs >= 2 matching points".into()));
        }
        if x.windows(2).any(|w| w[1].is_nan() || w[1] <= w[0]) || y.iter().any(|v| !v.is_finite()) {
            return Err(PfiError::Domain("interpolation abscissae must increase strictly".into()));
        }
        let n = x.len();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            m[i] = if delta[i - 1] * delta[i] <= 0.0 {
                0.0
            } else {
                0.5 * (delta[i - 1] + delta[i])
            };
        }
        for i in 0..n - 1 {
            if delta[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
                continue;
            }
            let a = m[i] / delta[i];
            let b = m[i + 1] / delta[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                m[i] = t * a * delta[i];
                m[i + 1] = t * b * delta[i];
            }
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn segment(&self, t: f64) -> usize {
        let i = self.x.partition_point(|&v| v <= t);
        i.clamp(1, self.x.len() - 1) - 1
    }

    /// Value at `t`; outside the domain the end segments are extended.
    pub fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[i]
            + (s3 - 2.0 * s2 + s) * h * self.m[i]
            + (-2.0 * s3 + 3.0 * s2) * self.y[i + 1]
            + (s3 - s2) * h * self.m[i + 1]
    }

    /// First derivative at `t`.
    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        (6.0 * s2 - 6.0 * s) * self.y[i] / h
            + (3.0 * s2 - 4.0 * s + 1.0) * self.m[i]
            + (-6.0 * s2 + 6.0 * s) * self.y[i + 1] / h
            + (3.0 * s2 - 2.0 * s) * self.m[i + 1]
    }

    /// Every `t` in the domain with `eval(t) == target`, one per segment
    /// whose end values bracket it. Flat runs at the target report their start.
    pub fn solve(&self, target: f64) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for i in 0..self.x.len() - 1 {
            let (a, b) = (self.x[i], self.x[i + 1]);
            let (fa, fb) = (self.y[i] - target, self.y[i + 1] - target);
            let t = if fa == 0.0 {
                Some(a)
            } else if fb == 0.0 {
                if i + 2 == self.x.len() { Some(b) } else { None }
            } else if fa.signum() != fb.signum() {
                crate::roots::brent(|t| Ok(self.eval(t) - target), a, b, 1e-13 * (b - a), 0.0, 200)
                    .ok()
                    .map(|r| r.x)
            } else {
                None
            };
            if let Some(t) = t {
                if out.last().is_none_or(|&p| (t - p).abs() > 1e-12) {
                    out.push(t);
                }
            }
        }
        out
    }
}
