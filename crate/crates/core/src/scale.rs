//! The doubly exponential anchor sequence aₙ = a^{rⁿ}, kept in log form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSequence {
    pub a: f64,
    pub alpha: f64,
    pub r: f64,
    pub n_max: usize,
    /// ln aₙ for n = 0..=n_max.
    pub log_anchors: Vec<f64>,
}

impl ScaleSequence {
    /// Validates `a > 1`, `alpha ∈ (0,1)` and `a^r > 2^{t+2}·a`.
    pub fn new(a: f64, alpha: f64, t: f64, n_max: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in (0, 1)")));
        }
        if !(a > 1.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("a = {a} must be a finite number > 1")));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
        }
        if n_max < 2 {
            return Err(Error::InvalidParameter(format!("n_max = {n_max} must be at least 2")));
        }
        let r = 1.0 + 1.0 / alpha;
        let la = a.ln();
        // a^r > 2^{t+2} a  <=>  (r-1) ln a > (t+2) ln 2
        if (r - 1.0) * la <= (t + 2.0) * std::f64::consts::LN_2 {
            return Err(Error::InvalidParameter(format!(
                "base a = {a} too small: a^r = {:.6e} is not above 2^(t+2)·a = {:.6e}",
                (r * la).exp(),
                ((t + 2.0) * std::f64::consts::LN_2 + la).exp()
            )));
        }
        let log_anchors = (0..=n_max).map(|n| r.powi(n as i32) * la).collect();
        Ok(ScaleSequence { a, alpha, r, n_max, log_anchors })
    }

    /// ln aₙ for any n, including indices past `n_max`.
    pub fn log_anchor(&self, n: usize) -> f64 {
        self.r.powi(n as i32) * self.a.ln()
    }

    /// aₙ, which is `inf` once it leaves the f64 range.
    pub fn anchor(&self, n: usize) -> f64 {
        self.log_anchor(n).exp()
    }

    /// ln of the leading term a_N^{-K} that dominates Σ_{n≥N} aₙ^{-K}.
    pub fn log_tail_sum_bound(&self, n: usize, k: f64) -> f64 {
        -k * self.log_anchor(n)
    }
}
