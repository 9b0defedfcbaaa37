//! Laws of the counting variable τ on the nonnegative integers.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CountingKind {
    Poisson { mu: f64 },
    /// `p_k = (1 − p)·p^k`, k ≥ 0.
    Geometric { p: f64 },
    /// `p_k = K·k^{-β}`, k ≥ 1.
    PowerLaw { beta: f64 },
    /// `p_k = probs[k]`.
    Explicit { probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingDist {
    pub kind: CountingKind,
    /// Normalizing constant for the power law, 1 otherwise.
    pub norm: f64,
}

/// `Σ_{j>n} j^{-s}` for `s > 1`, by direct summation then Euler–Maclaurin.
pub fn zeta_tail(s: f64, n: u64) -> f64 {
    const DIRECT: u64 = 64;
    let mut acc = 0.0;
    for j in (n + 1..=n + DIRECT).rev() {
        acc += (j as f64).powf(-s);
    }
    let m = (n + DIRECT + 1) as f64;
    let rest = m.powf(1.0 - s) / (s - 1.0) + 0.5 * m.powf(-s) + s * m.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * m.powf(-s - 3.0) / 720.0
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * m.powf(-s - 5.0) / 30240.0;
    acc + rest
}

impl CountingDist {
    pub fn new(kind: CountingKind) -> Result<Self> {
        let norm = match &kind {
            CountingKind::Poisson { mu } => {
                if !(*mu > 0.0 && mu.is_finite()) {
                    return Err(Error::InvalidParameter(format!("poisson mean {mu} must be positive")));
                }
                1.0
            }
            CountingKind::Geometric { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::InvalidParameter(format!("geometric p = {p} must lie in (0, 1)")));
                }
                1.0
            }
            CountingKind::PowerLaw { beta } => {
                if !(*beta > 1.0 && beta.is_finite()) {
                    return Err(Error::InvalidParameter(format!("power-law exponent {beta} must exceed 1")));
                }
                1.0 / zeta_tail(*beta, 0)
            }
            CountingKind::Explicit { probs } => {
                if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(Error::InvalidParameter("explicit probabilities must be finite and nonnegative".into()));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!("explicit probabilities sum to {s}, not 1")));
                }
                1.0
            }
        };
        Ok(CountingDist { kind, norm })
    }

    pub fn poisson(mu: f64) -> Result<Self> {
        Self::new(CountingKind::Poisson { mu })
    }

    pub fn geometric(p: f64) -> Result<Self> {
        Self::new(CountingKind::Geometric { p })
    }

    pub fn power_law(beta: f64) -> Result<Self> {
        Self::new(CountingKind::PowerLaw { beta })
    }

    pub fn explicit(probs: Vec<f64>) -> Result<Self> {
        Self::new(CountingKind::Explicit { probs })
    }

    /// τ ≡ k.
    pub fn degenerate(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        CountingDist { kind: CountingKind::Explicit { probs }, norm: 1.0 }
    }

    pub fn log_pmf(&self, k: u64) -> f64 {
        match &self.kind {
            CountingKind::Poisson { mu } => k as f64 * mu.ln() - mu - ln_factorial(k),
            CountingKind::Geometric { p } => (-p).ln_1p() + k as f64 * p.ln(),
            CountingKind::PowerLaw { beta } => {
                if k == 0 {
                    f64::NEG_INFINITY
                } else {
                    self.norm.ln() - beta * (k as f64).ln()
                }
            }
            CountingKind::Explicit { probs } => probs.get(k as usize).map_or(f64::NEG_INFINITY, |p| p.ln()),
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        match &self.kind {
            CountingKind::Explicit { probs } => probs.get(k as usize).copied().unwrap_or(0.0),
            _ => self.log_pmf(k).exp(),
        }
    }

    /// `P(τ > k)`.
    pub fn sf(&self, k: u64) -> f64 {
        match &self.kind {
            CountingKind::Poisson { mu } => {
                if (k as f64) < *mu {
                    let below: f64 = (0..=k).map(|j| self.pmf(j)).sum();
                    (1.0 - below).max(0.0)
                } else {
                    let mut acc = 0.0;
                    let mut j = k + 1;
                    loop {
                        let p = self.pmf(j);
                        acc += p;
                        if p <= 1e-18 * acc || p == 0.0 {
                            break acc;
                        }
                        j += 1;
                    }
                }
            }
            CountingKind::Geometric { p } => p.powf(k as f64 + 1.0),
            CountingKind::PowerLaw { beta } => self.norm * zeta_tail(*beta, k),
            CountingKind::Explicit { probs } => probs.iter().skip(k as usize + 1).sum(),
        }
    }

    /// `ln P(τ > k)`, finite even where `sf` underflows.
    pub fn log_sf(&self, k: u64) -> f64 {
        let s = self.sf(k);
        if s > 1e-280 {
            return s.ln();
        }
        match &self.kind {
            CountingKind::Poisson { mu } => {
                // terms decay at least geometrically with ratio μ/(k+2)
                let r = mu / (k as f64 + 2.0);
                self.log_pmf(k + 1) - (-r).ln_1p()
            }
            CountingKind::Geometric { p } => (k as f64 + 1.0) * p.ln(),
            _ => s.ln(),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            CountingKind::Poisson { mu } => *mu,
            CountingKind::Geometric { p } => p / (1.0 - p),
            CountingKind::PowerLaw { beta } => {
                if *beta <= 2.0 {
                    f64::INFINITY
                } else {
                    self.norm * zeta_tail(beta - 1.0, 0)
                }
            }
            CountingKind::Explicit { probs } => probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        }
    }

    pub fn support_max(&self) -> Option<u64> {
        match &self.kind {
            CountingKind::Explicit { probs } => probs.iter().rposition(|p| *p > 0.0).map(|k| k as u64),
            _ => None,
        }
    }

    /// Smallest k with `P(τ > k) ≤ tol`.
    pub fn quantile_sf(&self, tol: f64) -> u64 {
        if let Some(m) = self.support_max() {
            return m;
        }
        let mut k = 0u64;
        let mut step = 1u64;
        while self.sf(k) > tol {
            k += step;
            step = step.saturating_mul(2);
        }
        let (mut lo, mut hi) = (k.saturating_sub(step / 2), k);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.sf(mid) > tol {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// `Σ_{k=lo}^{hi} p_k` in log form.
    pub fn log_block_mass(&self, lo: u64, hi: u64) -> f64 {
        let terms: Vec<f64> = (lo..=hi).map(|k| self.log_pmf(k)).collect();
        crate::numeric::log_sum_exp(&terms)
    }

    pub fn label(&self) -> String {
        match &self.kind {
            CountingKind::Poisson { mu } => format!("poisson(mu={mu})"),
            CountingKind::Geometric { p } => format!("geometric(p={p})"),
            CountingKind::PowerLaw { beta } => format!("power_law(beta={beta})"),
            CountingKind::Explicit { probs } => format!("explicit({probs:?})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_values() {
        let z2 = zeta_tail(2.0, 0);
        assert!((z2 - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        let z4 = zeta_tail(4.0, 0);
        assert!((z4 - std::f64::consts::PI.powi(4) / 90.0).abs() < 1e-14);
        let direct: f64 = (11..200_000u64).map(|j| (j as f64).powi(-3)).sum::<f64>();
        assert!((zeta_tail(3.0, 10) - direct).abs() < 1e-10);
    }

    #[test]
    fn normalizations() {
        for c in [
            CountingDist::poisson(1.0).unwrap(),
            CountingDist::poisson(7.5).unwrap(),
            CountingDist::geometric(0.3).unwrap(),
            CountingDist::power_law(3.5).unwrap(),
            CountingDist::explicit(vec![0.2, 0.3, 0.5]).unwrap(),
        ] {
            let k = 5000;
            let s: f64 = (0..=k).map(|j| c.pmf(j)).sum::<f64>() + c.sf(k);
            assert!((s - 1.0).abs() < 1e-12, "{}: {s}", c.label());
            assert!((0..50).all(|j| c.pmf(j) >= 0.0));
        }
    }

    #[test]
    fn means() {
        assert!((CountingDist::geometric(0.25).unwrap().mean() - 1.0 / 3.0).abs() < 1e-15);
        let pl = CountingDist::power_law(3.0).unwrap();
        let z2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((pl.mean() - z2 / zeta_tail(3.0, 0)).abs() < 1e-13);
        assert_eq!(CountingDist::power_law(2.0).unwrap().mean(), f64::INFINITY);
        assert_eq!(CountingDist::degenerate(2).mean(), 2.0);
    }

    #[test]
    fn poisson_log_tail_deep() {
        let c = CountingDist::poisson(1.0).unwrap();
        let l = c.log_sf(400);
        let direct = c.log_pmf(401);
        assert!(l > direct && l - direct < 0.01);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CountingDist::poisson(0.0).is_err());
        assert!(CountingDist::geometric(1.0).is_err());
        assert!(CountingDist::power_law(1.0).is_err());
        assert!(CountingDist::explicit(vec![0.5, 0.4]).is_err());
    }
}
