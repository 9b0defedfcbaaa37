//! Auxiliary laws: light-tailed controls and tail perturbations of a base law.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::ScaleWindow;
use crate::law::{Atom, Interval, Law};
use crate::numeric::Estimate;

/// Exponential law with rate `lambda`; tail `e^{-λx}`.
#[derive(Debug, Clone)]
pub struct ExponentialControl {
    pub lambda: f64,
    support: [Interval; 1],
    breakpoints: [f64; 1],
    windows: Vec<ScaleWindow>,
}

impl ExponentialControl {
    /// Probe windows are the dyadic blocks `[2ⁿ, 2ⁿ⁺¹]`, n < `scales`.
    pub fn new(lambda: f64, scales: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate {lambda} must be positive")));
        }
        let windows = (0..scales)
            .map(|n| ScaleWindow { index: n, lo: 2f64.powi(n as i32), hi: 2f64.powi(n as i32 + 1) })
            .collect();
        Ok(ExponentialControl {
            lambda,
            support: [Interval::new(0.0, f64::INFINITY)],
            breakpoints: [0.0],
            windows,
        })
    }
}

impl Law for ExponentialControl {
    fn label(&self) -> String {
        format!("exponential(rate={})", self.lambda)
    }
    fn tail(&self, x: f64) -> Estimate {
        Estimate::exact(if x < 0.0 { 1.0 } else { (-self.lambda * x).exp() })
    }
    fn log_tail(&self, x: f64) -> Estimate {
        Estimate::exact(if x < 0.0 { 0.0 } else { -self.lambda * x })
    }
    fn density(&self, x: f64) -> Estimate {
        Estimate::exact(if x < 0.0 { 0.0 } else { self.lambda * (-self.lambda * x).exp() })
    }
    fn atoms(&self) -> &[Atom] {
        &[]
    }
    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
    fn density_support(&self) -> &[Interval] {
        &self.support
    }
    fn support_min(&self) -> f64 {
        0.0
    }
    fn windows(&self) -> &[ScaleWindow] {
        &self.windows
    }
}

/// Multiplier applied to a base tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// `g(x) = 1 + 1/ln(e + x)`, so that `L̄ ∼ F̄`.
    LogDecay,
    /// `g(x) = k`.
    Constant(f64),
}

impl Perturbation {
    fn g(&self, x: f64) -> f64 {
        match *self {
            Perturbation::LogDecay => 1.0 + 1.0 / (std::f64::consts::E + x).ln(),
            Perturbation::Constant(k) => k,
        }
    }

    fn dg(&self, x: f64) -> f64 {
        match *self {
            Perturbation::LogDecay => {
                let l = (std::f64::consts::E + x).ln();
                -1.0 / ((std::f64::consts::E + x) * l * l)
            }
            Perturbation::Constant(_) => 0.0,
        }
    }
}

/// Law with tail `min(1, F̄(x)·g(x))`.
#[derive(Debug)]
pub struct TailPerturbation {
    base: Arc<dyn Law>,
    pub factor: Perturbation,
    /// Point where the product first drops below 1.
    pub start: f64,
    breakpoints: Vec<f64>,
    support: Vec<Interval>,
}

impl TailPerturbation {
    pub fn new(base: Arc<dyn Law>, factor: Perturbation) -> Result<Self> {
        if let Perturbation::Constant(k) = factor {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(Error::InvalidParameter(format!("constant factor {k} must be at least 1")));
            }
        }
        let prod = |x: f64| base.tail(x).value * factor.g(x);
        let mut lo = base.support_min();
        let mut hi = lo.abs().max(1.0);
        while prod(hi) >= 1.0 {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::InvalidParameter("perturbed tail never drops below 1".into()));
            }
        }
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if prod(m) >= 1.0 {
                lo = m;
            } else {
                hi = m;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let start = hi;
        let mut breakpoints: Vec<f64> = base.breakpoints().iter().copied().filter(|b| *b > start).collect();
        breakpoints.insert(0, start);
        let support = match factor {
            Perturbation::LogDecay => vec![Interval::new(start, f64::INFINITY)],
            Perturbation::Constant(_) => base
                .density_support()
                .iter()
                .filter_map(|i| i.intersect(&Interval::new(start, f64::INFINITY)))
                .collect(),
        };
        Ok(TailPerturbation { base, factor, start, breakpoints, support })
    }
}

impl Law for TailPerturbation {
    fn label(&self) -> String {
        match self.factor {
            Perturbation::LogDecay => format!("{}·(1+1/ln(e+x))", self.base.label()),
            Perturbation::Constant(k) => format!("{}·{k}", self.base.label()),
        }
    }
    fn tail(&self, x: f64) -> Estimate {
        if x < self.start {
            return Estimate::exact(1.0);
        }
        let t = self.base.tail(x);
        let g = self.factor.g(x);
        Estimate { value: (t.value * g).min(1.0), err: t.err * g, reliable: t.reliable }
    }
    fn log_tail(&self, x: f64) -> Estimate {
        if x < self.start {
            return Estimate::exact(0.0);
        }
        let t = self.base.log_tail(x);
        Estimate { value: (t.value + self.factor.g(x).ln()).min(0.0), ..t }
    }
    fn density(&self, x: f64) -> Estimate {
        if x <= self.start {
            return Estimate::ZERO;
        }
        let f = self.base.density(x);
        let t = self.base.tail(x);
        let g = self.factor.g(x);
        let dg = self.factor.dg(x);
        Estimate {
            value: f.value * g - t.value * dg,
            err: f.err * g + t.err * dg.abs(),
            reliable: f.reliable && t.reliable,
        }
    }
    fn atoms(&self) -> &[Atom] {
        &[]
    }
    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
    fn density_support(&self) -> &[Interval] {
        &self.support
    }
    fn support_min(&self) -> f64 {
        self.start
    }
    fn windows(&self) -> &[ScaleWindow] {
        self.base.windows()
    }
}

/// Unit mass at zero; the zero-fold convolution.
#[derive(Debug, Clone)]
pub struct PointMassAtZero {
    atoms: [Atom; 1],
    breakpoints: [f64; 1],
}

impl PointMassAtZero {
    pub fn new() -> Self {
        PointMassAtZero { atoms: [Atom { x: 0.0, mass: 1.0 }], breakpoints: [0.0] }
    }
}

impl Default for PointMassAtZero {
    fn default() -> Self {
        Self::new()
    }
}

impl Law for PointMassAtZero {
    fn label(&self) -> String {
        "delta0".into()
    }
    fn tail(&self, x: f64) -> Estimate {
        Estimate::exact(if x < 0.0 { 1.0 } else { 0.0 })
    }
    fn density(&self, _x: f64) -> Estimate {
        Estimate::ZERO
    }
    fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
    fn density_support(&self) -> &[Interval] {
        &[]
    }
    fn support_min(&self) -> f64 {
        0.0
    }
    fn windows(&self) -> &[ScaleWindow] {
        &[]
    }
}
