//! The evaluation interface shared by closed-form distributions and numeric
//! convolutions.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::numeric::Estimate;

/// A point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub mass: f64,
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Open-interior containment.
    pub fn interior(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn intersect(&self, o: &Interval) -> Option<Interval> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        (hi > lo).then_some(Interval { lo, hi })
    }
}

/// Merge overlapping or touching intervals into a sorted disjoint list.
pub fn merge_intervals(mut v: Vec<Interval>) -> Vec<Interval> {
    v.retain(|i| !i.is_empty());
    v.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut out: Vec<Interval> = Vec::with_capacity(v.len());
    for i in v {
        match out.last_mut() {
            Some(last) if i.lo <= last.hi => last.hi = last.hi.max(i.hi),
            _ => out.push(i),
        }
    }
    out
}

/// A density singularity of the form `(x - at)^{exponent - 1}` on the right of `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub at: f64,
    pub exponent: f64,
}

/// Distribution on the half-line, evaluated pointwise.
///
/// Tails are right-continuous: `tail(x) = P(X > x)`.
pub trait Law: Send + Sync + Debug {
    fn label(&self) -> String;

    fn tail(&self, x: f64) -> Estimate;

    /// Natural log of the tail; defaults to `ln(tail)`.
    fn log_tail(&self, x: f64) -> Estimate {
        let t = self.tail(x);
        Estimate { value: t.value.ln(), err: t.rel_err(), reliable: t.reliable }
    }

    /// Density of the absolutely continuous part.
    fn density(&self, x: f64) -> Estimate;

    fn atoms(&self) -> &[Atom];

    /// Sorted points where the density or tail may fail to be smooth.
    fn breakpoints(&self) -> &[f64];

    /// Sorted disjoint closure of `{density > 0}`.
    fn density_support(&self) -> &[Interval];

    fn singularities(&self) -> &[Singularity] {
        &[]
    }

    /// Infimum of the support.
    fn support_min(&self) -> f64;

    /// Scale windows carried by the law, used to build probe grids.
    fn windows(&self) -> &[crate::grid::ScaleWindow];
}
