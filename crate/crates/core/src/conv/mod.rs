//! Numeric convolution of laws on the half-line and the functionals built on it.

mod functionals;
mod numeric_conv;

pub use functionals::{cstar_estimate, self_conv_density, self_conv_density_full, t_functional, CstarEstimate, TValue, TracePoint};
pub use numeric_conv::{nfold_law, nfold_tail, NumericConv};

use std::sync::Arc;

use crate::grid::ScaleWindow;
use crate::law::{merge_intervals, Atom, Interval, Law, Singularity};
use crate::numeric::Estimate;
use crate::quad::{integrate_pieces, Piece, QuadConfig};

/// Law of `X + Y` for independent `X ~ a`, `Y ~ b`.
#[derive(Debug)]
pub struct Convolution {
    a: Arc<dyn Law>,
    b: Arc<dyn Law>,
    cfg: QuadConfig,
    atoms: Vec<Atom>,
    breakpoints: Vec<f64>,
    support: Vec<Interval>,
    windows: Vec<ScaleWindow>,
    support_min: f64,
}

impl Convolution {
    pub fn new(a: Arc<dyn Law>, b: Arc<dyn Law>, cfg: QuadConfig) -> Self {
        let mut breakpoints: Vec<f64> = a
            .breakpoints()
            .iter()
            .flat_map(|p| b.breakpoints().iter().map(move |q| p + q))
            .filter(|v| v.is_finite())
            .collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();

        let mut atoms: Vec<Atom> = Vec::new();
        for p in a.atoms() {
            for q in b.atoms() {
                atoms.push(Atom { x: p.x + q.x, mass: p.mass * q.mass });
            }
        }
        atoms.sort_by(|u, v| u.x.total_cmp(&v.x));

        let mut parts = Vec::new();
        for i in a.density_support() {
            for j in b.density_support() {
                parts.push(Interval::new(i.lo + j.lo, i.hi + j.hi));
            }
            for q in b.atoms() {
                parts.push(Interval::new(i.lo + q.x, i.hi + q.x));
            }
        }
        for j in b.density_support() {
            for p in a.atoms() {
                parts.push(Interval::new(j.lo + p.x, j.hi + p.x));
            }
        }
        let support = merge_intervals(parts);
        let windows = a.windows().to_vec();
        let support_min = a.support_min() + b.support_min();
        Convolution { a, b, cfg, atoms, breakpoints, support, windows, support_min }
    }

    pub fn self_convolution(f: Arc<dyn Law>, cfg: QuadConfig) -> Self {
        Convolution::new(f.clone(), f, cfg)
    }

    pub fn left(&self) -> &Arc<dyn Law> {
        &self.a
    }

    pub fn right(&self) -> &Arc<dyn Law> {
        &self.b
    }

    pub fn quad_config(&self) -> &QuadConfig {
        &self.cfg
    }

    /// Split `[lo, hi]` at the breakpoints of `a` and the reflections `x − q`
    /// of the breakpoints of `b`, tagging singular ends.
    fn pieces(&self, lo: f64, hi: f64, x: f64, right_singular: bool) -> Vec<Piece> {
        let mut pts = vec![lo, hi];
        pts.extend(self.a.breakpoints().iter().copied().filter(|p| *p > lo && *p < hi));
        pts.extend(self.b.breakpoints().iter().map(|q| x - q).filter(|p| *p > lo && *p < hi));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let sa = self.a.singularities();
        let sb = self.b.singularities();
        let mut out = Vec::with_capacity(pts.len());
        for w in pts.windows(2) {
            let left = sa.iter().find(|s| s.at == w[0]).map(|s| s.exponent);
            let right = if right_singular {
                sb.iter().find(|s| x - s.at == w[1]).map(|s| s.exponent)
            } else {
                None
            };
            out.extend(Piece::with_singular(w[0], w[1], left, right));
        }
        out
    }

    /// `∫ f_a(y) f_b(x − y) dy` over the overlap of the two density supports.
    fn continuous_density(&self, x: f64) -> Estimate {
        let mut pieces = Vec::new();
        for i in self.a.density_support() {
            for j in self.b.density_support() {
                let lo = i.lo.max(x - j.hi);
                let hi = i.hi.min(x - j.lo);
                if hi > lo {
                    pieces.extend(self.pieces(lo, hi, x, true));
                }
            }
        }
        if pieces.is_empty() {
            return Estimate::ZERO;
        }
        let (a, b) = (&self.a, &self.b);
        integrate_pieces(
            |y| {
                let fa = a.density(y);
                if fa.value == 0.0 {
                    return Estimate::ZERO;
                }
                let fb = b.density(x - y);
                Estimate {
                    value: fa.value * fb.value,
                    err: fa.err * fb.value.abs() + fb.err * fa.value.abs(),
                    reliable: fa.reliable && fb.reliable,
                }
            },
            &pieces,
            &self.cfg,
        )
    }
}

impl Law for Convolution {
    fn label(&self) -> String {
        format!("({} * {})", self.a.label(), self.b.label())
    }

    /// `P(X > x) + P(X ≤ x, Y > x − X)`: every term is a positive mass, so
    /// small tails do not suffer from `1 − CDF` cancellation.
    fn tail(&self, x: f64) -> Estimate {
        if x < self.support_min {
            return Estimate::exact(1.0);
        }
        let mut total = self.a.tail(x);
        for p in self.a.atoms() {
            if p.x <= x {
                total += self.b.tail(x - p.x).scale(p.mass);
            }
        }
        let mut pieces = Vec::new();
        for i in self.a.density_support() {
            let hi = i.hi.min(x);
            if hi > i.lo {
                pieces.extend(self.pieces(i.lo, hi, x, false));
            }
        }
        if !pieces.is_empty() {
            let (a, b) = (&self.a, &self.b);
            total += integrate_pieces(
                |y| {
                    let fa = a.density(y);
                    if fa.value == 0.0 {
                        return Estimate::ZERO;
                    }
                    let tb = b.tail(x - y);
                    Estimate {
                        value: fa.value * tb.value,
                        err: fa.err * tb.value + tb.err * fa.value,
                        reliable: fa.reliable && tb.reliable,
                    }
                },
                &pieces,
                &self.cfg,
            );
        }
        total.value = total.value.min(1.0);
        total
    }

    fn density(&self, x: f64) -> Estimate {
        if x <= self.support_min {
            return Estimate::ZERO;
        }
        let mut total = self.continuous_density(x);
        for p in self.a.atoms() {
            if p.x < x {
                total += self.b.density(x - p.x).scale(p.mass);
            }
        }
        for q in self.b.atoms() {
            if q.x < x {
                total += self.a.density(x - q.x).scale(q.mass);
            }
        }
        total
    }

    fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn density_support(&self) -> &[Interval] {
        &self.support
    }

    fn singularities(&self) -> &[Singularity] {
        &[]
    }

    fn support_min(&self) -> f64 {
        self.support_min
    }

    fn windows(&self) -> &[ScaleWindow] {
        &self.windows
    }
}
