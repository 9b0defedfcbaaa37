use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Convolution;
use crate::error::{Error, Result};
use crate::grid::{per_scale_max, ProbeGrid, ScaleMax};
use crate::law::Law;
use crate::numeric::{ratio, Estimate};
use crate::quad::{integrate_pieces, Piece, QuadConfig};

/// Split points for integrands of the form `g(y)·k(x − y)` on `[lo, hi]`.
fn split(lo: f64, hi: f64, x: f64, direct: &[f64], reflected: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    pts.extend(direct.iter().copied().filter(|p| *p > lo && *p < hi));
    pts.extend(reflected.iter().map(|q| x - q).filter(|p| *p > lo && *p < hi));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Self-convolution density in the half-range form `2∫_{x/2}^{x} f(y)f(x−y)dy`.
///
/// Exactly zero when no pair of density-support intervals overlaps at `x`.
pub fn self_conv_density(f: &dyn Law, x: f64, cfg: &QuadConfig) -> Estimate {
    let half = 0.5 * x;
    let sup = f.density_support();
    let sing = f.singularities();
    let mut pieces = Vec::new();
    // endpoints carry rounding from the log-domain anchors
    let slack = 8.0 * f64::EPSILON * x.abs();
    for i in sup {
        for j in sup {
            let lo = i.lo.max(x - j.hi).max(half);
            let hi = i.hi.min(x - j.lo).min(x);
            if hi - lo > slack {
                let pts = split(lo, hi, x, f.breakpoints(), f.breakpoints());
                for w in pts.windows(2) {
                    let l = sing.iter().find(|s| s.at == w[0]).map(|s| s.exponent);
                    let r = sing.iter().find(|s| x - s.at == w[1]).map(|s| s.exponent);
                    pieces.extend(Piece::with_singular(w[0], w[1], l, r));
                }
            }
        }
    }
    if pieces.is_empty() {
        return Estimate::ZERO;
    }
    let mut atom_part = Estimate::ZERO;
    for p in f.atoms() {
        if p.x < x {
            atom_part += f.density(x - p.x).scale(2.0 * p.mass);
        }
    }
    integrate_pieces(
        |y| {
            let a = f.density(y);
            let b = f.density(x - y);
            Estimate { value: a.value * b.value, err: a.err * b.value + b.err * a.value, reliable: a.reliable && b.reliable }
        },
        &pieces,
        cfg,
    )
    .scale(2.0)
        + atom_part
}

/// Self-convolution density in the full-range form `∫_0^x f(y)f(x−y)dy`.
pub fn self_conv_density_full(f: Arc<dyn Law>, x: f64, cfg: &QuadConfig) -> Estimate {
    Convolution::self_convolution(f, *cfg).density(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub x: f64,
    pub scale: usize,
    pub value: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CstarEstimate {
    /// Largest `F̄^{*2}(x)/F̄(x)` over the probe.
    pub sup_ratio: f64,
    pub arg: f64,
    /// Maximum over the two deepest probed scales.
    pub limsup_estimate: f64,
    pub per_scale: Vec<ScaleMax>,
    pub trace: Vec<TracePoint>,
}

/// `F̄^{*2}(x)/F̄(x)` over the probe; `square` defaults to the self-convolution.
pub fn cstar_estimate(
    base: Arc<dyn Law>,
    square: Option<Arc<dyn Law>>,
    probe: &ProbeGrid,
    cfg: &QuadConfig,
) -> Result<CstarEstimate> {
    let scales = probe.scales();
    if scales.len() < 2 {
        return Err(Error::ProbeTooShallow { found: scales.len(), needed: 2 });
    }
    let square = square.unwrap_or_else(|| Arc::new(Convolution::self_convolution(base.clone(), *cfg)));
    let trace: Vec<TracePoint> = probe
        .points
        .par_iter()
        .map(|p| {
            let r = ratio(square.tail(p.x), base.tail(p.x));
            TracePoint { x: p.x, scale: p.scale, value: r.value, err: r.err }
        })
        .collect();
    let values: Vec<f64> = trace.iter().map(|t| t.value).collect();
    let per_scale = per_scale_max(&probe.points, &values);
    let (mut sup_ratio, mut arg) = (f64::NEG_INFINITY, f64::NAN);
    for t in &trace {
        if t.value > sup_ratio {
            sup_ratio = t.value;
            arg = t.x;
        }
    }
    let limsup_estimate = per_scale.iter().rev().take(2).map(|m| m.value).fold(f64::NEG_INFINITY, f64::max);
    Ok(CstarEstimate { sup_ratio, arg, limsup_estimate, per_scale, trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TValue {
    pub x: f64,
    pub t: Estimate,
    pub tail: Estimate,
    /// `T(x)/H̄(x)`.
    pub ratio: f64,
}

/// `T(x) = ∫_{x/2}^{x} H̄(x−y) h(y) dy` for a law `H` given with its density.
pub fn t_functional(h: &dyn Law, x: f64, cfg: &QuadConfig) -> TValue {
    let half = 0.5 * x;
    let mut pieces = Vec::new();
    for i in h.density_support() {
        let lo = i.lo.max(half);
        let hi = i.hi.min(x);
        if hi > lo {
            let pts = split(lo, hi, x, h.breakpoints(), h.breakpoints());
            pieces.extend(pts.windows(2).map(|w| Piece::plain(w[0], w[1])));
        }
    }
    let t = if pieces.is_empty() {
        Estimate::ZERO
    } else {
        integrate_pieces(
            |y| {
                let d = h.density(y);
                if d.value == 0.0 {
                    return Estimate::ZERO;
                }
                let tb = h.tail(x - y);
                Estimate { value: d.value * tb.value, err: d.err * tb.value + tb.err * d.value, reliable: d.reliable && tb.reliable }
            },
            &pieces,
            cfg,
        )
    };
    let tail = h.tail(x);
    TValue { x, t, tail, ratio: t.value / tail.value }
}
