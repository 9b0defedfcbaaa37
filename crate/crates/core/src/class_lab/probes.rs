use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassReport, ClassTag, RatioTrace, Verdict};
use crate::conv::{nfold_law, Convolution, TracePoint};
use crate::error::{Error, Result};
use crate::grid::{per_scale_max, ProbeGrid, ScaleMax};
use crate::law::Law;
use crate::numeric::{ratio, Estimate};
use crate::quad::QuadConfig;

/// `F̄(num)/F̄(den)`, switching to log tails once the denominator underflows.
pub fn tail_ratio(law: &dyn Law, num: f64, den: f64) -> Estimate {
    let d = law.tail(den);
    if d.value > 1e-280 {
        return ratio(law.tail(num), d);
    }
    let ln = law.log_tail(num);
    let ld = law.log_tail(den);
    let value = (ln.value - ld.value).exp();
    Estimate { value, err: value * (ln.err + ld.err), reliable: ln.reliable && ld.reliable }
}

/// Relative shift below which `F̄(x − c)` is not resolved by subtraction.
const LOCAL_SHIFT: f64 = 1e-10;

/// `F̄(x − c)/F̄(x)` for `c > 0`. Shifts too small to resolve against `x`
/// take the mass of `[x − c, x)` from left limits of the density.
pub fn shifted_tail_ratio(law: &dyn Law, x: f64, c: f64) -> Estimate {
    if c > LOCAL_SHIFT * x.abs() || law.atoms().iter().any(|a| a.x < x && x - a.x < c) {
        return tail_ratio(law, x - c, x);
    }
    let left = |y: f64| law.density(y.next_down());
    let mut mass = Estimate::ZERO;
    let mut right = x;
    let mut rest = c;
    for &b in law.breakpoints().iter().rev().filter(|&&b| b < x && x - b < c) {
        let len = right - b;
        mass += left(right).scale(len);
        rest -= len;
        right = b;
    }
    mass += left(right).scale(rest);
    if mass.value == 0.0 {
        return Estimate { value: 1.0, err: mass.err, reliable: mass.reliable };
    }
    let lt = law.log_tail(x);
    let q = (mass.value.ln() - lt.value).exp();
    Estimate { value: 1.0 + q, err: q * (mass.rel_err() + lt.err), reliable: mass.reliable && lt.reliable }
}

fn trace<F>(grid: &ProbeGrid, f: F) -> Vec<TracePoint>
where
    F: Fn(f64) -> Option<Estimate> + Sync,
{
    grid.points
        .par_iter()
        .filter_map(|p| f(p.x).map(|e| TracePoint { x: p.x, scale: p.scale, value: e.value, err: e.err }))
        .collect()
}

/// `F̄(x − c)/F̄(x)` over the grid. Points where the tail has vanished are dropped.
pub fn ratio_sweep(law: &dyn Law, c: f64, grid: &ProbeGrid) -> Result<Vec<TracePoint>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("shift c = {c} must be positive")));
    }
    if grid.points.windows(2).any(|w| w[1].x <= w[0].x && w[1].scale == w[0].scale) {
        return Err(Error::InvalidParameter("grid must increase within each scale".into()));
    }
    Ok(trace(grid, |x| {
        if law.log_tail(x).value == f64::NEG_INFINITY {
            None
        } else {
            Some(shifted_tail_ratio(law, x, c))
        }
    }))
}

/// `N(x − w(x), x + w(x)] / D̄(x)`: local mass of `num` against the tail of `den`.
pub fn window_mass_ratio<W>(num: &dyn Law, den: &dyn Law, width: W, grid: &ProbeGrid) -> Vec<TracePoint>
where
    W: Fn(f64) -> f64 + Sync,
{
    trace(grid, |x| {
        let w = width(x);
        let d = den.tail(x);
        if d.value == 0.0 {
            return None;
        }
        let lo = num.tail(x - w);
        let hi = num.tail(x + w);
        let m = Estimate { value: (lo.value - hi.value).max(0.0), err: lo.err + hi.err, reliable: lo.reliable && hi.reliable };
        Some(ratio(m, d))
    })
}

/// `F(x − h(x), x + h(x)] / F̄(x)`.
pub fn insensitivity_probe<H>(law: &dyn Law, h: H, grid: &ProbeGrid) -> Result<RatioTrace>
where
    H: Fn(f64) -> f64 + Sync,
{
    if let Some(p) = grid.points.iter().find(|p| !(h(p.x) < p.x)) {
        return Err(Error::InvalidParameter(format!("h(x) must stay below x; fails at x = {}", p.x)));
    }
    Ok(RatioTrace::new("F(x-h,x+h]/tail(x)", window_mass_ratio(law, law, h, grid)))
}

/// `f(x)/F̄(x)` with per-scale maxima.
pub fn density_o_tail_probe(law: &dyn Law, grid: &ProbeGrid) -> RatioTrace {
    let pts = trace(grid, |x| {
        let t = law.tail(x);
        if t.value == 0.0 {
            None
        } else {
            Some(ratio(law.density(x), t))
        }
    });
    RatioTrace::new("density(x)/tail(x)", pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Per-scale maxima of `|L̄/F̄ − 1|`.
    pub precondition: Vec<ScaleMax>,
    pub tolerance: f64,
    /// `(F∗L)‾/(F∗F)‾` over the grid.
    pub trace: RatioTrace,
    /// Per-scale maxima of the distance of the ratio from 1.
    pub distance: Vec<ScaleMax>,
    /// First over last distance maximum.
    pub decay_factor: f64,
}

/// Tail ratio of `F∗L` against `F∗F` once `L̄ ∼ F̄` is evidenced on the grid.
///
/// The precondition asks the per-scale deviation `|L̄/F̄ − 1|` to be
/// non-increasing and at most `tol` at the deepest scale.
pub fn tail_equivalence_transfer(
    f: Arc<dyn Law>,
    l: Arc<dyn Law>,
    ff: Option<Arc<dyn Law>>,
    grid: &ProbeGrid,
    cfg: &QuadConfig,
    tol: f64,
) -> Result<TransferReport> {
    let dev: Vec<f64> = grid
        .points
        .par_iter()
        .map(|p| {
            let fl = f.log_tail(p.x).value;
            let ll = l.log_tail(p.x).value;
            if fl == f64::NEG_INFINITY {
                if ll == f64::NEG_INFINITY {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (ll - fl).exp_m1().abs()
            }
        })
        .collect();
    let precondition = per_scale_max(&grid.points, &dev);
    let monotone = precondition.windows(2).all(|w| w[1].value <= w[0].value * (1.0 + 1e-12));
    let deepest = precondition.last().map_or(f64::INFINITY, |m| m.value);
    if precondition.len() < 2 || !monotone || !(deepest <= tol) {
        return Err(Error::Precondition(format!(
            "tail equivalence not evidenced: per-scale |L/F - 1| = {:?}, tolerance {tol}",
            precondition.iter().map(|m| m.value).collect::<Vec<_>>()
        )));
    }
    let ff = ff.unwrap_or_else(|| Arc::new(Convolution::self_convolution(f.clone(), *cfg)));
    let fl = Convolution::new(f, l, *cfg);
    let pts = trace(grid, |x| {
        let d = ff.tail(x);
        if d.value == 0.0 {
            None
        } else {
            Some(ratio(fl.tail(x), d))
        }
    });
    let trace = RatioTrace::new("tail(F*L)/tail(F*F)", pts);
    let distance = trace.deviation("|ratio - 1|").per_scale;
    let decay_factor = match (distance.first(), distance.last()) {
        (Some(a), Some(b)) => a.value / b.value,
        _ => f64::NAN,
    };
    Ok(TransferReport { precondition, tolerance: tol, trace, distance, decay_factor })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrosscheckStatus {
    /// The verdict pattern is one the closure results allow.
    Consistent,
    /// The pattern contradicts closure under convolution roots inside 𝓞𝓢.
    Violation,
    /// The root is not heavy-tailed on the probe.
    OutOfScope,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub subject: String,
    pub root: Vec<(ClassTag, Verdict)>,
    pub square: Vec<(ClassTag, Verdict)>,
    pub status: CrosscheckStatus,
    pub explanation: String,
}

/// Compare the verdicts for `F` and `F∗F`: inside 𝓞𝓢, `F ∈ 𝓛` iff `F∗F ∈ 𝓛`;
/// outside it the square may be long-tailed while the root is not.
pub fn convolution_root_crosscheck(root: &ClassReport, square: &ClassReport) -> CrosscheckReport {
    let collect = |r: &ClassReport| r.evidence.iter().map(|e| (e.class, e.verdict)).collect::<Vec<_>>();
    let (rv, sv) = (collect(root), collect(square));
    let mk = |status, explanation: String| CrosscheckReport {
        subject: root.subject.clone(),
        root: rv.clone(),
        square: sv.clone(),
        status,
        explanation,
    };
    if !root.is_heavy_tailed() {
        return mk(CrosscheckStatus::OutOfScope, "root shows no heavy-tail trend on the probe".into());
    }
    let r_os = root.verdict(ClassTag::OS);
    let r_ol = root.verdict(ClassTag::OL);
    let r_l = root.verdict(ClassTag::L);
    let s_l = square.verdict(ClassTag::L);
    if r_os == Some(Verdict::Consistent) && r_ol == Some(Verdict::Inconsistent) {
        return mk(CrosscheckStatus::Inconclusive, "root verdicts break OS within OL".into());
    }
    // 𝓞𝓢 ⊂ 𝓞𝓛, so an 𝓞𝓛 failure settles the 𝓞𝓢 question as well
    let root_outside_os = r_os == Some(Verdict::Inconsistent) || r_ol == Some(Verdict::Inconsistent);
    match (root_outside_os, r_os, r_l, s_l) {
        (true, _, _, _) => mk(
            CrosscheckStatus::Consistent,
            format!("root outside OS: any L pattern is permitted (root L {r_l:?}, square L {s_l:?})"),
        ),
        (false, Some(Verdict::Consistent), Some(a), Some(b))
            if a != Verdict::Inconclusive && b != Verdict::Inconclusive =>
        {
            if a == b {
                mk(CrosscheckStatus::Consistent, format!("root in OS and L verdicts agree ({a:?})"))
            } else {
                mk(CrosscheckStatus::Violation, format!("root in OS but root L {a:?} while square L {b:?}"))
            }
        }
        _ => mk(CrosscheckStatus::Inconclusive, "verdicts needed for the comparison are missing or inconclusive".into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub order: usize,
    /// `sup_x H_n(x − 1, x]` over the grid.
    pub sup_mass: f64,
    pub arg: f64,
    /// `sup_mass·√n`.
    pub scaled: f64,
    pub err: f64,
}

/// `sup_x F^{*n}(x − 1, x]·√n` over `xs` for `n = 1..=max_order`.
pub fn concentration_probe(base: Arc<dyn Law>, max_order: usize, xs: &[f64], cfg: &QuadConfig) -> Result<Vec<ConcentrationRow>> {
    let mut rows = Vec::with_capacity(max_order);
    for n in 1..=max_order {
        let law = nfold_law(base.clone(), n, cfg)?;
        let masses: Vec<Estimate> = xs
            .par_iter()
            .map(|&x| {
                let a = law.tail(x - 1.0);
                let b = law.tail(x);
                Estimate { value: a.value - b.value, err: a.err + b.err, reliable: a.reliable && b.reliable }
            })
            .collect();
        let (i, m) = masses
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
            .ok_or_else(|| Error::InvalidParameter("empty probe".into()))?;
        let s = (n as f64).sqrt();
        rows.push(ConcentrationRow { order: n, sup_mass: m.value, arg: xs[i], scaled: m.value * s, err: m.err * s });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct X0Probe {
    pub eps: f64,
    /// Smallest grid-supported `x₀` found, if any.
    pub x0: Option<f64>,
    /// Orders the condition was checked for; nothing is claimed beyond them.
    pub orders: Vec<usize>,
    /// Largest ratio `H̄_k(x − 1)/H̄_k(x)` over `x ≥ k(x₀ − 1) + x₀`, per order.
    pub sup_ratio: Vec<f64>,
}

/// Bisection for the smallest `x₀ > 1` with
/// `sup_{x ≥ k(x₀−1)+x₀} H̄_k(x−1)/H̄_k(x) ≤ 1 + ε` for every supplied order `k`.
pub fn tail_condition_x0(laws: &[(usize, Arc<dyn Law>)], eps: f64, xs: &[f64]) -> X0Probe {
    let ratios: Vec<Vec<(f64, f64)>> = laws
        .iter()
        .map(|(_, h)| {
            xs.par_iter()
                .filter(|&&x| h.log_tail(x).value > f64::NEG_INFINITY)
                .map(|&x| (x, tail_ratio(h.as_ref(), x - 1.0, x).value))
                .collect()
        })
        .collect();
    let sup_from = |x0: f64| -> Vec<f64> {
        laws.iter()
            .zip(&ratios)
            .map(|((k, _), r)| {
                let start = *k as f64 * (x0 - 1.0) + x0;
                r.iter().filter(|(x, _)| *x >= start).map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    let ok = |x0: f64| sup_from(x0).iter().all(|s| *s <= 1.0 + eps);
    let orders = laws.iter().map(|(k, _)| *k).collect();
    // keep at least one probe point above the threshold for every order
    let x_max = xs.iter().copied().fold(1.0, f64::max);
    let x_top = laws.iter().map(|(k, _)| (x_max + *k as f64) / (*k as f64 + 1.0)).fold(x_max, f64::min);
    if laws.is_empty() || !ok(x_top) {
        return X0Probe { eps, x0: None, orders, sup_ratio: sup_from(x_top) };
    }
    let (mut lo, mut hi) = (1.0, x_top);
    if ok(lo) {
        hi = lo;
    }
    while hi - lo > 1e-9 * hi {
        let m = 0.5 * (lo + hi);
        if ok(m) {
            hi = m;
        } else {
            lo = m;
        }
    }
    X0Probe { eps, x0: Some(hi), orders, sup_ratio: sup_from(hi) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::{ExponentialControl, Perturbation, TailPerturbation};
    use crate::dist::build_family1;
    use crate::grid::GridSpec;

    fn family() -> Arc<dyn Law> {
        Arc::new(build_family1(0.5, 1.0, 1.0, 3.0, 3).unwrap())
    }

    #[test]
    fn sweep_values_at_block_ends() {
        let f = family();
        let g = ProbeGrid::from_points(vec![
            crate::grid::ProbePoint { x: 6.0, scale: 0 },
            crate::grid::ProbePoint { x: 100.0, scale: 1 },
        ]);
        let tr = ratio_sweep(f.as_ref(), 1.0, &g).unwrap();
        // closed-form oracle: (mass/3 + above)/above at x = 6
        let sq = |k: f64| 3f64.powf(-0.5 * k);
        let c = 1.0 / (sq(1.0) + sq(3.0) + sq(9.0) + sq(27.0));
        let above = c * (sq(3.0) + sq(9.0) + sq(27.0));
        let expect = (c * sq(1.0) / 3.0 + above) / above;
        assert!((tr[0].value - expect).abs() < 1e-13);
        assert_eq!(tr[1].value, 1.0);
        assert!(ratio_sweep(f.as_ref(), 0.0, &g).is_err());
    }

    #[test]
    fn exponential_density_over_tail_is_one() {
        let e = ExponentialControl::new(1.0, 3).unwrap();
        let g = ProbeGrid::from_windows(e.windows(), &GridSpec::default());
        let tr = density_o_tail_probe(&e, &g);
        assert!(tr.points.iter().all(|p| (p.value - 1.0).abs() < 1e-14));
    }

    #[test]
    fn transfer_identity_and_rejection() {
        let f = family();
        let cfg = QuadConfig::default();
        let g = ProbeGrid::from_windows(&f.windows()[..2], &GridSpec { points_per_block: 8, offsets: vec![1.0] });
        let same = tail_equivalence_transfer(f.clone(), f.clone(), None, &g, &cfg, 0.25).unwrap();
        assert!(same.trace.points.iter().all(|p| (p.value - 1.0).abs() < 1e-9));
        let doubled: Arc<dyn Law> = Arc::new(TailPerturbation::new(f.clone(), Perturbation::Constant(2.0)).unwrap());
        let err = tail_equivalence_transfer(f, doubled, None, &g, &cfg, 0.25).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn x0_bisection_on_exponential_never_succeeds() {
        let e: Arc<dyn Law> = Arc::new(ExponentialControl::new(1.0, 3).unwrap());
        let xs: Vec<f64> = (2..40).map(|i| i as f64).collect();
        let p = tail_condition_x0(&[(1, e)], 0.1, &xs);
        assert!(p.x0.is_none());
        assert!((p.sup_ratio[0] - 1f64.exp()).abs() < 1e-12);
    }
}
