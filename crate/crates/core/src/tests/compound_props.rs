use std::sync::Arc;

use proptest::prelude::*;

use super::reference;
use crate::class_lab::{classify_trend, Trend, TrendRule};
use crate::compound::{growth_condition_trace, ratio_bounds, CompoundOptions, CompoundSpec};
use crate::conv::Convolution;
use crate::counting::CountingDist;
use crate::grid::{per_scale_max, GridSpec, ProbeGrid};
use crate::law::Law;
use crate::quad::QuadConfig;

fn base() -> Arc<dyn Law> {
    Arc::new(reference())
}

fn small_grid(f: &dyn Law, scales: usize, ppb: usize) -> ProbeGrid {
    ProbeGrid::from_windows(&f.windows()[..scales], &GridSpec { points_per_block: ppb, ..GridSpec::default() })
}

fn spec(probs: Vec<f64>, xs: &[f64]) -> CompoundSpec {
    CompoundSpec::new(base(), CountingDist::explicit(probs).unwrap(), Some(3.0), CompoundOptions::default(), xs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mixture_monotone(raw in prop::collection::vec(0.01f64..1.0, 4), shift in 0.05f64..0.5) {
        let f = base();
        let grid = small_grid(f.as_ref(), 2, 12);
        let mut xs = grid.xs();
        // neighbouring windows overlap once the offsets are added
        xs.sort_by(f64::total_cmp);
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        // move mass from order 1 to order 3: stochastically larger
        let mv = shift * p[1];
        let mut q = p.clone();
        q[1] -= mv;
        q[3] += mv;
        let (sp, sq) = (spec(p, &xs), spec(q, &xs));
        let mut prev = f64::INFINITY;
        for &x in &xs {
            let a = sp.compound_tail(x).unwrap();
            let b = sq.compound_tail(x).unwrap();
            prop_assert!(a.value.value <= prev + a.value.err, "x = {x}: {a:?} after {prev}");
            prop_assert!(b.value.value + b.value.err >= a.value.value - a.value.err, "x = {x}: {a:?} vs {b:?}");
            prev = a.value.value;
        }
    }
}

#[test]
fn finite_support_matches_top_order() {
    // counting on {0, 1, 2} with p₂ > 0: deviation trend follows F^{*2}
    let f = base();
    let grid = small_grid(f.as_ref(), 3, 64);
    let sp = spec(vec![0.2, 0.3, 0.5], &grid.xs());
    let h = Convolution::self_convolution(f.clone(), QuadConfig::default());
    let dev = |t: &dyn Fn(f64) -> f64| -> Vec<f64> { grid.points.iter().map(|p| (t(p.x - 1.0) / t(p.x) - 1.0).abs()).collect() };
    let comp = dev(&|x| sp.compound_tail(x).unwrap().value.value);
    let square = dev(&|x| h.tail(x).value);
    let rule = TrendRule::default();
    let a = classify_trend(&per_scale_max(&grid.points, &comp), &rule);
    let b = classify_trend(&per_scale_max(&grid.points, &square), &rule);
    assert_eq!(a.trend, b.trend, "{a:?} vs {b:?}");
}

#[test]
fn truncation_bound_covers_dropped_orders() {
    let f = base();
    // deep orders are slow to evaluate, so a few points per scale
    let grid = small_grid(f.as_ref(), 3, 2);
    let xs: Vec<f64> = grid.points.iter().filter(|p| p.x > 1.0).map(|p| p.x).step_by(3).collect();
    let probs = vec![0.1, 0.2, 0.3, 0.2, 0.1, 0.1];
    let deep = CompoundOptions { max_quad_order: 5, ..Default::default() };
    let exact = CompoundSpec::new(f.clone(), CountingDist::explicit(probs.clone()).unwrap(), Some(3.0), deep, &xs).unwrap();
    let cut = spec(probs, &grid.xs());
    assert_eq!(cut.orders_available(), 4);
    for &x in &xs {
        let e = exact.compound_tail(x).unwrap();
        let c = cut.compound_tail(x).unwrap();
        assert_eq!(e.trunc_bound, 0.0);
        let tol = e.value.err + c.value.err + 1e-15;
        assert!(c.value.value <= e.value.value + tol, "x = {x}");
        assert!(c.value.value + c.trunc_bound >= e.value.value - tol, "x = {x}: {c:?} vs {e:?}");
    }
}

#[test]
fn shallow_quadrature_cannot_anchor_the_envelope() {
    let opts = CompoundOptions { max_quad_order: 2, ..Default::default() };
    let r = CompoundSpec::new(base(), CountingDist::poisson(1.0).unwrap(), Some(3.0), opts, &[10.0]);
    assert!(matches!(r, Err(crate::Error::InvalidParameter(_))));
}

#[test]
fn ratio_to_square_within_bounds_at_deepest_scale() {
    let f = base();
    let grid = small_grid(f.as_ref(), 3, 8).restrict(&[2]);
    let h = Convolution::self_convolution(f.clone(), QuadConfig::default());
    for mu in [0.5, 1.0, 2.0] {
        let counting = CountingDist::poisson(mu).unwrap();
        let b = ratio_bounds(&counting, 3.0).unwrap();
        let sp = CompoundSpec::new(f.clone(), counting, Some(3.0), CompoundOptions::default(), &grid.xs()).unwrap();
        let tol = 0.05;
        for &x in &grid.xs() {
            let v = sp.compound_tail(x).unwrap();
            let d = h.tail(x).value;
            let (lo, hi) = (v.value.value / d, (v.value.value + v.trunc_bound) / d);
            assert!(lo >= b.liminf_over_f2 - tol, "mu = {mu}, x = {x}: {lo} < {}", b.liminf_over_f2);
            assert!(hi <= b.limsup_over_f2 + tol, "mu = {mu}, x = {x}: {hi} > {}", b.limsup_over_f2);
        }
    }
}

#[test]
fn counting_tails_are_small_against_square() {
    let f = base();
    let grid = small_grid(f.as_ref(), 3, 32);
    let h = Convolution::self_convolution(f.clone(), QuadConfig::default());
    let laws = [
        CountingDist::poisson(1.0).unwrap(),
        CountingDist::geometric(0.4).unwrap(),
        CountingDist::explicit(vec![0.5, 0.5]).unwrap(),
    ];
    for c in &laws {
        let tr = growth_condition_trace(c, &h, 1.0, &grid);
        let t = classify_trend(&tr.per_scale, &TrendRule { first_scale: 0, ..TrendRule::default() });
        assert_eq!(t.trend, Trend::Down, "{}: {:?}", c.label(), tr.per_scale);
    }
}
