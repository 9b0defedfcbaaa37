use std::sync::Arc;

use proptest::prelude::*;

use super::reference;
use crate::conv::{self_conv_density, self_conv_density_full, Convolution};
use crate::dist::build_family1;
use crate::law::Law;
use crate::quad::QuadConfig;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn support_is_exact((t, u, x_u) in (1.0f64..2.0, 0.0f64..1.0, 0.0f64..1.0)) {
        let alpha = 0.5;
        let a = 2f64.powf((t + 2.0) * alpha) * (1.05 + u);
        let f = build_family1(alpha, 1.0, t, a, 3).unwrap();
        let s = f.scale.clone().unwrap();
        let lt = 2f64.powf(t);
        let inside: Vec<(f64, f64)> = (0..=3).map(|n| (s.anchor(n) + s.anchor(0), 2.0 * lt * s.anchor(n))).collect();
        let cfg = QuadConfig::default();
        // one point per gap between consecutive support pieces
        let mut gaps = vec![(0.0, inside[0].0)];
        gaps.extend(inside.windows(2).map(|w| (w[0].1, w[1].0)));
        for (lo, hi) in gaps {
            let x = lo + x_u * (hi - lo);
            prop_assert_eq!(self_conv_density(&f, x, &cfg).value, 0.0, "x = {}", x);
        }
        for &(lo, hi) in &inside[..3] {
            let x = lo + (0.01 + 0.98 * x_u) * (hi - lo);
            prop_assert!(self_conv_density(&f, x, &cfg).value > 0.0, "x = {}", x);
        }
    }
}

fn probe_points(f: &dyn Law, k: usize) -> Vec<f64> {
    let w = f.windows();
    (0..k)
        .map(|i| {
            let win = w[i % 3];
            let (lo, hi) = (win.lo + w[0].lo, 2.0 * win.hi);
            lo + (hi - lo) * ((i as f64 * 0.618_033_988_75) % 1.0)
        })
        .collect()
}

#[test]
fn halved_and_full_forms_agree() {
    let f = reference();
    let fa: Arc<dyn Law> = Arc::new(f.clone());
    let cfg = QuadConfig::default();
    for x in probe_points(&f, 60) {
        let half = self_conv_density(&f, x, &cfg).value;
        if half > 0.0 {
            let full = self_conv_density_full(fa.clone(), x, &cfg).value;
            assert!((half - full).abs() <= 1e-9 * half, "x = {x}: {half} vs {full}");
        }
    }
}

#[test]
fn doubling_subdivisions_stays_within_error() {
    let f: Arc<dyn Law> = Arc::new(reference());
    let base = QuadConfig::default();
    let h1 = Convolution::self_convolution(f.clone(), base);
    let h2 = Convolution::self_convolution(f.clone(), QuadConfig { max_subdivisions: 2 * base.max_subdivisions, ..base });
    for x in probe_points(f.as_ref(), 100) {
        for (a, b) in [(h1.tail(x), h2.tail(x)), (h1.density(x), h2.density(x))] {
            let slack = a.err + 4.0 * f64::EPSILON * a.value.abs();
            assert!((a.value - b.value).abs() <= slack, "x = {x}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn square_tail_dominates_half_point_bound() {
    // H̄(x) ≥ F̄(x/2)² for the self-convolution
    let f: Arc<dyn Law> = Arc::new(reference());
    let h = Convolution::self_convolution(f.clone(), QuadConfig::default());
    for x in probe_points(f.as_ref(), 60) {
        let lower = f.tail(0.5 * x).value.powi(2);
        let t = h.tail(x);
        assert!(t.value + t.err >= lower * (1.0 - 1e-12), "x = {x}");
    }
}
