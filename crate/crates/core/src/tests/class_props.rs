use std::sync::Arc;

use proptest::prelude::*;

use super::reference;
use crate::class_lab::{classify, classify_trend, ratio_sweep, ClassTag, ClassifyConfig, Trend, TrendRule, Verdict};
use crate::conv::Convolution;
use crate::dist::{build_family1, build_family2, build_staircase_ol_example, PiecewiseDist};
use crate::grid::{per_scale_max, GridSpec, ProbeGrid, ProbePoint};
use crate::law::Law;
use crate::quad::QuadConfig;

fn law() -> impl Strategy<Value = PiecewiseDist> {
    prop_oneof![
        (0.5f64..0.95, 0.5f64..3.0, 1.0f64..2.0, 2usize..5).prop_filter_map("family1", |(al, b, t, n)| {
            build_family1(al, b, t, 1.1 * 2f64.powf((t + 2.0) * al), n).ok()
        }),
        (0.3f64..0.95, 1.0f64..2.5, 3.0f64..8.0, 2usize..5).prop_filter_map("family2", |(al, t, a, n)| build_family2(al, t, a, n).ok()),
        (2usize..12).prop_map(|k| build_staircase_ol_example(k).unwrap().f1),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shifted_ratios_at_least_one(d in law(), c in 0.01f64..10.0) {
        let grid = ProbeGrid::from_windows(d.windows(), &GridSpec { points_per_block: 16, ..GridSpec::default() });
        for p in ratio_sweep(&d, c, &grid).unwrap() {
            prop_assert!(p.value >= 1.0, "x = {} ratio = {}", p.x, p.value);
        }
    }

    #[test]
    fn ratio_limit_at_deepest_block((b, t, u) in (0.5f64..3.0, 1.0f64..2.0, 0.0f64..1.0)) {
        let a = (1.05 + u) * 2f64.powf(0.5 * (t + 2.0));
        let f = build_family1(0.5, b, t, a, 5).unwrap();
        let w = f.windows()[4];
        let r = ratio_sweep(&f, 1.0, &ProbeGrid::from_points(vec![ProbePoint { x: w.hi, scale: 4 }])).unwrap();
        let limit = b / t * 2f64.powf(1.0 - t) + 1.0;
        prop_assert!((r[0].value - limit).abs() < 1e-6, "ratio {} limit {}", r[0].value, limit);
    }
}

#[test]
fn verdicts_never_flip_directly_under_refinement() {
    let laws: Vec<Arc<dyn Law>> = vec![
        Arc::new(reference()),
        Arc::new(build_family2(0.6, 1.5, 5.0, 4).unwrap()),
        Arc::new(build_staircase_ol_example(10).unwrap().f1),
    ];
    for f in laws {
        let mut prev: Option<Vec<Verdict>> = None;
        for ppb in [16, 32, 64, 128] {
            let cfg = ClassifyConfig {
                grid: GridSpec { points_per_block: ppb, ..GridSpec::default() },
                classes: vec![ClassTag::L, ClassTag::OL, ClassTag::D],
                ..Default::default()
            };
            let rep = classify(f.clone(), &cfg).unwrap();
            let v: Vec<Verdict> = rep.evidence.iter().map(|e| e.verdict).collect();
            if let Some(p) = &prev {
                for (a, b) in p.iter().zip(&v) {
                    let flip = matches!((a, b), (Verdict::Consistent, Verdict::Inconsistent) | (Verdict::Inconsistent, Verdict::Consistent));
                    assert!(!flip, "{}: {a:?} -> {b:?} at {ppb} points", f.label());
                }
            }
            prev = Some(v);
        }
    }
}

#[test]
fn local_mass_is_small_against_square_tail() {
    // F(x − 1, x + 1]/H̄₂(x) per-scale maxima fall across scales
    let f: Arc<dyn Law> = Arc::new(reference());
    let h = Convolution::self_convolution(f.clone(), QuadConfig::default());
    let grid = ProbeGrid::from_windows(&f.windows()[..3], &GridSpec::default());
    let vals: Vec<f64> =
        grid.points.iter().map(|p| (f.tail(p.x - 1.0).value - f.tail(p.x + 1.0).value) / h.tail(p.x).value).collect();
    let m = per_scale_max(&grid.points, &vals);
    let trend = classify_trend(&m, &TrendRule { first_scale: 0, ..TrendRule::default() });
    assert_eq!(trend.trend, Trend::Down, "{m:?}");
}

#[test]
fn staircase_is_long_tailed_evidence() {
    let d: Arc<dyn Law> = Arc::new(build_staircase_ol_example(12).unwrap().f1);
    let rep = classify(d, &ClassifyConfig { classes: vec![ClassTag::OL], ..Default::default() }).unwrap();
    assert_eq!(rep.verdict(ClassTag::OL), Some(Verdict::Consistent));
}
