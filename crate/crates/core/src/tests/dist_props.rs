use proptest::prelude::*;

use super::simpson;
use crate::dist::{build_family1, build_family2, build_staircase_ol_example, moment_diagnostic, PiecewiseDist};
use crate::law::Law;

fn family1() -> impl Strategy<Value = PiecewiseDist> {
    (0.5f64..0.95, 0.5f64..3.0, 1.0f64..2.0, 0.0f64..1.0, 2usize..5).prop_filter_map("valid family", |(alpha, b, t, u, n)| {
        // a large enough that the blocks stay separated
        let r = 1.0 + 1.0 / alpha;
        let a_min = 2f64.powf((t + 2.0) / (r - 1.0));
        build_family1(alpha, b, t, a_min * (1.05 + 2.0 * u), n).ok()
    })
}

fn family2() -> impl Strategy<Value = PiecewiseDist> {
    (0.3f64..0.95, 1.0f64..2.5, 3.0f64..8.0, 2usize..5)
        .prop_filter_map("valid family", |(alpha, t, a, n)| build_family2(alpha, t, a, n).ok())
}

fn any_family() -> impl Strategy<Value = PiecewiseDist> {
    prop_oneof![family1(), family2()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn block_masses_sum_to_one(d in any_family()) {
        let mut m = d.block_masses();
        m.sort_by(f64::total_cmp);
        let s: f64 = m.iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-12, "sum = {s}");
        prop_assert!(d.truncation_bound <= 1e-12);
        prop_assert!((d.total_mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn tail_difference_is_density_integral(
        (alpha, b, t, n) in (0.5f64..0.95, 1u32..4, 1.0f64..2.0, 3usize..6),
        picks in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 16),
    ) {
        let a = 1.1 * 2f64.powf((t + 2.0) * alpha);
        let d = build_family1(alpha, b as f64, t, a, n).unwrap();
        let w = d.windows().to_vec();
        for (i, (u, v)) in picks.into_iter().enumerate() {
            let win = w[i % w.len().min(3)];
            let (lo, hi) = (win.lo, win.hi.next_down());
            let (x, y) = (lo + u.min(v) * (hi - lo), lo + u.max(v) * (hi - lo));
            prop_assume!(y > x);
            let diff = d.tail_value(x) - d.tail_value(y);
            let integral = simpson(|s| d.density_value(s), x, y, 4000);
            // the subtraction itself costs a few ulps of the larger tail
            let slack = 1e-12 * diff + 8.0 * f64::EPSILON * d.tail_value(x);
            prop_assert!((diff - integral).abs() <= slack, "x={x} y={y} diff={diff} integral={integral}");
        }
    }

    #[test]
    fn tail_nonincreasing(d in any_family(), raw in prop::collection::vec(0.0f64..1.0, 200)) {
        let top = d.windows().last().unwrap().hi.ln() + 1.0;
        let mut xs: Vec<f64> = raw.iter().map(|u| (u * top).exp() - 1.0).collect();
        xs.sort_by(f64::total_cmp);
        for p in xs.windows(2) {
            prop_assert!(d.tail_value(p[1]) <= d.tail_value(p[0]));
            prop_assert!(d.log_tail_value(p[1]) <= d.log_tail_value(p[0]));
        }
    }

    #[test]
    fn negative_half_line(d in any_family(), x in -1e6f64..0.0) {
        prop_assert_eq!(d.tail(x).value, 1.0);
        prop_assert_eq!(d.density(x).value, 0.0);
    }

    #[test]
    fn moment_partial_sums(d in family1(), frac in 0.1f64..0.9, over in 0.1f64..2.0) {
        let alpha = match d.kind { crate::dist::DistKind::Family1 { alpha, .. } => alpha, _ => unreachable!() };
        let below = moment_diagnostic(&d, frac * alpha).unwrap();
        let above = moment_diagnostic(&d, alpha + over).unwrap();
        prop_assert!(below.finite && !above.finite);
        let inc = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).collect::<Vec<f64>>();
        // convergent: log increments shrink towards zero
        let ib = inc(&below.log_partial_sums);
        prop_assert!(*ib.last().unwrap() < 1e-6, "{ib:?}");
        // divergent: log increments grow without bound
        let ia = inc(&above.log_partial_sums);
        prop_assert!(ia.windows(2).skip(1).all(|w| w[1] > w[0]), "{ia:?}");
        prop_assert!(*ia.last().unwrap() > 10.0);
    }
}

#[test]
fn staircase_tail_monotone_and_consistent() {
    let ex = build_staircase_ol_example(8).unwrap();
    for d in [&ex.f1, &ex.f2] {
        // the stretched-exponential density is singular at 0
        let xs: Vec<f64> = (1..4000).map(|i| 0.02 * i as f64).collect();
        for p in xs.windows(2) {
            assert!(d.tail_value(p[1]) <= d.tail_value(p[0]));
            let diff = d.tail_value(p[0]) - d.tail_value(p[1]);
            let jumps: f64 = d.atoms().iter().filter(|a| a.x > p[0] && a.x <= p[1]).map(|a| a.mass).sum();
            let mut cuts = vec![p[0]];
            cuts.extend(d.breakpoints().iter().copied().filter(|&b| b > p[0] && b < p[1]));
            cuts.push(p[1]);
            // each piece is integrated strictly inside, away from the density jumps
            let integral = cuts
                .windows(2)
                .map(|c| simpson(|s| d.density_value(s.clamp(c[0].next_up(), c[1].next_down())), c[0], c[1], 64))
                .sum::<f64>()
                + jumps;
            assert!((diff - integral).abs() <= 1e-9 * diff.max(1e-12), "x = {} diff {diff} integral {integral} jumps {jumps}", p[0]);
        }
    }
}
