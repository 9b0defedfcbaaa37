use crate::dist::{build_family1, build_staircase_ol_example};
use crate::grid::log_space;
use crate::law::Law;
use crate::mc::{sample_xi, within_band, EmpiricalCdf};

#[test]
fn staircase_tails_match_samples() {
    let ex = build_staircase_ol_example(6).unwrap();
    for (i, d) in [&ex.f1, &ex.f2].into_iter().enumerate() {
        let batch = sample_xi(d, 77 + i as u64, 1_000_000).unwrap();
        let cdf = EmpiricalCdf::new(&batch).unwrap();
        for w in d.windows().iter().take(3) {
            for x in log_space(w.lo, w.hi, 20) {
                let e = cdf.tail(x);
                assert!(within_band(&e, d.tail_value(x), 0.0), "{} x = {x}: {e:?} vs {}", d.label(), d.tail_value(x));
            }
        }
    }
}

#[test]
fn uniform_within_blocks() {
    let d = build_family1(0.5, 1.0, 1.0, 3.0, 3).unwrap();
    let batch = sample_xi(&d, 5, 1_000_000).unwrap();
    for w in d.windows().iter().take(2) {
        let mut counts = [0usize; 10];
        for &lv in &batch.values {
            let x = lv.exp();
            if x >= w.lo && x < w.hi {
                let k = (((x - w.lo) / (w.hi - w.lo)) * 10.0) as usize;
                counts[k.min(9)] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let expect = total as f64 / 10.0;
        let sigma = (expect * 0.9).sqrt();
        for (k, &c) in counts.iter().enumerate() {
            assert!((c as f64 - expect).abs() <= 5.0 * sigma, "block {} bucket {k}: {c} vs {expect}", w.index);
        }
    }
}

#[test]
fn batches_replay_bit_exactly_across_thread_counts() {
    let d = build_family1(0.5, 2.0, 1.5, 5.0, 3).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| sample_xi(&d, 11, 300_000).unwrap())
    };
    let (a, b, c) = (run(1), run(3), run(8));
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    assert_eq!(bits(&a.values), bits(&b.values));
    assert_eq!(bits(&a.values), bits(&c.values));
    assert_eq!(a.header, b.header);
}
