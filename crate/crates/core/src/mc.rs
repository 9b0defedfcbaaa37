//! Monte Carlo ground truth: draw the defining random variables directly and
//! estimate tails of single draws, fixed-length sums and random sums.
//!
//! Batches are split into fixed-size chunks, each driven by its own ChaCha20
//! stream, so the output does not depend on the number of threads.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Geometric, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{CountingDist, CountingKind};
use crate::dist::{DistKind, PiecewiseDist};
use crate::error::{Error, Result};
use crate::numeric::log_add_exp;

pub const CHUNK: usize = 1 << 16;
const MAGIC: &[u8; 8] = b"LTSBATCH";
pub const SIGMAS: f64 = 5.0;

/// How a single draw of ξ is produced.
#[derive(Debug, Clone)]
pub enum Sampler {
    /// `η·(1 + U^{1/b})^t` with `η` on the retained anchors.
    Family1 { log_anchors: Vec<f64>, weights: WeightedIndex<f64>, b: f64, t: f64 },
    /// `(η·(1 + U))^{1/t}`.
    Family2 { log_anchors: Vec<f64>, weights: WeightedIndex<f64>, t: f64 },
    /// `F̄^{-1}(U)` through the closed-form tail.
    Inverse(Box<PiecewiseDist>),
}

impl Sampler {
    pub fn for_dist(d: &PiecewiseDist) -> Result<Self> {
        let anchors = |d: &PiecewiseDist| -> Result<(Vec<f64>, WeightedIndex<f64>)> {
            let s = d.scale.as_ref().ok_or_else(|| Error::InvalidParameter("family without scale sequence".into()))?;
            let log_anchors: Vec<f64> = (0..=s.n_max).map(|n| s.log_anchor(n)).collect();
            let masses = d.block_masses();
            let w = WeightedIndex::new(&masses).map_err(|e| Error::InvalidParameter(format!("anchor weights: {e}")))?;
            Ok((log_anchors, w))
        };
        match d.kind {
            DistKind::Family1 { b, t, .. } => {
                let (log_anchors, weights) = anchors(d)?;
                Ok(Sampler::Family1 { log_anchors, weights, b, t })
            }
            DistKind::Family2 { t, .. } => {
                let (log_anchors, weights) = anchors(d)?;
                Ok(Sampler::Family2 { log_anchors, weights, t })
            }
            _ => Ok(Sampler::Inverse(Box::new(d.clone()))),
        }
    }

    /// One draw of `ln ξ`.
    pub fn draw_log<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Family1 { log_anchors, weights, b, t } => {
                let n = weights.sample(rng);
                let u: f64 = rng.random();
                log_anchors[n] + t * u.powf(1.0 / b).ln_1p()
            }
            Sampler::Family2 { log_anchors, weights, t } => {
                let n = weights.sample(rng);
                let u: f64 = rng.random();
                (log_anchors[n] + u.ln_1p()) / t
            }
            Sampler::Inverse(d) => {
                // 1 − U lies in (0, 1]
                let u: f64 = 1.0 - rng.random::<f64>();
                d.quantile_log_tail(u.ln()).ln()
            }
        }
    }
}

/// Draw from a counting law.
pub fn sample_counting<R: Rng + ?Sized>(c: &CountingDist, rng: &mut R) -> u64 {
    match &c.kind {
        CountingKind::Poisson { mu } => Poisson::new(*mu).expect("validated mean").sample(rng) as u64,
        CountingKind::Geometric { p } => Geometric::new(1.0 - p).expect("validated p").sample(rng),
        CountingKind::PowerLaw { .. } => {
            // smallest k with P(τ > k) < 1 − U
            let v: f64 = 1.0 - rng.random::<f64>();
            let (mut lo, mut hi) = (1u64, 2u64);
            while c.sf(hi) >= v {
                lo = hi;
                hi = hi.saturating_mul(2);
            }
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if c.sf(mid) >= v {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            lo
        }
        CountingKind::Explicit { probs } => WeightedIndex::new(probs).expect("validated probabilities").sample(rng) as u64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variable", rename_all = "snake_case")]
pub enum BatchKind {
    Xi,
    /// Sum of `n` independent draws.
    Sum { n: usize },
    /// Sum of a random number of draws.
    Compound { counting: CountingDist },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub chunk: usize,
    pub law: String,
    pub dist: DistKind,
    /// Factor `1/(1 − bound)` bounding the renormalization of the truncated anchor law.
    pub renormalization: f64,
    pub truncation_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchHeader {
    pub seed: u64,
    pub n_samples: usize,
    pub kind: BatchKind,
    /// Values are `ln ξ`; `-inf` encodes an empty sum.
    pub log_domain: bool,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub header: BatchHeader,
    pub values: Vec<f64>,
}

fn chunked<F>(seed: u64, n: usize, draw: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha20Rng) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let len = CHUNK.min(n - i * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    parts.concat()
}

fn provenance(d: &PiecewiseDist) -> Provenance {
    use crate::law::Law;
    Provenance {
        generator: "ChaCha20, one stream per chunk".into(),
        chunk: CHUNK,
        law: d.label(),
        dist: d.kind.clone(),
        renormalization: 1.0 / (1.0 - d.truncation_bound),
        truncation_bound: d.truncation_bound,
    }
}

/// `n_samples` draws of `ln ξ`.
pub fn sample_xi(d: &PiecewiseDist, seed: u64, n_samples: usize) -> Result<SampleBatch> {
    let s = Sampler::for_dist(d)?;
    let values = chunked(seed, n_samples, |r| s.draw_log(r));
    Ok(SampleBatch {
        header: BatchHeader { seed, n_samples, kind: BatchKind::Xi, log_domain: true, provenance: provenance(d) },
        values,
    })
}

fn log_sum_of<R: Rng + ?Sized>(s: &Sampler, k: u64, rng: &mut R) -> f64 {
    let mut acc = f64::NEG_INFINITY;
    for _ in 0..k {
        acc = log_add_exp(acc, s.draw_log(rng));
    }
    acc
}

/// `n_samples` draws of `ln(ξ₁ + … + ξₙ)`.
pub fn sample_sum(d: &PiecewiseDist, n: usize, seed: u64, n_samples: usize) -> Result<SampleBatch> {
    if n < 1 {
        return Err(Error::InvalidParameter("fold count must be at least 1".into()));
    }
    let s = Sampler::for_dist(d)?;
    let values = chunked(seed, n_samples, |r| log_sum_of(&s, n as u64, r));
    Ok(SampleBatch {
        header: BatchHeader { seed, n_samples, kind: BatchKind::Sum { n }, log_domain: true, provenance: provenance(d) },
        values,
    })
}

/// `n_samples` draws of `ln S_τ`; an empty sum is recorded as `-inf`.
pub fn sample_compound(d: &PiecewiseDist, counting: &CountingDist, seed: u64, n_samples: usize) -> Result<SampleBatch> {
    let s = Sampler::for_dist(d)?;
    let values = chunked(seed, n_samples, |r| {
        let k = sample_counting(counting, r);
        log_sum_of(&s, k, r)
    });
    Ok(SampleBatch {
        header: BatchHeader {
            seed,
            n_samples,
            kind: BatchKind::Compound { counting: counting.clone() },
            log_domain: true,
            provenance: provenance(d),
        },
        values,
    })
}

impl SampleBatch {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config("not a sample batch file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: BatchHeader = serde_json::from_slice(&header)?;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != 8 * header.n_samples {
            return Err(Error::Config(format!("batch holds {} bytes, header promises {} values", raw.len(), header.n_samples)));
        }
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(SampleBatch { header, values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub x: f64,
    pub estimate: f64,
    /// `5·√(p̂(1 − p̂)/N)`; for an empty count, the one-sided bound `15/N`.
    pub ci_halfwidth: f64,
    pub count: usize,
    pub n: usize,
    pub one_sided: bool,
}

/// Empirical tail function of a batch, answering queries in `O(log N)`.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(batch: &SampleBatch) -> Result<Self> {
        if batch.values.is_empty() {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        let mut sorted = batch.values.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of samples strictly above `x`.
    pub fn tail(&self, x: f64) -> TailEstimate {
        let n = self.sorted.len();
        let lx = if x > 0.0 { x.ln() } else if x == 0.0 { f64::NEG_INFINITY } else { f64::NAN };
        let count = if lx.is_nan() { n } else { n - self.sorted.partition_point(|v| *v <= lx) };
        let p = count as f64 / n as f64;
        if count == 0 {
            return TailEstimate { x, estimate: 0.0, ci_halfwidth: 3.0 * SIGMAS / n as f64, count, n, one_sided: true };
        }
        let ci = SIGMAS * (p * (1.0 - p) / n as f64).sqrt();
        TailEstimate { x, estimate: p, ci_halfwidth: ci, count, n, one_sided: false }
    }
}

pub fn empirical_tail(batch: &SampleBatch, x: f64) -> Result<TailEstimate> {
    Ok(EmpiricalCdf::new(batch)?.tail(x))
}

/// Tail estimates of `Sₙ` on a grid of abscissae.
pub fn empirical_conv_tail(d: &PiecewiseDist, n: usize, seed: u64, n_samples: usize, xs: &[f64]) -> Result<Vec<TailEstimate>> {
    if n < 2 {
        return Err(Error::InvalidParameter("fold count must be at least 2".into()));
    }
    let cdf = EmpiricalCdf::new(&sample_sum(d, n, seed, n_samples)?)?;
    Ok(xs.iter().map(|&x| cdf.tail(x)).collect())
}

/// Whether an estimate agrees with `target` (known to ±`target_err`) within
/// the 5σ binomial band computed at the target.
pub fn within_band(est: &TailEstimate, target: f64, target_err: f64) -> bool {
    let n = est.n as f64;
    if est.count == 0 {
        return target - target_err <= 3.0 * SIGMAS / n;
    }
    let p = target.clamp(0.0, 1.0);
    let sigma = (p * (1.0 - p) / n).sqrt().max(1.0 / n);
    (est.estimate - target).abs() <= SIGMAS * sigma + target_err
}

/// Whether two independent estimates agree within their joint 5σ band.
pub fn joint_band(a: &TailEstimate, b: &TailEstimate) -> bool {
    let va = a.estimate * (1.0 - a.estimate) / a.n as f64;
    let vb = b.estimate * (1.0 - b.estimate) / b.n as f64;
    let sigma = (va + vb).sqrt().max(1.0 / a.n.min(b.n) as f64);
    (a.estimate - b.estimate).abs() <= SIGMAS * sigma
}

pub fn write_tail_csv<W: Write>(rows: &[(TailEstimate, Option<f64>)], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["x", "estimate", "ci_halfwidth", "count", "n_samples", "one_sided", "target", "within_band"])?;
    for (e, t) in rows {
        wr.write_record([
            format!("{:.17e}", e.x),
            format!("{:.17e}", e.estimate),
            format!("{:.3e}", e.ci_halfwidth),
            e.count.to_string(),
            e.n.to_string(),
            e.one_sided.to_string(),
            t.map_or(String::new(), |v| format!("{v:.17e}")),
            t.map_or(String::new(), |v| within_band(e, v, 0.0).to_string()),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{build_family1, build_staircase_ol_example};

    #[test]
    fn replay_is_bit_exact() {
        let d = build_family1(0.5, 1.0, 1.0, 3.0, 3).unwrap();
        let a = sample_xi(&d, 7, 200_000).unwrap();
        let b = sample_xi(&d, 7, 200_000).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = sample_xi(&d, 8, 1000).unwrap();
        assert_ne!(a.values[..1000], c.values[..]);
    }

    #[test]
    fn batch_round_trip() {
        let d = build_family1(0.5, 1.0, 1.0, 3.0, 3).unwrap();
        let a = sample_sum(&d, 2, 3, 5000).unwrap();
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        let b = SampleBatch::read(&buf[..]).unwrap();
        assert_eq!(a, b);
        assert!(SampleBatch::read(&buf[..20]).is_err());
    }

    #[test]
    fn block_draws_are_uniform() {
        let d = build_family1(0.5, 1.0, 1.0, 3.0, 3).unwrap();
        let batch = sample_xi(&d, 11, 400_000).unwrap();
        let mut buckets = [0usize; 10];
        let mut inside = 0usize;
        for v in &batch.values {
            let x = v.exp();
            if (3.0..6.0).contains(&x) {
                buckets[((x - 3.0) / 0.3) as usize] += 1;
                inside += 1;
            }
        }
        let e = inside as f64 / 10.0;
        let sd = (e * 0.9).sqrt();
        assert!(buckets.iter().all(|&k| (k as f64 - e).abs() <= 5.0 * sd), "{buckets:?}");
    }

    #[test]
    fn empirical_tail_edges() {
        let d = build_family1(0.5, 1.0, 1.0, 3.0, 3).unwrap();
        let batch = sample_xi(&d, 1, 10_000).unwrap();
        let t = empirical_tail(&batch, 2.0).unwrap();
        assert_eq!((t.estimate, t.ci_halfwidth), (1.0, 0.0));
        let t = empirical_tail(&batch, 1e300).unwrap();
        assert!(t.one_sided && t.estimate == 0.0);
    }

    #[test]
    fn inverse_sampler_matches_staircase() {
        let ex = build_staircase_ol_example(6).unwrap();
        let batch = sample_xi(&ex.f1, 5, 200_000).unwrap();
        let cdf = EmpiricalCdf::new(&batch).unwrap();
        for x in [0.5, 1.0, 2.5, 4.0, 9.5, 16.0] {
            let e = cdf.tail(x);
            assert!(within_band(&e, ex.f1.tail_value(x), 0.0), "x={x}: {e:?} vs {}", ex.f1.tail_value(x));
        }
    }

    #[test]
    fn counting_draws_have_right_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for c in [
            CountingDist::poisson(1.5).unwrap(),
            CountingDist::geometric(0.4).unwrap(),
            CountingDist::power_law(4.0).unwrap(),
            CountingDist::explicit(vec![0.1, 0.2, 0.7]).unwrap(),
        ] {
            let n = 100_000;
            let m = (0..n).map(|_| sample_counting(&c, &mut rng) as f64).sum::<f64>() / n as f64;
            assert!((m - c.mean()).abs() < 0.03, "{}: {m}", c.label());
        }
    }
}
