//! The acceptance suite: ten scale-resolved reproduction checks.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class_lab::{
    classify, concentration_probe, ratio_sweep, tail_equivalence_transfer, tail_ratio, ClassTag, ClassifyConfig,
    Verdict,
};
use crate::compound::{series_condition_check, ratio_bounds, CompoundOptions, CompoundSpec};
use crate::controls::{Perturbation, TailPerturbation};
use crate::conv::{self_conv_density, t_functional, Convolution};
use crate::counting::CountingDist;
use crate::dist::{build_family1, build_family2, PiecewiseDist};
use crate::error::Result;
use crate::grid::{log_space, per_scale_max, GridSpec, ProbeGrid, ProbePoint, ScaleWindow};
use crate::law::Law;
use crate::mc::{sample_sum, sample_xi, within_band, EmpiricalCdf};
use crate::numeric::log_sum_exp;
use crate::quad::QuadConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptanceConfig {
    pub seed: u64,
    pub mc_samples: usize,
    pub grid: GridSpec,
    pub quad: QuadConfig,
    /// Subset of criteria to run; empty means all.
    pub only: Vec<u8>,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        AcceptanceConfig { seed: 20_130_501, mc_samples: 1_000_000, grid: GridSpec::default(), quad: QuadConfig::default(), only: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable requirement.
    pub requirement: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub seconds: f64,
    /// Set when the criterion could not be evaluated at all.
    pub error: Option<String>,
}

impl CriterionOutcome {
    /// One `[PASS]`/`[FAIL]` line.
    pub fn line(&self) -> String {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let tail = match (&self.error, failed.is_empty()) {
            (Some(e), _) => format!(" (error: {e})"),
            (None, true) => String::new(),
            (None, false) => format!(" (failing: {})", failed.join(", ")),
        };
        format!(
            "[{}] criterion {:>2}: {} [{:.1}s]{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            tail
        )
    }
}

pub const TITLES: [&str; 10] = [
    "ratio limit at block ends",
    "L failure for F, L evidence for F*F",
    "self-convolution support exactness",
    "density o(tail) for F*F",
    "OS dichotomy through T/tail",
    "normalization and Monte Carlo agreement",
    "compound ratio bounds",
    "series condition",
    "concentration of n-fold sums",
    "tail-equivalence transfer",
];

struct Checks(Vec<Check>);

impl Checks {
    fn new() -> Self {
        Checks(Vec::new())
    }

    fn push(&mut self, name: impl Into<String>, value: f64, requirement: impl Into<String>, pass: bool) {
        self.0.push(Check { name: name.into(), value, requirement: requirement.into(), pass });
    }
}

/// Reference law: α = 1/2, b = 1, t = 1, a = 3 with anchors 3, 27, 3⁹, 3²⁷.
pub fn reference_family1() -> Result<PiecewiseDist> {
    build_family1(0.5, 1.0, 1.0, 3.0, 3)
}

/// α = 0.4, t = 1.5, a = 3, five anchors.
pub fn reference_family2() -> Result<PiecewiseDist> {
    build_family2(0.4, 1.5, 3.0, 4)
}

fn windows(d: &dyn Law, scales: &[usize]) -> Vec<ScaleWindow> {
    d.windows().iter().copied().filter(|w| scales.contains(&w.index)).collect()
}

fn grid_a(d: &dyn Law, cfg: &AcceptanceConfig) -> ProbeGrid {
    ProbeGrid::from_windows(&windows(d, &[0, 1, 2]), &cfg.grid)
}

fn maxima_of(points: &[ProbePoint], values: &[f64]) -> Vec<f64> {
    per_scale_max(points, values).iter().map(|m| m.value).collect()
}

pub fn run_criterion(id: u8, cfg: &AcceptanceConfig) -> CriterionOutcome {
    let start = Instant::now();
    let res = match id {
        1 => criterion1(),
        2 => criterion2(cfg),
        3 => criterion3(cfg),
        4 => criterion4(cfg),
        5 => criterion5(cfg),
        6 => criterion6(cfg),
        7 => criterion7(cfg),
        8 => criterion8(),
        9 => criterion9(cfg),
        10 => criterion10(cfg),
        _ => Err(crate::error::Error::InvalidParameter(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let title = TITLES.get(id.wrapping_sub(1) as usize).copied().unwrap_or("unknown").to_string();
    match res {
        Ok(c) => {
            let passed = !c.0.is_empty() && c.0.iter().all(|c| c.pass);
            CriterionOutcome { id, title, passed, checks: c.0, seconds, error: None }
        }
        Err(e) => CriterionOutcome { id, title, passed: false, checks: vec![], seconds, error: Some(e.to_string()) },
    }
}

pub fn run_all(cfg: &AcceptanceConfig) -> Vec<CriterionOutcome> {
    (1..=10u8).filter(|i| cfg.only.is_empty() || cfg.only.contains(i)).map(|i| run_criterion(i, cfg)).collect()
}

fn criterion1() -> Result<Checks> {
    let start = Instant::now();
    let mut ck = Checks::new();
    let f = reference_family1()?;
    let s = f.scale.clone().expect("family scale");
    let at = |d: &PiecewiseDist, n: usize| {
        let g = ProbeGrid::from_points(vec![ProbePoint { x: 2.0 * d.scale.as_ref().unwrap().anchor(n), scale: n }]);
        ratio_sweep(d, 1.0, &g).map(|v| v[0].value)
    };
    // independent oracle: 1 + C·aₙ^{−α}/(aₙ·C·Σ_{i>n} aᵢ^{−α}), from the anchors alone
    let oracle = |n: usize| {
        let rest: Vec<f64> = (n + 1..=s.n_max).map(|i| -0.5 * s.log_anchor(i)).collect();
        1.0 + (-0.5 * s.log_anchor(n) - s.log_anchor(n) - log_sum_exp(&rest)).exp()
    };
    let r: Vec<f64> = (0..3).map(|n| at(&f, n)).collect::<Result<_>>()?;
    for (n, v) in r.iter().enumerate() {
        let o = oracle(n);
        ck.push(format!("n={n} matches anchor oracle"), *v, format!("|r - {o:.12}| <= 1e-12"), (v - o).abs() <= 1e-12);
    }
    // the reference digits come from six-decimal intermediates
    ck.push("n=0 digits", r[0], "|r - 1.96429| <= 1e-5", (r[0] - 1.96429).abs() <= 1e-5);
    ck.push("n=1 digits", r[1], "|r - 1.99995| <= 1e-4", (r[1] - 1.99995).abs() <= 1e-4);
    ck.push("n=2 limit", r[2], "|r - 2| < 1e-6", (r[2] - 2.0).abs() < 1e-6);
    let f2 = build_family1(0.5, 2.0, 1.0, 3.0, 3)?;
    let v = at(&f2, 2)?;
    ck.push("b=2 n=2 limit", v, "|r - 3| <= 1e-4", (v - 3.0).abs() <= 1e-4);
    let secs = start.elapsed().as_secs_f64();
    ck.push("runtime", secs, "< 1 s", secs < 1.0);
    Ok(ck)
}

fn criterion2(cfg: &AcceptanceConfig) -> Result<Checks> {
    let mut ck = Checks::new();
    let f: Arc<dyn Law> = Arc::new(reference_family1()?);
    let ccfg = ClassifyConfig { classes: vec![ClassTag::L, ClassTag::OL], quad: cfg.quad, grid: cfg.grid.clone(), ..Default::default() };
    let rep = classify(f.clone(), &ccfg)?;
    let l = rep.evidence(ClassTag::L).expect("L evidence");
    ck.push("F verdict", 0.0, "L inconsistent", l.verdict == Verdict::Inconsistent);
    for m in &l.traces[0].per_scale {
        ck.push(format!("F witness ratio, scale {}", m.scale), m.value, ">= 1.9", m.value >= 1.9);
    }
    let h: Arc<dyn Law> = Arc::new(Convolution::self_convolution(f.clone(), cfg.quad));
    let grid = grid_a(f.as_ref(), cfg);
    let dev: Vec<f64> = grid.points.par_iter().map(|p| (tail_ratio(h.as_ref(), p.x - 1.0, p.x).value - 1.0).abs()).collect();
    let d = maxima_of(&grid.points, &dev);
    for k in 1..d.len() {
        let q = d[k - 1] / d[k];
        ck.push(format!("F*F deviation decay {}->{}", k - 1, k), q, ">= 2", q >= 2.0);
    }
    Ok(ck)
}

fn criterion3(cfg: &AcceptanceConfig) -> Result<Checks> {
    let mut ck = Checks::new();
    let f = reference_family1()?;
    let s = f.scale.clone().expect("family scale");
    let a0 = s.anchor(0);
    // positive exactly on (aₙ + a₀, 4aₙ) for t = 1
    let inside: Vec<(f64, f64)> = (0..=s.n_max).map(|n| (s.anchor(n) + a0, 4.0 * s.anchor(n))).collect();
    let mut gaps = vec![(0.0, inside[0].0)];
    for w in inside.windows(2) {
        gaps.push((w[0].1, w[1].0));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut pick = |iv: &[(f64, f64)], closed: bool| -> Vec<f64> {
        (0..50)
            .map(|i| {
                let (lo, hi) = iv[i % iv.len()];
                let u: f64 = if closed && i < 2 * iv.len() { (i / iv.len()) as f64 } else { rng.random() };
                if hi / lo.max(1.0) > 100.0 {
                    (lo.max(1.0).ln() + u * (hi.ln() - lo.max(1.0).ln())).exp()
                } else {
                    lo + u * (hi - lo)
                }
            })
            .collect()
    };
    let gap_pts = pick(&gaps, true);
    let int_pts: Vec<f64> = pick(&inside[..3], false).into_iter().filter(|x| inside.iter().any(|(l, h)| x > l && x < h)).collect();
    let zero = gap_pts.iter().filter(|&&x| self_conv_density(&f, x, &cfg.quad).value == 0.0).count();
    let pos = int_pts.iter().filter(|&&x| self_conv_density(&f, x, &cfg.quad).value > 0.0).count();
    ck.push("gap points with h = 0", zero as f64, "all 50", zero == 50);
    ck.push("interior points with h > 0", pos as f64, "all 50", pos == 50 && int_pts.len() == 50);
    Ok(ck)
}

fn criterion4(cfg: &AcceptanceConfig) -> Result<Checks> {
    let mut ck = Checks::new();
    let f: Arc<dyn Law> = Arc::new(reference_family1()?);
    let h = Convolution::self_convolution(f.clone(), cfg.quad);
    let grid = grid_a(f.as_ref(), cfg);
    let v: Vec<f64> = grid
        .points
        .par_iter()
        .map(|p| {
            let t = h.tail(p.x).value;
            if t > 0.0 {
                h.density(p.x).value / t
            } else {
                f64::NAN
            }
        })
        .collect();
    let m = maxima_of(&grid.points, &v);
    for k in 1..m.len() {
        let q = m[k] / m[k - 1];
        ck.push(format!("h/tail max step {}->{}", k - 1, k), q, "<= 0.7", q <= 0.7);
    }
    Ok(ck)
}

/// `T/H̄` on the support window `[aₙ + a₀, 2^{t+2}aₙ]` of each scale.
pub fn t_ratio_maxima(f: Arc<dyn Law>, scales: &[usize], points: usize, quad: &QuadConfig) -> Result<Vec<f64>> {
    let h = Convolution::self_convolution(f.clone(), *quad);
    let w = f.windows();
    let a0 = w[0].lo;
    let mut pts = Vec::new();
    for &n in scales {
        let win = w[n];
        let hi = 4.0 * win.hi;
        for x in log_space(win.lo + a0, hi, points) {
            pts.push(ProbePoint { x, scale: n });
        }
    }
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|p| {
            let tv = t_functional(&h, p.x, quad);
            if tv.tail.value > 0.0 {
                tv.ratio
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(maxima_of(&pts, &vals))
}

fn criterion5(cfg: &AcceptanceConfig) -> Result<Checks> {
    let mut ck = Checks::new();
    let f1: Arc<dyn Law> = Arc::new(reference_family1()?);
    let m = t_ratio_maxima(f1, &[0, 1, 2], 64, &cfg.quad)?;
    let (lo, hi) = m.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    for (n, v) in m.iter().enumerate() {
        ck.push(format!("family1 max T/tail, scale {n}"), *v, "reported", true);
    }
    ck.push("family1 max/min of T/tail", hi / lo, "<= 1.5", hi / lo <= 1.5);

    let f2d = reference_family2()?;
    let s = f2d.scale.clone().expect("family scale");
    let t = 1.5;
    let f2: Arc<dyn Law> = Arc::new(f2d);
    let h = Convolution::self_convolution(f2, cfg.quad);
    let r: Vec<f64> = (0..3)
        .into_par_iter()
        .map(|n| {
            let x = 2.0 * ((std::f64::consts::LN_2 + s.log_anchor(n)) / t).exp();
            t_functional(&h, x, &cfg.quad).ratio
        })
        .collect();
    for k in 1..r.len() {
        let q = r[k] / r[k - 1];
        ck.push(format!("family2 T/tail growth {}->{}", k - 1, k), q, ">= 2", q >= 2.0);
    }
    Ok(ck)
}

fn criterion6(cfg: &AcceptanceConfig) -> Result<Checks> {
    let mut ck = Checks::new();
    let f = reference_family1()?;
    let mass: f64 = {
        let mut m = f.block_masses();
        m.sort_by(f64::total_cmp);
        m.iter().sum()
    };
    ck.push("block masses sum", mass, "|sum - 1| <= 1e-12", (mass - 1.0).abs() <= 1e-12);
    let n = cfg.mc_samples;
    ck.push("sample size", n as f64, ">= 1e6", n >= 1_000_000);

    let xs_for = |d: &dyn Law| -> Vec<f64> {
        windows(d, &[0, 1, 2]).iter().flat_map(|w| log_space(w.lo * 0.98, w.hi * 1.02, 20)).collect()
    };
    for (name, d) in [("family1", f.clone()), ("family2", reference_family2()?)] {
        let cdf = EmpiricalCdf::new(&sample_xi(&d, cfg.seed, n)?)?;
        let xs = xs_for(&d);
        let ok = xs.iter().filter(|&&x| within_band(&cdf.tail(x), d.tail_value(x), 0.0)).count();
        ck.push(format!("{name} tails within 5 sigma"), ok as f64, format!("all {}", xs.len()), ok == xs.len());
    }

    let fa: Arc<dyn Law> = Arc::new(f.clone());
    let h = Convolution::self_convolution(fa, cfg.quad);
    let cdf = EmpiricalCdf::new(&sample_sum(&f, 2, cfg.seed ^ 0x9e37_79b9, n)?)?;
    let xs: Vec<f64> = windows(&f, &[0, 1, 2]).iter().flat_map(|w| log_space(w.lo + 3.0, 2.0 * w.hi, 20)).collect();
    let ok = xs
        .par_iter()
        .filter(|&&x| {
            let q = h.tail(x);
            within_band(&cdf.tail(x), q.value, q.err)
        })
        .count();
    ck.push("order-2 tails within joint bands", ok as f64, format!("all {}", xs.len()), ok == xs.len());
    Ok(ck)
}

fn criterion7(cfg: &AcceptanceConfig) -> Result<Checks> {
    let mut ck = Checks::new();
    let pois = CountingDist::poisson(1.0)?;
    let b = ratio_bounds(&pois, 3.0)?;
    let rem = b.poisson_closed_form.expect("poisson closed forms");
    ck.push("lower digits", rem.lower, "|v - 1.432332| <= 1e-6", (rem.lower - 1.432332).abs() <= 1e-6);
    ck.push("upper digits", rem.upper, "|v - 1.80827| <= 5e-6", (rem.upper - 1.80827).abs() <= 5e-6);

    // independent summation of the series the closed forms stand for, doubled
    let terms = 100_000u64;
    let mut pmf = vec![0.0f64; 2 * terms as usize + 2];
    let mut p = (-1f64).exp();
    for (k, slot) in pmf.iter_mut().enumerate() {
        if k > 0 {
            p /= k as f64;
        }
        *slot = p;
    }
    let (mut lo, mut up) = (0.0, 0.0);
    for m in (1..=terms).rev() {
        let i = m as usize;
        lo += m as f64 * (pmf[2 * i] + pmf[2 * i + 1]);
        let q = pmf[2 * i - 1] + pmf[2 * i];
        if q > 0.0 {
            up += m as f64 * q * 2f64.powi(m as i32 - 1);
        }
    }
    let (lo, up) = (2.0 * lo, 2.0 * up);
    ck.push("lower certified by summation", lo, format!("|sum - {:.6}| <= 1e-6", rem.lower), (lo - rem.lower).abs() <= 1e-6);
    ck.push("upper certified by summation", up, format!("|sum - {:.6}| <= 1e-6", rem.upper), (up - rem.upper).abs() <= 1e-6);

    let f: Arc<dyn Law> = Arc::new(reference_family1()?);
    let grid = grid_a(f.as_ref(), cfg).restrict(&[2]);
    let spec = CompoundSpec::new(
        f.clone(),
        pois,
        Some(3.0),
        CompoundOptions { quad: cfg.quad, ..Default::default() },
        &grid.xs(),
    )?;
    let two = spec.order(2).expect("order 2").clone();
    let window = (0.85 * rem.lower, 1.15 * rem.upper);
    let ratios: Vec<(f64, f64)> = grid
        .points
        .par_iter()
        .map(|p| {
            let v = spec.compound_tail(p.x)?;
            let d = two.tail(p.x).value;
            Ok(((v.value.value) / d, (v.value.value + v.trunc_bound) / d))
        })
        .collect::<Result<_>>()?;
    let min = ratios.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    ck.push("compound/tail2 lowest on scale 2", min, format!(">= {:.4}", window.0), min >= window.0);
    ck.push("compound/tail2 highest on scale 2", max, format!("<= {:.4}", window.1), max <= window.1);
    Ok(ck)
}

fn criterion8() -> Result<Checks> {
    let mut ck = Checks::new();
    let eps0 = 0.1;
    let pois = CountingDist::poisson(1.0)?;
    let s = series_condition_check(&pois, 3.0, eps0, 2, 200)?;
    ck.push("poisson finite", s.partial.last().copied().unwrap_or(0.0), "finite", s.finite);
    let p = 0.4;
    let geo = CountingDist::geometric(p)?;
    let s = series_condition_check(&geo, 3.0, eps0, 1, 200)?;
    ck.push("admissible geometric finite", p * s.rho, "p*rho < 1 and finite", p * s.rho < 1.0 && s.finite);
    let pl = CountingDist::power_law(3.0)?;
    for c in [2.001, 2.5, 3.0, 10.0] {
        let s = series_condition_check(&pl, c, eps0, 2, 400)?;
        let last = s.partial.last().copied().unwrap_or(0.0);
        ck.push(format!("power law not finite, cstar={c}"), last, "not finite, partial sums > 1e3", !s.finite && last > 1e3);
    }
    Ok(ck)
}

/// Abscissae for the concentration probe: a quarter-step grid over the first
/// block of every order plus the scale grids.
pub fn concentration_grid(f: &dyn Law, max_order: usize, spec: &GridSpec) -> Vec<f64> {
    let w0 = f.windows()[0];
    let mut xs: Vec<f64> = Vec::new();
    for n in 1..=max_order {
        let (lo, hi) = (n as f64 * w0.lo, n as f64 * w0.hi + 1.0);
        let steps = ((hi - lo) / 0.25).ceil() as usize;
        xs.extend((0..=steps).map(|i| lo + 0.25 * i as f64));
    }
    let g = ProbeGrid::from_windows(&windows(f, &[0, 1, 2]), spec);
    xs.extend(g.xs());
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

fn criterion9(cfg: &AcceptanceConfig) -> Result<Checks> {
    let mut ck = Checks::new();
    let f: Arc<dyn Law> = Arc::new(reference_family1()?);
    let xs = concentration_grid(f.as_ref(), 4, &cfg.grid);
    let rows = concentration_probe(f, 4, &xs, &cfg.quad)?;
    let base = rows[0].scaled;
    for r in &rows {
        ck.push(format!("n={} sup mass * sqrt(n)", r.order), r.scaled, format!("<= {:.6}", 2.0 * base), r.scaled <= 2.0 * base);
    }
    Ok(ck)
}

fn criterion10(cfg: &AcceptanceConfig) -> Result<Checks> {
    let mut ck = Checks::new();
    let f: Arc<dyn Law> = Arc::new(reference_family1()?);
    let l: Arc<dyn Law> = Arc::new(TailPerturbation::new(f.clone(), Perturbation::LogDecay)?);
    let grid = grid_a(f.as_ref(), cfg);
    let rep = tail_equivalence_transfer(f, l, None, &grid, &cfg.quad, 0.25)?;
    for m in &rep.distance {
        ck.push(format!("distance from 1, scale {}", m.scale), m.value, "reported", true);
    }
    ck.push("distance decay 0->2", rep.decay_factor, ">= 2", rep.decay_factor >= 2.0);
    Ok(ck)
}
