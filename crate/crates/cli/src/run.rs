use std::io::Write;
use std::sync::Arc;

use anyhow::Result;
use longtail_core::acceptance::run_all;
use longtail_core::class_lab::{classify, ratio_sweep};
use longtail_core::compound::{series_condition_check, ratio_bounds, CompoundSpec, SeriesCheck, RatioBounds};
use longtail_core::conv::{cstar_estimate, nfold_tail, Convolution};
use longtail_core::counting::CountingDist;
use longtail_core::dist::{FamilyTag, PiecewiseDist};
use longtail_core::grid::{log_space, per_scale_max, ScaleMax};
use longtail_core::mc::{sample_sum, sample_xi, within_band, EmpiricalCdf};
use longtail_core::{Law, ProbeGrid, ProbePoint};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Kind};
use crate::report::Artifacts;

pub enum Status {
    Ok,
    /// Computation finished but a tolerance or acceptance check failed.
    Failed(String),
}

pub struct Run {
    pub artifacts: Artifacts,
    pub status: Status,
}

fn law_grid(d: &dyn Law, scales: &[usize], cfg: &ExperimentConfig) -> ProbeGrid {
    let w: Vec<_> = d.windows().iter().copied().filter(|w| scales.contains(&w.index)).collect();
    ProbeGrid::from_windows(&w, &cfg.grid)
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn run(kind: Kind, cfg: &ExperimentConfig) -> Result<Run> {
    cfg.validate(kind)?;
    match kind {
        Kind::FamilyReport => family_report(cfg),
        Kind::RatioSweep => sweep(cfg),
        Kind::Convolve => convolve(cfg),
        Kind::Classify => class(cfg),
        Kind::Compound => compound(cfg),
        Kind::OracleCrosscheck => crosscheck(cfg),
        Kind::AcceptanceSuite => acceptance(cfg),
    }
}

#[derive(Serialize)]
struct AnchorRow {
    n: usize,
    log_anchor: f64,
    anchor: f64,
    block_mass: f64,
    window_lo: f64,
    window_hi: f64,
}

#[derive(Serialize)]
struct RatioRow {
    n: usize,
    x: f64,
    ratio: f64,
    err: f64,
}

#[derive(Serialize)]
struct FamilyReport {
    law: String,
    norm_const: f64,
    truncation_bound: f64,
    total_mass: f64,
    anchors: Vec<AnchorRow>,
    /// `F̄(x − 1)/F̄(x)` at the right end of each block.
    ratio_trace: Vec<RatioRow>,
    ratio_limit: Option<f64>,
}

fn family_report(cfg: &ExperimentConfig) -> Result<Run> {
    let d = cfg.law.build()?;
    let s = d.scale.clone().expect("family law carries its scale sequence");
    let masses = d.block_masses();
    let anchors = d
        .windows()
        .iter()
        .map(|w| AnchorRow {
            n: w.index,
            log_anchor: s.log_anchor(w.index),
            anchor: s.anchor(w.index),
            block_mass: masses[w.index],
            window_lo: w.lo,
            window_hi: w.hi,
        })
        .collect();
    let pts: Vec<ProbePoint> = d.windows().iter().map(|w| ProbePoint { x: w.hi, scale: w.index }).collect();
    let trace = ratio_sweep(&d, 1.0, &ProbeGrid::from_points(pts))?;
    let ratio_trace: Vec<RatioRow> =
        trace.iter().map(|p| RatioRow { n: p.scale, x: p.x, ratio: p.value, err: p.err }).collect();
    let p = &cfg.law;
    let ratio_limit = match p.family {
        FamilyTag::Family1 => Some(p.b / p.t * 2f64.powf(1.0 - p.t) + 1.0),
        FamilyTag::Family2 => None,
    };
    let rep = FamilyReport {
        law: d.label(),
        norm_const: d.norm_const,
        truncation_bound: d.truncation_bound,
        total_mass: d.total_mass(),
        anchors,
        ratio_trace,
        ratio_limit,
    };
    let mut art = Artifacts::new(Kind::FamilyReport, cfg);
    art.json(&cfg.outputs.json, &rep)?;
    art.csv(&cfg.outputs.csv, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["scale_block_index", "x", "ratio", "ratio_err", "block_mass"])?;
        for r in &rep.ratio_trace {
            wr.write_record([r.n.to_string(), fmt(r.x), fmt(r.ratio), format!("{:.3e}", r.err), fmt(masses[r.n])])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    Ok(Run { artifacts: art, status: Status::Ok })
}

#[derive(Serialize)]
struct SweepSummary {
    c: f64,
    per_scale: Vec<ScaleMax>,
}

fn sweep(cfg: &ExperimentConfig) -> Result<Run> {
    let d = cfg.law.build()?;
    let grid = law_grid(&d, &cfg.ratio_sweep.scales, cfg);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &c in &cfg.ratio_sweep.cs {
        let tr = ratio_sweep(&d, c, &grid)?;
        let pp: Vec<ProbePoint> = tr.iter().map(|p| ProbePoint { x: p.x, scale: p.scale }).collect();
        let vals: Vec<f64> = tr.iter().map(|p| p.value).collect();
        summary.push(SweepSummary { c, per_scale: per_scale_max(&pp, &vals) });
        rows.extend(tr.into_iter().map(|p| (c, p)));
    }
    let mut art = Artifacts::new(Kind::RatioSweep, cfg);
    art.json(&cfg.outputs.json, &summary)?;
    art.csv(&cfg.outputs.csv, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["c", "x", "scale_block_index", "ratio", "ratio_err"])?;
        for (c, p) in &rows {
            wr.write_record([c.to_string(), fmt(p.x), p.scale.to_string(), fmt(p.value), format!("{:.3e}", p.err)])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    Ok(Run { artifacts: art, status: Status::Ok })
}

#[derive(Serialize)]
struct ConvolveSummary {
    base: String,
    order: usize,
    points: usize,
    flagged: Vec<f64>,
}

fn convolve(cfg: &ExperimentConfig) -> Result<Run> {
    let d: Arc<dyn Law> = Arc::new(cfg.law.build()?);
    let grid = law_grid(d.as_ref(), &cfg.convolve.scales, cfg);
    let nc = nfold_tail(d, cfg.convolve.order, &grid, &cfg.quad)?;
    let flagged: Vec<f64> = nc.flagged.iter().map(|&i| nc.points[i].x).collect();
    let status = if flagged.is_empty() {
        Status::Ok
    } else {
        Status::Failed(format!("{} point(s) missed the quadrature tolerance", flagged.len()))
    };
    let summary = ConvolveSummary { base: nc.base.clone(), order: nc.order, points: nc.points.len(), flagged };
    let mut art = Artifacts::new(Kind::Convolve, cfg);
    art.json(&cfg.outputs.json, &summary)?;
    art.csv(&cfg.outputs.csv, |w| nc.write_csv(w))?;
    Ok(Run { artifacts: art, status })
}

fn class(cfg: &ExperimentConfig) -> Result<Run> {
    let d: Arc<dyn Law> = Arc::new(cfg.law.build()?);
    let mut ccfg = cfg.classify.clone();
    ccfg.quad = cfg.quad;
    ccfg.grid = cfg.grid.clone();
    let rep = classify(d, &ccfg)?;
    let mut art = Artifacts::new(Kind::Classify, cfg);
    art.json(&cfg.outputs.json, &rep)?;
    art.csv(&cfg.outputs.csv, |w| rep.write_traces_csv(w))?;
    Ok(Run { artifacts: art, status: Status::Ok })
}

#[derive(Serialize)]
struct CompoundSummary {
    counting: String,
    cstar2: f64,
    cstar2_estimated: bool,
    rho: Option<f64>,
    orders_available: usize,
    ratio_bounds: Option<RatioBounds>,
    series_condition: SeriesCheck,
}

fn compound(cfg: &ExperimentConfig) -> Result<Run> {
    let p = &cfg.compound;
    let d: Arc<dyn Law> = Arc::new(cfg.law.build()?);
    let counting = CountingDist::new(p.counting.clone())?;
    let grid = law_grid(d.as_ref(), &p.scales, cfg);
    let (cstar2, estimated) = match p.cstar2 {
        Some(c) => (c, false),
        None => (cstar_estimate(d.clone(), None, &grid, &cfg.quad)?.limsup_estimate.max(2.0), true),
    };
    let mut opts = p.options.clone();
    opts.quad = cfg.quad;
    let spec = CompoundSpec::new(d, counting.clone(), Some(cstar2), opts.clone(), &grid.xs())?;
    let values = spec.compound_tail_grid(&grid)?;
    let summary = CompoundSummary {
        counting: counting.label(),
        cstar2,
        cstar2_estimated: estimated,
        rho: spec.rho(),
        orders_available: spec.orders_available(),
        ratio_bounds: ratio_bounds(&counting, cstar2).ok(),
        series_condition: series_condition_check(&counting, cstar2, opts.eps0, 2, p.series_terms)?,
    };
    let mut art = Artifacts::new(Kind::Compound, cfg);
    art.json(&cfg.outputs.json, &summary)?;
    art.csv(&cfg.outputs.csv, |w| spec.write_csv(&grid, &values, w))?;
    Ok(Run { artifacts: art, status: Status::Ok })
}

struct CrossRow {
    x: f64,
    scale: usize,
    target: f64,
    target_err: f64,
    est: longtail_core::mc::TailEstimate,
    ok: bool,
}

#[derive(Serialize)]
struct CrosscheckSummary {
    order: usize,
    samples: usize,
    seed: u64,
    points: usize,
    outside_band: Vec<f64>,
}

fn crosscheck(cfg: &ExperimentConfig) -> Result<Run> {
    let p = &cfg.crosscheck;
    let seed = cfg.seed.unwrap_or(0);
    let d: PiecewiseDist = cfg.law.build()?;
    let mut pts = Vec::new();
    for w in d.windows().iter().filter(|w| p.scales.contains(&w.index)) {
        let (lo, hi) = if p.order == 1 { (0.98 * w.lo, 1.02 * w.hi) } else { (w.lo, 2.0 * w.hi) };
        pts.extend(log_space(lo, hi, p.points_per_scale).into_iter().map(|x| (x, w.index)));
    }
    let (batch, square) = if p.order == 1 {
        (sample_xi(&d, seed, p.samples)?, None)
    } else {
        let base: Arc<dyn Law> = Arc::new(d.clone());
        (sample_sum(&d, 2, seed, p.samples)?, Some(Convolution::self_convolution(base, cfg.quad)))
    };
    let cdf = EmpiricalCdf::new(&batch)?;
    let rows: Vec<CrossRow> = pts
        .par_iter()
        .map(|&(x, scale)| {
            let (target, target_err) = match &square {
                None => (d.tail_value(x), 0.0),
                Some(h) => {
                    let e = h.tail(x);
                    (e.value, e.err)
                }
            };
            let est = cdf.tail(x);
            let ok = within_band(&est, target, target_err);
            CrossRow { x, scale, target, target_err, est, ok }
        })
        .collect();
    let outside: Vec<f64> = rows.iter().filter(|r| !r.ok).map(|r| r.x).collect();
    let status = if outside.is_empty() {
        Status::Ok
    } else {
        Status::Failed(format!("{} point(s) outside the 5-sigma band", outside.len()))
    };
    let summary = CrosscheckSummary { order: p.order, samples: p.samples, seed, points: rows.len(), outside_band: outside };
    let mut art = Artifacts::new(Kind::OracleCrosscheck, cfg);
    art.json(&cfg.outputs.json, &summary)?;
    art.csv(&cfg.outputs.csv, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "x",
            "scale_block_index",
            "closed_form",
            "closed_form_err",
            "estimate",
            "ci_halfwidth",
            "count",
            "n_samples",
            "one_sided",
            "within_band",
        ])?;
        for r in &rows {
            wr.write_record([
                fmt(r.x),
                r.scale.to_string(),
                fmt(r.target),
                format!("{:.3e}", r.target_err),
                fmt(r.est.estimate),
                format!("{:.6e}", r.est.ci_halfwidth),
                r.est.count.to_string(),
                r.est.n.to_string(),
                r.est.one_sided.to_string(),
                r.ok.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    Ok(Run { artifacts: art, status })
}

fn acceptance(cfg: &ExperimentConfig) -> Result<Run> {
    let mut acfg = cfg.acceptance.clone();
    if let Some(s) = cfg.seed {
        acfg.seed = s;
    }
    let outcomes = run_all(&acfg);
    let mut stdout = std::io::stdout().lock();
    for o in &outcomes {
        writeln!(stdout, "{}", o.line())?;
    }
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    let status = if failed.is_empty() {
        Status::Ok
    } else {
        Status::Failed(format!("criteria failing: {failed:?}"))
    };
    let mut art = Artifacts::new(Kind::AcceptanceSuite, cfg);
    art.json(&cfg.outputs.json, &outcomes)?;
    art.csv(&cfg.outputs.csv, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["criterion", "check", "value", "requirement", "pass"])?;
        for o in &outcomes {
            if let Some(e) = &o.error {
                wr.write_record([o.id.to_string(), "error".into(), "NaN".into(), e.clone(), "false".into()])?;
            }
            for c in &o.checks {
                wr.write_record([o.id.to_string(), c.name.clone(), fmt(c.value), c.requirement.clone(), c.pass.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    })?;
    Ok(Run { artifacts: art, status })
}
