//! Scale-resolved membership diagnostics for the classes 𝓛, 𝓞𝓛, 𝓞𝓢 and 𝓓.
//!
//! Verdicts only say whether the probed scales are consistent with membership;
//! finite computation never decides an asymptotic class.

mod probes;

pub use probes::{
    concentration_probe, convolution_root_crosscheck, density_o_tail_probe, insensitivity_probe, ratio_sweep,
    tail_condition_x0, tail_equivalence_transfer, shifted_tail_ratio, tail_ratio, window_mass_ratio, ConcentrationRow, CrosscheckReport,
    CrosscheckStatus, TransferReport, X0Probe,
};

use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::{cstar_estimate, TracePoint};
use crate::error::{Error, Result};
use crate::grid::{per_scale_max, GridSpec, ProbeGrid, ScaleMax};
use crate::law::Law;
use crate::quad::QuadConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassTag {
    L,
    OL,
    OS,
    D,
}

impl ClassTag {
    pub const ALL: [ClassTag; 4] = [ClassTag::L, ClassTag::OL, ClassTag::OS, ClassTag::D];

    pub fn name(&self) -> &'static str {
        match self {
            ClassTag::L => "L",
            ClassTag::OL => "OL",
            ClassTag::OS => "OS",
            ClassTag::D => "D",
        }
    }
}

impl FromStr for ClassTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L" => Ok(ClassTag::L),
            "OL" => Ok(ClassTag::OL),
            "OS" => Ok(ClassTag::OS),
            "D" => Ok(ClassTag::D),
            other => Err(Error::Config(format!("unknown class '{other}' (expected L, OL, OS or D)"))),
        }
    }
}

/// Parse a comma-separated class list such as `"L,OS"`.
pub fn parse_classes(s: &str) -> Result<Vec<ClassTag>> {
    let mut out: Vec<ClassTag> = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let c: ClassTag = part.parse()?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty class selection".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Down,
    Flat,
    Up,
    Mixed,
    /// Fewer than two retained scales.
    Insufficient,
}

/// Thresholds turning per-scale maxima into a trend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrendRule {
    /// A step is down when `next ≤ down·prev`, up when `next ≥ prev/down`.
    pub down: f64,
    /// Informational: a sequence is bounded when `max/min ≤ bounded`.
    pub bounded: f64,
    /// Maxima below this count as already vanished.
    pub floor: f64,
    /// Scales below this index are shown but not used for the trend.
    pub first_scale: usize,
}

impl Default for TrendRule {
    fn default() -> Self {
        TrendRule { down: 0.7, bounded: 1.5, floor: 1e-10, first_scale: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub trend: Trend,
    pub retained: Vec<usize>,
    /// Successive quotients of the retained maxima.
    pub steps: Vec<f64>,
    pub max_over_min: f64,
    pub bounded: bool,
}

pub fn classify_trend(maxima: &[ScaleMax], rule: &TrendRule) -> TrendSummary {
    let kept: Vec<&ScaleMax> = maxima.iter().filter(|m| m.scale >= rule.first_scale).collect();
    let retained = kept.iter().map(|m| m.scale).collect();
    let vals: Vec<f64> = kept.iter().map(|m| m.value).collect();
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let max_over_min = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let bounded = max_over_min <= rule.bounded;
    if vals.len() < 2 {
        return TrendSummary { trend: Trend::Insufficient, retained, steps: vec![], max_over_min, bounded };
    }
    let mut steps = Vec::new();
    let mut kinds = Vec::new();
    for w in vals.windows(2) {
        let q = w[1] / w[0];
        steps.push(q);
        kinds.push(if w[1] <= rule.floor || q <= rule.down {
            Trend::Down
        } else if q >= 1.0 / rule.down {
            Trend::Up
        } else {
            Trend::Flat
        });
    }
    let trend = if kinds.iter().all(|k| *k == kinds[0]) { kinds[0] } else { Trend::Mixed };
    TrendSummary { trend, retained, steps, max_over_min, bounded }
}

/// A named ratio trace with its per-scale maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTrace {
    pub name: String,
    pub points: Vec<TracePoint>,
    pub per_scale: Vec<ScaleMax>,
}

impl RatioTrace {
    pub fn new(name: impl Into<String>, points: Vec<TracePoint>) -> Self {
        let pp: Vec<_> = points.iter().map(|p| crate::grid::ProbePoint { x: p.x, scale: p.scale }).collect();
        let vals: Vec<f64> = points.iter().map(|p| p.value).collect();
        let per_scale = per_scale_max(&pp, &vals);
        RatioTrace { name: name.into(), points, per_scale }
    }

    /// The same trace with every value replaced by `|value − 1|`.
    pub fn deviation(&self, name: impl Into<String>) -> Self {
        let pts = self.points.iter().map(|p| TracePoint { value: (p.value - 1.0).abs(), ..*p }).collect();
        RatioTrace::new(name, pts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEvidence {
    pub class: ClassTag,
    pub verdict: Verdict,
    /// What the trend was computed from.
    pub statistic: String,
    pub trend: TrendSummary,
    /// Per-scale maxima of the deciding statistic with their abscissae.
    pub witnesses: Vec<ScaleMax>,
    pub traces: Vec<RatioTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub scales: Vec<usize>,
    pub grid: GridSpec,
    /// Shifts for the 𝓞𝓛 probe.
    pub cs: Vec<f64>,
    pub rule: TrendRule,
    pub classes: Vec<ClassTag>,
    pub quad: QuadConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            scales: vec![0, 1, 2],
            grid: GridSpec::default(),
            cs: vec![1.0, 2.0, 4.0],
            rule: TrendRule::default(),
            classes: ClassTag::ALL.to_vec(),
            quad: QuadConfig::default(),
        }
    }
}

impl ClassifyConfig {
    pub fn probe_grid(&self, law: &dyn Law) -> Result<ProbeGrid> {
        let windows: Vec<_> = law.windows().iter().copied().filter(|w| self.scales.contains(&w.index)).collect();
        let grid = ProbeGrid::from_windows(&windows, &self.grid);
        let found = grid.scales().len();
        if found < 2 {
            return Err(Error::ProbeTooShallow { found, needed: 2 });
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub subject: String,
    pub config: ClassifyConfig,
    pub evidence: Vec<ClassEvidence>,
    /// `−ln F̄(x)/x`; a falling trend marks a heavy tail.
    pub heavy_tail: RatioTrace,
    pub heavy_tail_trend: TrendSummary,
    pub notes: Vec<String>,
}

impl ClassReport {
    pub fn verdict(&self, class: ClassTag) -> Option<Verdict> {
        self.evidence.iter().find(|e| e.class == class).map(|e| e.verdict)
    }

    pub fn evidence(&self, class: ClassTag) -> Option<&ClassEvidence> {
        self.evidence.iter().find(|e| e.class == class)
    }

    pub fn is_heavy_tailed(&self) -> bool {
        self.heavy_tail_trend.trend == Trend::Down
    }

    /// Every trace point as `class,trace,x,scale,value,err`.
    pub fn write_traces_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["class", "trace", "x", "scale_block_index", "value", "err"])?;
        let mut emit = |class: &str, t: &RatioTrace| -> Result<()> {
            for p in &t.points {
                wr.write_record([
                    class.to_string(),
                    t.name.clone(),
                    format!("{:.17e}", p.x),
                    p.scale.to_string(),
                    format!("{:.17e}", p.value),
                    format!("{:.3e}", p.err),
                ])?;
            }
            Ok(())
        };
        for e in &self.evidence {
            for t in &e.traces {
                emit(e.class.name(), t)?;
            }
        }
        emit("heavy", &self.heavy_tail)?;
        wr.flush()?;
        Ok(())
    }
}

fn decide(class: ClassTag, trend: Trend) -> Verdict {
    match (class, trend) {
        (_, Trend::Mixed | Trend::Insufficient) => Verdict::Inconclusive,
        (ClassTag::L, Trend::Down) => Verdict::Consistent,
        (ClassTag::L, _) => Verdict::Inconsistent,
        (_, Trend::Up) => Verdict::Inconsistent,
        _ => Verdict::Consistent,
    }
}

/// Run the selected class probes over the law's scale windows.
pub fn classify(law: Arc<dyn Law>, cfg: &ClassifyConfig) -> Result<ClassReport> {
    let grid = cfg.probe_grid(law.as_ref())?;
    let mut evidence = Vec::new();
    let mut notes = Vec::new();

    let want = |c: ClassTag| cfg.classes.contains(&c);
    let mut sweeps: Vec<(f64, RatioTrace)> = Vec::new();
    if want(ClassTag::L) || want(ClassTag::OL) {
        let mut cs = cfg.cs.clone();
        if !cs.contains(&1.0) {
            cs.insert(0, 1.0);
        }
        for c in cs {
            if c == 1.0 || want(ClassTag::OL) {
                sweeps.push((c, RatioTrace::new(format!("tail(x-{c})/tail(x)"), ratio_sweep(law.as_ref(), c, &grid)?)));
            }
        }
    }

    if want(ClassTag::L) {
        let base = &sweeps.iter().find(|(c, _)| *c == 1.0).expect("c = 1 sweep").1;
        let dev = base.deviation("|tail(x-1)/tail(x) - 1|");
        let trend = classify_trend(&dev.per_scale, &cfg.rule);
        evidence.push(ClassEvidence {
            class: ClassTag::L,
            verdict: decide(ClassTag::L, trend.trend),
            statistic: dev.name.clone(),
            trend,
            witnesses: dev.per_scale.clone(),
            traces: vec![base.clone(), dev],
        });
    }

    if want(ClassTag::OL) {
        let mut worst: Option<(Verdict, TrendSummary, Vec<ScaleMax>, String)> = None;
        let mut traces = Vec::new();
        for (c, tr) in sweeps.iter().filter(|(c, _)| cfg.cs.contains(c)) {
            let trend = classify_trend(&tr.per_scale, &cfg.rule);
            let v = decide(ClassTag::OL, trend.trend);
            let rank = |v: Verdict| match v {
                Verdict::Consistent => 0,
                Verdict::Inconclusive => 1,
                Verdict::Inconsistent => 2,
            };
            if worst.as_ref().is_none_or(|w| rank(v) > rank(w.0)) {
                worst = Some((v, trend, tr.per_scale.clone(), format!("max tail(x-{c})/tail(x)")));
            }
            traces.push(tr.clone());
        }
        if let Some((verdict, trend, witnesses, statistic)) = worst {
            evidence.push(ClassEvidence { class: ClassTag::OL, verdict, statistic, trend, witnesses, traces });
        }
    }

    if want(ClassTag::OS) {
        let est = cstar_estimate(law.clone(), None, &grid, &cfg.quad)?;
        let tr = RatioTrace::new("tail2(x)/tail(x)", est.trace);
        let trend = classify_trend(&tr.per_scale, &cfg.rule);
        evidence.push(ClassEvidence {
            class: ClassTag::OS,
            verdict: decide(ClassTag::OS, trend.trend),
            statistic: "max tail2(x)/tail(x)".into(),
            trend,
            witnesses: tr.per_scale.clone(),
            traces: vec![tr],
        });
    }

    if want(ClassTag::D) {
        let pts: Vec<TracePoint> = grid
            .points
            .par_iter()
            .map(|p| {
                let r = tail_ratio(law.as_ref(), 0.5 * p.x, p.x);
                TracePoint { x: p.x, scale: p.scale, value: r.value, err: r.err }
            })
            .collect();
        let tr = RatioTrace::new("tail(x/2)/tail(x)", pts);
        let trend = classify_trend(&tr.per_scale, &cfg.rule);
        evidence.push(ClassEvidence {
            class: ClassTag::D,
            verdict: decide(ClassTag::D, trend.trend),
            statistic: "max tail(x/2)/tail(x)".into(),
            trend,
            witnesses: tr.per_scale.clone(),
            traces: vec![tr],
        });
    }

    if evidence.iter().any(|e| e.class == ClassTag::L && e.verdict == Verdict::Consistent)
        && evidence.iter().any(|e| e.class == ClassTag::OL && e.verdict == Verdict::Inconsistent)
    {
        if let Some(e) = evidence.iter_mut().find(|e| e.class == ClassTag::L) {
            e.verdict = Verdict::Inconclusive;
        }
        notes.push("L downgraded to inconclusive: OL probe is inconsistent".into());
    }

    let heavy_pts: Vec<TracePoint> = grid
        .points
        .par_iter()
        .map(|p| {
            let lt = law.log_tail(p.x);
            TracePoint { x: p.x, scale: p.scale, value: -lt.value / p.x, err: lt.err / p.x }
        })
        .collect();
    let heavy_tail = RatioTrace::new("-ln tail(x)/x", heavy_pts);
    let heavy_rule = TrendRule { first_scale: 0, ..cfg.rule };
    let heavy_tail_trend = classify_trend(&heavy_tail.per_scale, &heavy_rule);

    Ok(ClassReport { subject: law.label(), config: cfg.clone(), evidence, heavy_tail, heavy_tail_trend, notes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maxima(v: &[f64]) -> Vec<ScaleMax> {
        v.iter().enumerate().map(|(i, &value)| ScaleMax { scale: i, value, arg: 0.0 }).collect()
    }

    #[test]
    fn trend_thresholds() {
        let r = TrendRule { first_scale: 0, ..TrendRule::default() };
        assert_eq!(classify_trend(&maxima(&[1.0, 0.5, 0.2]), &r).trend, Trend::Down);
        assert_eq!(classify_trend(&maxima(&[1.0, 0.9, 1.1]), &r).trend, Trend::Flat);
        assert_eq!(classify_trend(&maxima(&[1.0, 2.0, 9.0]), &r).trend, Trend::Up);
        assert_eq!(classify_trend(&maxima(&[1.0, 0.5, 0.5]), &r).trend, Trend::Mixed);
        assert_eq!(classify_trend(&maxima(&[1.0]), &r).trend, Trend::Insufficient);
        assert_eq!(classify_trend(&maxima(&[1e-3, 1e-12, 1e-11]), &r).trend, Trend::Down);
        let skip = TrendRule::default();
        assert_eq!(classify_trend(&maxima(&[0.2, 0.3]), &skip).trend, Trend::Insufficient);
        assert_eq!(classify_trend(&maxima(&[0.2, 0.3, 0.1, 0.02]), &skip).trend, Trend::Down);
    }

    #[test]
    fn class_list_parsing() {
        assert_eq!(parse_classes("L, os").unwrap(), vec![ClassTag::L, ClassTag::OS]);
        assert!(parse_classes("S").is_err());
        assert!(parse_classes("").is_err());
    }

    #[test]
    fn l_consistent_implies_ol_consistent() {
        for t in [Trend::Down, Trend::Flat, Trend::Up, Trend::Mixed] {
            if decide(ClassTag::L, t) == Verdict::Consistent {
                assert_eq!(decide(ClassTag::OL, t), Verdict::Consistent);
            }
        }
    }
}
