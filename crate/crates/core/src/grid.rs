//! Probe abscissae grouped by scale block.

use serde::{Deserialize, Serialize};

/// One scale block `[lo, hi]` with its index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleWindow {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub x: f64,
    pub scale: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub points_per_block: usize,
    /// Offsets applied on both sides of each window endpoint.
    pub offsets: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points_per_block: 64, offsets: vec![1.0, 2.0, 4.0] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub points: Vec<ProbePoint>,
}

impl ProbeGrid {
    /// Log-spaced points across each window plus the endpoints and their offsets.
    pub fn from_windows(windows: &[ScaleWindow], spec: &GridSpec) -> Self {
        let mut points = Vec::new();
        for w in windows {
            if !(w.lo.is_finite() && w.hi.is_finite() && w.hi > w.lo && w.lo > 0.0) {
                continue;
            }
            let mut xs = log_space(w.lo, w.hi, spec.points_per_block);
            for &e in &[w.lo, w.hi] {
                xs.push(e);
                for &o in &spec.offsets {
                    xs.push(e - o);
                    xs.push(e + o);
                }
            }
            xs.retain(|x| *x > 0.0);
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            points.extend(xs.into_iter().map(|x| ProbePoint { x, scale: w.index }));
        }
        ProbeGrid { points }
    }

    pub fn from_points(points: Vec<ProbePoint>) -> Self {
        ProbeGrid { points }
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    /// Distinct scale labels in increasing order.
    pub fn scales(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.points.iter().map(|p| p.scale).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn restrict(&self, scales: &[usize]) -> Self {
        ProbeGrid {
            points: self.points.iter().copied().filter(|p| scales.contains(&p.scale)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `n` points from `lo` to `hi` inclusive, evenly spaced in log x.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Maximum of a trace within one scale block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMax {
    pub scale: usize,
    pub value: f64,
    pub arg: f64,
}

/// Per-scale maxima of `values` over `points`, ordered by scale; NaNs are skipped.
pub fn per_scale_max(points: &[ProbePoint], values: &[f64]) -> Vec<ScaleMax> {
    let mut out: Vec<ScaleMax> = Vec::new();
    for (p, &v) in points.iter().zip(values) {
        if v.is_nan() {
            continue;
        }
        match out.iter_mut().find(|m| m.scale == p.scale) {
            Some(m) => {
                if v > m.value {
                    m.value = v;
                    m.arg = p.x;
                }
            }
            None => out.push(ScaleMax { scale: p.scale, value: v, arg: p.x }),
        }
    }
    out.sort_by_key(|m| m.scale);
    out
}
