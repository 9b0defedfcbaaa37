use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Convolution;
use crate::error::{Error, Result};
use crate::grid::{ProbeGrid, ProbePoint};
use crate::law::Law;
use crate::numeric::Estimate;
use crate::quad::QuadConfig;

/// Law of the n-fold self-convolution as a balanced tree of pairwise
/// convolutions: `F^{*2k} = F^{*k} * F^{*k}`, `F^{*(2k+1)} = F * F^{*2k}`.
pub fn nfold_law(base: Arc<dyn Law>, n: usize, cfg: &QuadConfig) -> Result<Arc<dyn Law>> {
    if n == 0 {
        return Err(Error::InvalidParameter("fold count must be at least 1".into()));
    }
    let mut memo: Vec<Option<Arc<dyn Law>>> = vec![None; n + 1];
    memo[1] = Some(base);
    Ok(build(n, &mut memo, cfg))
}

fn build(n: usize, memo: &mut Vec<Option<Arc<dyn Law>>>, cfg: &QuadConfig) -> Arc<dyn Law> {
    if let Some(l) = &memo[n] {
        return l.clone();
    }
    let law: Arc<dyn Law> = if n.is_multiple_of(2) {
        let half = build(n / 2, memo, cfg);
        Arc::new(Convolution::new(half.clone(), half, *cfg))
    } else {
        let base = build(1, memo, cfg);
        let rest = build(n - 1, memo, cfg);
        Arc::new(Convolution::new(base, rest, *cfg))
    };
    memo[n] = Some(law.clone());
    law
}

/// n-fold convolution evaluated on a probe grid.
#[derive(Clone, Serialize, Deserialize)]
pub struct NumericConv {
    pub base: String,
    pub order: usize,
    pub points: Vec<ProbePoint>,
    pub density: Vec<Estimate>,
    pub tail: Vec<Estimate>,
    pub quad: QuadConfig,
    /// Indices of points whose estimates missed tolerance.
    pub flagged: Vec<usize>,
    #[serde(skip)]
    law: Option<Arc<dyn Law>>,
}

impl std::fmt::Debug for NumericConv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NumericConv")
            .field("base", &self.base)
            .field("order", &self.order)
            .field("points", &self.points.len())
            .field("flagged", &self.flagged.len())
            .finish()
    }
}

/// Density and tail of `F^{*n}` at every probe point, evaluated in parallel.
pub fn nfold_tail(base: Arc<dyn Law>, n: usize, grid: &ProbeGrid, cfg: &QuadConfig) -> Result<NumericConv> {
    if let Some(p) = grid.points.iter().find(|p| !p.x.is_finite()) {
        return Err(Error::InvalidParameter(format!("grid point {} is not finite", p.x)));
    }
    let label = base.label();
    let law = nfold_law(base, n, cfg)?;
    let evals: Vec<(Estimate, Estimate)> = grid.points.par_iter().map(|p| (law.density(p.x), law.tail(p.x))).collect();
    let (density, tail): (Vec<_>, Vec<_>) = evals.into_iter().unzip();
    let flagged = density
        .iter()
        .zip(&tail)
        .enumerate()
        .filter(|(_, (d, t))| !d.reliable || !t.reliable || t.err > cfg.abs_tol.max(10.0 * cfg.rel_tol * t.value))
        .map(|(i, _)| i)
        .collect();
    Ok(NumericConv { base: label, order: n, points: grid.points.clone(), density, tail, quad: *cfg, flagged, law: Some(law) })
}

impl NumericConv {
    /// The underlying law, for evaluation off the grid.
    pub fn law(&self) -> Option<&Arc<dyn Law>> {
        self.law.as_ref()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "log_x", "density", "density_err", "tail", "tail_err", "scale_block_index"])?;
        for ((p, d), t) in self.points.iter().zip(&self.density).zip(&self.tail) {
            wr.write_record([
                format!("{:.17e}", p.x),
                format!("{:.17e}", p.x.ln()),
                format!("{:.17e}", d.value),
                format!("{:.3e}", d.err),
                format!("{:.17e}", t.value),
                format!("{:.3e}", t.err),
                p.scale.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::build_family1;
    use crate::grid::GridSpec;

    #[test]
    fn order_one_is_closed_form() {
        let f = build_family1(0.5, 1.0, 1.0, 3.0, 3).unwrap();
        let law: Arc<dyn Law> = Arc::new(f.clone());
        let grid = ProbeGrid::from_windows(&f.windows()[..3], &GridSpec { points_per_block: 16, offsets: vec![1.0] });
        let nc = nfold_tail(law, 1, &grid, &QuadConfig::default()).unwrap();
        for (p, t) in nc.points.iter().zip(&nc.tail) {
            let e = f.tail_value(p.x);
            assert!((t.value - e).abs() <= 1e-10 * e);
        }
        assert!(nc.flagged.is_empty());
    }

    #[test]
    fn csv_columns() {
        let f = build_family1(0.5, 1.0, 1.0, 3.0, 3).unwrap();
        let grid = ProbeGrid::from_windows(&f.windows()[..1], &GridSpec { points_per_block: 4, offsets: vec![] });
        let nc = nfold_tail(Arc::new(f), 2, &grid, &QuadConfig::default()).unwrap();
        let mut buf = Vec::new();
        nc.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,log_x,density,density_err,tail,tail_err,scale_block_index\n"));
        assert_eq!(s.lines().count(), 5);
    }
}
