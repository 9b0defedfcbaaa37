//! Random sums `F^{*τ} = Σ pₙ F^{*n}`: tails with certified truncation,
//! Kesten-type envelopes and the ratio bounds for compound laws.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class_lab::RatioTrace;
use crate::conv::{nfold_law, TracePoint};
use crate::counting::{CountingDist, CountingKind};
use crate::error::{Error, Result};
use crate::grid::ProbeGrid;
use crate::law::Law;
use crate::numeric::{log_sum_exp, Estimate};
use crate::quad::QuadConfig;

/// `(cstar − 1 + eps0)^m`.
pub fn kesten_envelope(cstar: f64, eps0: f64, m: u32) -> Result<f64> {
    if !(cstar >= 2.0) || !(eps0 > 0.0) || m < 1 {
        return Err(Error::InvalidParameter(format!(
            "envelope needs cstar >= 2, eps0 > 0, m >= 1 (got {cstar}, {eps0}, {m})"
        )));
    }
    Ok((cstar - 1.0 + eps0).powi(m as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompoundOptions {
    /// Relative size of the certified remainder that stops the order sum.
    pub eps: f64,
    pub eps0: f64,
    /// Highest order evaluated by quadrature.
    pub max_quad_order: usize,
    pub quad: QuadConfig,
}

impl Default for CompoundOptions {
    fn default() -> Self {
        CompoundOptions { eps: 1e-6, eps0: 0.1, max_quad_order: 4, quad: QuadConfig::default() }
    }
}

/// Base law, counting law and the envelope calibrated for them.
#[derive(Debug, Clone)]
pub struct CompoundSpec {
    pub base: Arc<dyn Law>,
    pub counting: CountingDist,
    pub cstar2: Option<f64>,
    pub opts: CompoundOptions,
    /// `K` in `F̄^{*2m} ≤ K·ρ^m·F̄^{*2}`, with `ρ = cstar2 − 1 + eps0`.
    pub k_const: f64,
    orders: Vec<Arc<dyn Law>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundValue {
    pub x: f64,
    /// Exactly evaluated part: quadrature orders plus orders whose tail is 1.
    pub value: Estimate,
    /// Upper bound on the omitted orders.
    pub trunc_bound: f64,
    pub orders_computed: usize,
    /// Last order covered by the envelope before the counting tail takes over.
    pub truncation_m: u64,
}

impl CompoundSpec {
    /// `calibration` supplies the abscissae used to fit `K` from the computed orders.
    pub fn new(
        base: Arc<dyn Law>,
        counting: CountingDist,
        cstar2: Option<f64>,
        opts: CompoundOptions,
        calibration: &[f64],
    ) -> Result<Self> {
        if let Some(c) = cstar2 {
            if !(c >= 2.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("cstar2 = {c} must be finite and at least 2")));
            }
        }
        if opts.max_quad_order < 1 || !(opts.eps > 0.0) || !(opts.eps0 > 0.0) {
            return Err(Error::InvalidParameter("compound options need order >= 1, eps > 0, eps0 > 0".into()));
        }
        let top = counting.support_max().map_or(opts.max_quad_order, |m| (m as usize).min(opts.max_quad_order));
        let beyond = counting.support_max().is_none_or(|m| m as usize > top);
        if beyond && cstar2.is_some() && top < 4 {
            // K is fitted from F^{*4}/F^{*2}; without it the envelope is unanchored
            return Err(Error::InvalidParameter(format!(
                "max_quad_order = {top} too small for the envelope: need at least 4 when the counting law extends further"
            )));
        }
        let mut orders = Vec::with_capacity(top);
        for n in 1..=top {
            orders.push(nfold_law(base.clone(), n, &opts.quad)?);
        }
        let mut k_const = 0.0;
        if let Some(c) = cstar2 {
            let rho = c - 1.0 + opts.eps0;
            k_const = 1.0 / rho;
            if orders.len() >= 2 {
                let two = &orders[1];
                for m in 2..=orders.len() / 2 {
                    let hi = &orders[2 * m - 1];
                    let worst = calibration
                        .par_iter()
                        .filter_map(|&x| {
                            let d = two.tail(x).value;
                            (d > 0.0).then(|| hi.tail(x).value / (rho.powi(m as i32) * d))
                        })
                        .reduce(|| 0.0, f64::max);
                    k_const = f64::max(k_const, worst);
                }
            }
        }
        Ok(CompoundSpec { base, counting, cstar2, opts, k_const, orders })
    }

    pub fn orders_available(&self) -> usize {
        self.orders.len()
    }

    /// `F^{*n}` for `1 ≤ n ≤ orders_available()`.
    pub fn order(&self, n: usize) -> Option<&Arc<dyn Law>> {
        n.checked_sub(1).and_then(|i| self.orders.get(i))
    }

    pub fn rho(&self) -> Option<f64> {
        self.cstar2.map(|c| c - 1.0 + self.opts.eps0)
    }

    /// `Σ_{n≤Q} pₙ F̄^{*n}(x)` plus a certified bound on the remaining orders.
    pub fn compound_tail(&self, x: f64) -> Result<CompoundValue> {
        if x < 0.0 {
            return Ok(CompoundValue { x, value: Estimate::exact(1.0), trunc_bound: 0.0, orders_computed: 0, truncation_m: 0 });
        }
        let q = self.orders.len() as u64;
        let smin = self.base.support_min();
        // F̄^{*n}(x) = 1 once x < n·support_min
        let n_exact = if smin > 0.0 { ((x / smin).floor() as u64).saturating_add(1) } else { u64::MAX };
        let mut value = Estimate::ZERO;
        for n in 1..=q.min(n_exact - 1) {
            let p = self.counting.pmf(n);
            if p > 0.0 {
                value += self.orders[n as usize - 1].tail(x).scale(p);
            }
        }
        if n_exact < u64::MAX {
            // sf comes from a short float sum or 1 − cdf
            value += Estimate::new(self.counting.sf(n_exact - 1), 4.0 * f64::EPSILON);
        }
        value.err += q as f64 * f64::EPSILON * value.value;
        if q >= n_exact - 1 {
            return Ok(CompoundValue { x, value, trunc_bound: 0.0, orders_computed: q as usize, truncation_m: q });
        }
        let gap_hi = (n_exact - 1).min(1 << 52);
        if self.counting.support_max().is_some_and(|m| m <= q) {
            return Ok(CompoundValue { x, value, trunc_bound: 0.0, orders_computed: q as usize, truncation_m: q });
        }
        let rho = self.rho().ok_or_else(|| {
            Error::Precondition("orders beyond the quadrature depth need a cstar2 estimate for the envelope".into())
        })?;
        if q < 2 {
            return Err(Error::Precondition("envelope needs the order-2 convolution".into()));
        }
        let f2 = self.orders[1].tail(x).value;
        let partial = value.value.max(f64::MIN_POSITIVE);
        let mut bound = 0.0;
        let mut m = q;
        let stop = self.counting.support_max().map_or(gap_hi, |s| s.min(gap_hi));
        for n in q + 1..=stop {
            let half = n.div_ceil(2) as i32;
            let env = (self.k_const * rho.powi(half) * f2).min(1.0);
            bound += self.counting.pmf(n) * env;
            m = n;
            let rest = self.counting.sf(n).min(1.0) - self.counting.sf(gap_hi).min(1.0);
            if rest <= self.opts.eps * partial {
                bound += rest.max(0.0);
                break;
            }
        }
        Ok(CompoundValue { x, value, trunc_bound: bound, orders_computed: q as usize, truncation_m: m.max(2) })
    }

    /// Compound tails on a grid, evaluated in parallel.
    pub fn compound_tail_grid(&self, grid: &ProbeGrid) -> Result<Vec<CompoundValue>> {
        grid.points.par_iter().map(|p| self.compound_tail(p.x)).collect()
    }

    /// Density of the computed orders; the error column is infinite when
    /// omitted orders carry mass.
    pub fn partial_density(&self, x: f64) -> Estimate {
        self.orders
            .iter()
            .enumerate()
            .map(|(i, l)| l.density(x).scale(self.counting.pmf(i as u64 + 1)))
            .sum()
    }

    pub fn write_csv<W: Write>(&self, grid: &ProbeGrid, values: &[CompoundValue], w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "x",
            "log_x",
            "density",
            "density_err",
            "tail",
            "tail_err",
            "scale_block_index",
            "trunc_bound",
            "orders_computed",
        ])?;
        for (p, v) in grid.points.iter().zip(values) {
            let d = self.partial_density(p.x);
            let derr = if v.trunc_bound > 0.0 { f64::INFINITY } else { d.err };
            wr.write_record([
                format!("{:.17e}", p.x),
                format!("{:.17e}", p.x.ln()),
                format!("{:.17e}", d.value),
                format!("{derr:.3e}"),
                format!("{:.17e}", v.value.value),
                format!("{:.3e}", v.value.err),
                p.scale.to_string(),
                format!("{:.3e}", v.trunc_bound),
                v.orders_computed.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCheck {
    pub finite: bool,
    pub rho: f64,
    /// Partial sums `Σ_{m≤M} (Σ_{k=(m−1)n+1}^{mn} p_k)·ρ^m`, M = 1, 2, ...
    pub partial: Vec<f64>,
}

/// Convergence of `Σ_m (Σ_{k=(m−1)n+1}^{mn} p_k)(cstar − 1 + eps0)^m`.
pub fn series_condition_check(counting: &CountingDist, cstar_n: f64, eps0: f64, n: u64, terms: usize) -> Result<SeriesCheck> {
    if !(cstar_n >= 2.0) || !(eps0 > 0.0) || n < 1 {
        return Err(Error::InvalidParameter(format!("series check needs cstar >= 2, eps0 > 0, n >= 1 (got {cstar_n}, {eps0}, {n})")));
    }
    let rho = cstar_n - 1.0 + eps0;
    let finite = match &counting.kind {
        CountingKind::Poisson { .. } | CountingKind::Explicit { .. } => true,
        CountingKind::Geometric { p } => n as f64 * p.ln() + rho.ln() < 0.0,
        // polynomial block masses against a geometric weight with ρ > 1
        CountingKind::PowerLaw { .. } => false,
    };
    let mut logs: Vec<f64> = Vec::with_capacity(terms);
    let mut partial = Vec::with_capacity(terms);
    for m in 1..=terms as u64 {
        let lo = (m - 1) * n + 1;
        let hi = m * n;
        logs.push(counting.log_block_mass(lo, hi) + m as f64 * rho.ln());
        partial.push(log_sum_exp(&logs).exp());
    }
    Ok(SeriesCheck { finite, rho, partial })
}

/// The three ratio bounds for compound tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioBounds {
    /// `liminf F̄^{*τ}/F̄ = Eτ`.
    pub liminf_over_f: f64,
    /// Lower bound `Σ_m m(p_{2m} + p_{2m+1})` for `liminf F̄^{*τ}/F̄^{*2}`.
    pub liminf_over_f2: f64,
    /// Upper bound `Σ_m m(p_{2m−1} + p_{2m})(c − 1)^{m−1}` for `limsup F̄^{*τ}/F̄^{*2}`; infinite when it diverges.
    #[serde(with = "crate::numeric::serde_f64")]
    pub limsup_over_f2: f64,
    pub terms: usize,
    /// Closed forms available for Poisson counting.
    pub poisson_closed_form: Option<PoissonClosedForm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonClosedForm {
    pub lower: f64,
    pub upper: f64,
}

/// `μ + (1 − e^{−2μ})/2` and
/// `((μ+1)/(2r))(e^{μ(r−1)} − e^{−μ(r+1)}) + (μ/2)(e^{μ(r−1)} + e^{−μ(r+1)})`, `r = √(c − 1)`.
pub fn poisson_closed_forms(mu: f64, cstar2: f64) -> PoissonClosedForm {
    let r = (cstar2 - 1.0).sqrt();
    let (ep, em) = ((mu * (r - 1.0)).exp(), (-mu * (r + 1.0)).exp());
    PoissonClosedForm {
        lower: mu + 0.5 * (1.0 - (-2.0 * mu).exp()),
        upper: (mu + 1.0) / (2.0 * r) * (ep - em) + 0.5 * mu * (ep + em),
    }
}

pub fn ratio_bounds(counting: &CountingDist, cstar2: f64) -> Result<RatioBounds> {
    if !(cstar2 >= 2.0) {
        return Err(Error::InvalidParameter(format!("cstar2 = {cstar2} must be at least 2")));
    }
    let mean = counting.mean();
    if !mean.is_finite() {
        return Err(Error::Precondition("counting law has infinite mean".into()));
    }
    let c1 = cstar2 - 1.0;
    let upper_finite = match &counting.kind {
        CountingKind::Poisson { .. } | CountingKind::Explicit { .. } => true,
        CountingKind::Geometric { p } => p * p * c1 < 1.0,
        CountingKind::PowerLaw { beta } => c1 <= 1.0 && *beta > 2.0,
    };
    let k_max = match counting.support_max() {
        Some(m) => m,
        None => counting.quantile_sf(1e-18).max(64),
    };
    let m_max = k_max / 2 + 1;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for m in 1..=m_max {
        let lm = (m as f64).ln();
        lower.push(lm + log_sum_exp(&[counting.log_pmf(2 * m), counting.log_pmf(2 * m + 1)]));
        upper.push(lm + log_sum_exp(&[counting.log_pmf(2 * m - 1), counting.log_pmf(2 * m)]) + (m - 1) as f64 * c1.ln());
    }
    let mut liminf_over_f2 = log_sum_exp(&lower).exp();
    let mut limsup_over_f2 = if upper_finite { log_sum_exp(&upper).exp() } else { f64::INFINITY };
    if let CountingKind::PowerLaw { beta } = counting.kind {
        // tails of the sums beyond k_max, by the zeta remainder
        let k = k_max as f64;
        liminf_over_f2 += counting.norm * crate::counting::zeta_tail(beta - 1.0, k_max) / 2.0 * (1.0 + 1.0 / k);
        if upper_finite {
            limsup_over_f2 += counting.norm * crate::counting::zeta_tail(beta - 1.0, k_max) / 2.0 * (1.0 + 1.0 / k);
        }
    }
    let poisson_closed_form = match counting.kind {
        CountingKind::Poisson { mu } => Some(poisson_closed_forms(mu, cstar2)),
        _ => None,
    };
    Ok(RatioBounds { liminf_over_f: mean, liminf_over_f2, limsup_over_f2, terms: m_max as usize, poisson_closed_form })
}

/// Heavy compound-Poisson component: `e^{−μ} Σ μⁿ/n! F̄^{*n}(x)`.
pub fn levy_compound_tail(
    base: Arc<dyn Law>,
    mu: f64,
    x: f64,
    cstar2: Option<f64>,
    opts: &CompoundOptions,
) -> Result<CompoundValue> {
    let spec = CompoundSpec::new(base, CountingDist::poisson(mu)?, cstar2, opts.clone(), &[])?;
    spec.compound_tail(x)
}

/// `Ḡ(ax)/(√x·F̄^{*2}(x))` where `Ḡ` is the tail of the counting law.
pub fn growth_condition_trace(counting: &CountingDist, square: &dyn Law, a: f64, grid: &ProbeGrid) -> RatioTrace {
    let pts = grid
        .points
        .par_iter()
        .filter_map(|p| {
            let d = square.tail(p.x);
            if d.value == 0.0 {
                return None;
            }
            let g = counting.sf((a * p.x).floor() as u64);
            let v = g / (p.x.sqrt() * d.value);
            Some(TracePoint { x: p.x, scale: p.scale, value: v, err: v * d.rel_err() })
        })
        .collect();
    RatioTrace::new("G(ax)/(sqrt(x)*tail2(x))", pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::build_family1;

    fn family() -> Arc<dyn Law> {
        Arc::new(build_family1(0.5, 1.0, 1.0, 3.0, 3).unwrap())
    }

    #[test]
    fn envelope_arithmetic() {
        assert!((kesten_envelope(3.0, 0.1, 2).unwrap() - 4.41).abs() < 1e-12);
        assert!(kesten_envelope(1.5, 0.1, 2).is_err());
        assert!(kesten_envelope(3.0, 0.1, 0).is_err());
    }

    #[test]
    fn degenerate_counting_reproduces_orders() {
        let f = family();
        let one = CompoundSpec::new(f.clone(), CountingDist::degenerate(1), None, CompoundOptions::default(), &[]).unwrap();
        for x in [2.0, 4.5, 40.0, 1000.0] {
            let v = one.compound_tail(x).unwrap();
            assert_eq!(v.value.value, f.tail(x).value);
            assert_eq!(v.trunc_bound, 0.0);
        }
        let two = CompoundSpec::new(f.clone(), CountingDist::degenerate(2), None, CompoundOptions::default(), &[]).unwrap();
        let h = two.order(2).unwrap();
        for x in [5.0, 9.0, 60.0] {
            assert_eq!(two.compound_tail(x).unwrap().value.value, h.tail(x).value);
        }
    }

    #[test]
    fn below_support_is_exact() {
        let v = levy_compound_tail(family(), 1.0, 2.5, None, &CompoundOptions::default()).unwrap();
        assert!((v.value.value - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert_eq!(v.trunc_bound, 0.0);
    }

    #[test]
    fn infinite_counting_needs_envelope() {
        let spec = CompoundSpec::new(family(), CountingDist::poisson(1.0).unwrap(), None, CompoundOptions::default(), &[]).unwrap();
        assert!(matches!(spec.compound_tail(100.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn series_conditions() {
        let pois = CountingDist::poisson(2.0).unwrap();
        assert!(series_condition_check(&pois, 3.0, 0.1, 2, 30).unwrap().finite);
        let g = CountingDist::geometric(0.5).unwrap();
        assert!(series_condition_check(&g, 3.0, 0.1, 2, 30).unwrap().finite);
        let g = CountingDist::geometric(0.9).unwrap();
        let s = series_condition_check(&g, 3.0, 0.1, 1, 30).unwrap();
        assert!(!s.finite);
        assert!(s.partial.windows(2).all(|w| w[1] > w[0]));
        let pl = CountingDist::power_law(3.0).unwrap();
        assert!(!series_condition_check(&pl, 2.01, 0.1, 2, 30).unwrap().finite);
    }

    #[test]
    fn bounds_for_fixed_count() {
        let b = ratio_bounds(&CountingDist::degenerate(2), 3.0).unwrap();
        assert_eq!(b.liminf_over_f, 2.0);
        assert!((b.liminf_over_f2 - 1.0).abs() < 1e-15);
        assert!((b.limsup_over_f2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn poisson_series_against_closed_form() {
        // the upper series doubled matches the closed form; the lower closed form
        // equals 2·E⌈τ/2⌉ rather than 2·E⌊τ/2⌋
        let b = ratio_bounds(&CountingDist::poisson(1.0).unwrap(), 3.0).unwrap();
        let r = b.poisson_closed_form.unwrap();
        assert!((2.0 * b.limsup_over_f2 - r.upper).abs() < 1e-12);
        let ceil_half: f64 = (0..60u64).map(|k| k.div_ceil(2) as f64 * CountingDist::poisson(1.0).unwrap().pmf(k)).sum();
        assert!((2.0 * ceil_half - r.lower).abs() < 1e-12);
    }
}
