//! Globally adaptive Gauss–Legendre quadrature over pre-split pieces.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::numeric::{gauss_legendre, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { abs_tol: 1e-12, rel_tol: 1e-9, max_subdivisions: 1 << 16 }
    }
}

impl QuadConfig {
    pub fn tighter(&self, factor: f64) -> Self {
        QuadConfig { abs_tol: self.abs_tol * factor, rel_tol: self.rel_tol * factor, ..*self }
    }
}

const ORDER: usize = 10;

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

/// How a piece is parametrized before the fixed rule is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Map {
    Identity,
    /// `y = a + (b − a)·s^k` for s in [0, 1]; removes a `(y − a)^{1/k − 1}` singularity.
    Left { k: f64 },
    /// `y = b − (b − a)·s^k`.
    Right { k: f64 },
}

/// An integration piece `[a, b]` with its parametrization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub map: Map,
}

impl Piece {
    pub fn plain(a: f64, b: f64) -> Self {
        Piece { a, b, map: Map::Identity }
    }

    /// Piece with optional singular exponents at either end; both ends
    /// singular splits at the midpoint.
    pub fn with_singular(a: f64, b: f64, left: Option<f64>, right: Option<f64>) -> Vec<Piece> {
        match (left, right) {
            (None, None) => vec![Piece::plain(a, b)],
            (Some(e), None) => vec![Piece { a, b, map: Map::Left { k: 1.0 / e } }],
            (None, Some(e)) => vec![Piece { a, b, map: Map::Right { k: 1.0 / e } }],
            (Some(l), Some(r)) => {
                let m = 0.5 * (a + b);
                vec![Piece { a, b: m, map: Map::Left { k: 1.0 / l } }, Piece { a: m, b, map: Map::Right { k: 1.0 / r } }]
            }
        }
    }

    fn domain(&self) -> (f64, f64) {
        match self.map {
            Map::Identity => (self.a, self.b),
            _ => (0.0, 1.0),
        }
    }

    #[inline]
    fn eval<F: Fn(f64) -> Estimate>(&self, f: &F, s: f64) -> (f64, f64, bool) {
        let (y, jac) = match self.map {
            Map::Identity => (s, 1.0),
            Map::Left { k } => {
                let w = self.b - self.a;
                (self.a + w * s.powf(k), w * k * s.powf(k - 1.0))
            }
            Map::Right { k } => {
                let w = self.b - self.a;
                (self.b - w * s.powf(k), w * k * s.powf(k - 1.0))
            }
        };
        let e = f(y);
        (e.value * jac, e.err * jac.abs(), e.reliable)
    }
}

#[derive(Debug, Clone, Copy)]
struct Rule {
    value: f64,
    inner: f64,
    reliable: bool,
}

fn apply<F: Fn(f64) -> Estimate>(f: &F, piece: &Piece, lo: f64, hi: f64) -> Rule {
    let (x, w) = rule();
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut value = 0.0;
    let mut inner = 0.0;
    let mut reliable = true;
    for i in 0..ORDER {
        let (v, e, r) = piece.eval(f, c + h * x[i]);
        value += w[i] * v;
        inner += w[i] * e;
        reliable &= r;
    }
    Rule { value: value * h, inner: inner * h, reliable }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    piece: usize,
    lo: f64,
    hi: f64,
    left: Rule,
    right: Rule,
    err: f64,
}

impl Cell {
    fn new<F: Fn(f64) -> Estimate>(f: &F, pieces: &[Piece], piece: usize, lo: f64, hi: f64, whole: Rule) -> Cell {
        let m = 0.5 * (lo + hi);
        let left = apply(f, &pieces[piece], lo, m);
        let right = apply(f, &pieces[piece], m, hi);
        let err = (left.value + right.value - whole.value).abs();
        Cell { piece, lo, hi, left, right, err }
    }

    fn value(&self) -> f64 {
        self.left.value + self.right.value
    }

    fn splittable(&self) -> bool {
        let m = 0.5 * (self.lo + self.hi);
        let scale = self.lo.abs().max(self.hi.abs()).max(f64::MIN_POSITIVE);
        m > self.lo && m < self.hi && (self.hi - self.lo) > 64.0 * f64::EPSILON * scale
    }
}

impl PartialEq for Cell {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cell {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Integrate `f` over the given pieces.
///
/// The returned error is the discretization estimate plus the propagated
/// error of the integrand values; `reliable` is false if the budget ran out.
pub fn integrate_pieces<F: Fn(f64) -> Estimate>(f: F, pieces: &[Piece], cfg: &QuadConfig) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Cell> = Vec::new();
    for (i, p) in pieces.iter().enumerate() {
        if !(p.b > p.a) {
            continue;
        }
        let (lo, hi) = p.domain();
        let whole = apply(&f, p, lo, hi);
        heap.push(Cell::new(&f, pieces, i, lo, hi, whole));
    }
    let mut total: f64 = heap.iter().map(Cell::value).sum();
    let mut err_sum: f64 = heap.iter().map(|c| c.err).sum();
    let mut splits = 0usize;
    let mut exhausted = false;
    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if err_sum <= tol {
            break;
        }
        let Some(cell) = heap.pop() else { break };
        if !cell.splittable() {
            frozen.push(cell);
            continue;
        }
        if splits >= cfg.max_subdivisions {
            heap.push(cell);
            exhausted = true;
            break;
        }
        splits += 1;
        let m = 0.5 * (cell.lo + cell.hi);
        let a = Cell::new(&f, pieces, cell.piece, cell.lo, m, cell.left);
        let b = Cell::new(&f, pieces, cell.piece, m, cell.hi, cell.right);
        total += a.value() + b.value() - cell.value();
        err_sum += a.err + b.err - cell.err;
        heap.push(a);
        heap.push(b);
    }
    let cells: Vec<&Cell> = heap.iter().chain(frozen.iter()).collect();
    let mut vals: Vec<f64> = cells.iter().map(|c| c.value()).collect();
    vals.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let value: f64 = vals.iter().sum();
    let disc: f64 = cells.iter().map(|c| c.err).sum();
    let inner: f64 = cells.iter().map(|c| c.left.inner + c.right.inner).sum();
    let inner_ok = cells.iter().all(|c| c.left.reliable && c.right.reliable);
    let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
    Estimate { value, err: disc + inner, reliable: inner_ok && !exhausted && disc <= tol.max(1e3 * f64::EPSILON * value.abs()) }
}

/// Integrate `f` over `[points[0], points[last]]` split at every listed point.
pub fn integrate<F: Fn(f64) -> Estimate>(f: F, points: &[f64], cfg: &QuadConfig) -> Estimate {
    let pieces: Vec<Piece> = points.windows(2).map(|w| Piece::plain(w[0], w[1])).collect();
    integrate_pieces(f, &pieces, cfg)
}

/// Convenience wrapper for plain real integrands.
pub fn integrate_real<F: Fn(f64) -> f64>(f: F, points: &[f64], cfg: &QuadConfig) -> Estimate {
    integrate(|x| Estimate::exact(f(x)), points, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_integrals() {
        let cfg = QuadConfig::default();
        let e = integrate_real(|x| x.sin(), &[0.0, std::f64::consts::PI], &cfg);
        assert!((e.value - 2.0).abs() < 1e-13);
        assert!(e.reliable);
        let e = integrate_real(|x| (-x).exp(), &[0.0, 1.0, 50.0], &cfg);
        assert!((e.value - (1.0 - (-50f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn kink_is_resolved_by_split() {
        let cfg = QuadConfig::default();
        let e = integrate_real(|x| (x - 0.3).abs(), &[0.0, 0.3, 1.0], &cfg);
        assert!((e.value - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn kink_without_split_converges_adaptively() {
        let cfg = QuadConfig::default();
        let e = integrate_real(|x| (x - 0.3).abs(), &[0.0, 1.0], &cfg);
        assert!((e.value - 0.29).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn endpoint_singularity_with_map() {
        let cfg = QuadConfig::default();
        // ∫₀¹ x^{-1/2} dx = 2
        let pieces = Piece::with_singular(0.0, 1.0, Some(0.5), None);
        let e = integrate_pieces(|x| Estimate::exact(x.powf(-0.5)), &pieces, &cfg);
        assert!((e.value - 2.0).abs() < 1e-12, "{e:?}");
        // ∫₀¹ x^{-1/2}(1-x)^{-1/2} dx = π
        let pieces = Piece::with_singular(0.0, 1.0, Some(0.5), Some(0.5));
        let e = integrate_pieces(|x| Estimate::exact((x * (1.0 - x)).powf(-0.5)), &pieces, &cfg);
        assert!((e.value - std::f64::consts::PI).abs() < 1e-11, "{e:?}");
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let cfg = QuadConfig { max_subdivisions: 3, ..Default::default() };
        let e = integrate_real(|x| (50.0 * x).sin().abs(), &[0.0, 1.0], &cfg);
        assert!(!e.reliable);
    }

    #[test]
    fn inner_errors_propagate() {
        let cfg = QuadConfig::default();
        let e = integrate(|_| Estimate::new(1.0, 1e-6), &[0.0, 2.0], &cfg);
        assert!((e.value - 2.0).abs() < 1e-14);
        assert!((e.err - 2e-6).abs() < 1e-12);
    }
}
