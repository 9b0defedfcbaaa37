//! Property suites over the public API.

mod class_props;
mod compound_props;
mod conv_props;
mod dist_props;
mod mc_props;

use crate::dist::{build_family1, PiecewiseDist};

/// Composite Simpson rule, used as an oracle independent of the library quadrature.
pub(crate) fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

pub(crate) fn reference() -> PiecewiseDist {
    build_family1(0.5, 1.0, 1.0, 3.0, 3).unwrap()
}
