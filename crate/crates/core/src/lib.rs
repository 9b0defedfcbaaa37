//! Heavy-tailed spike families, their numeric convolutions and class diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod class_lab;
pub mod compound;
pub mod controls;
pub mod conv;
pub mod counting;
pub mod dist;
pub mod error;
pub mod grid;
pub mod law;
pub mod mc;
pub mod numeric;
pub mod quad;
pub mod scale;

pub use error::{Error, Result};
pub use grid::{GridSpec, ProbeGrid, ProbePoint, ScaleWindow};
pub use law::{Atom, Interval, Law};
pub use numeric::Estimate;
pub use quad::QuadConfig;

#[cfg(test)]
mod tests;
