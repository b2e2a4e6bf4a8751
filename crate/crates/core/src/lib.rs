//! Simulation and coupling toolkit for a degenerate Lévy-driven system
//! `dX = [AX + F(X)] dt + dZ` on `R^2` with symmetric alpha-stable noise in
//! the first coordinate.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod error;
pub mod io;
pub mod mixing;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod sde;
pub mod stable_noise;
pub mod stats;
pub mod stopping;

pub use error::{LabError, Result};
