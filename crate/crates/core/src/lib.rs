//! Planar up-right vector fields whose integral curves have no asymptotic
//! direction.
//!
//! The pipeline runs from a discrete arrow field on Z² ([`arrows`]), through a
//! piecewise-linear tile potential ([`potential`]) and its mollified gradient
//! glued into a plane field ([`mollify`]), to a Poisson-warped stationary
//! version of that field ([`poisson`]). [`flow`] integrates trajectories of
//! any of these fields and [`stats`] turns the asymptotic statements into
//! finite-horizon estimators. [`cli`] wires everything to a config file.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrows;
pub mod cli;
pub mod config;
pub mod error;
pub mod flow;
pub mod geom;
pub mod gridfile;
pub mod mollify;
pub mod poisson;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use geom::{Site, Vec2};

/// Default collar parameter δ. Binary-exact and inside the admissible range.
pub const DEFAULT_DELTA: f64 = 1.0 / 16.0;
