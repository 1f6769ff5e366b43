//! Core-periphery economy on a circle with transport costs in both the
//! manufacturing and the (differentiated) agricultural sector.
//!
//! * [`spectral`]: closed-form growth rates of Fourier perturbations of the
//!   uniform state, critical transport costs and stability maps.
//! * [`equilibrium`]: instantaneous market equilibrium for a given
//!   distribution of manufacturing workers.
//! * [`dynamics`]: migration dynamics, stationary states and spike counts.
//! * [`experiments`]: seeded parameter sweeps over many simulations.
//! * `cli` (feature `cli`, on by default): the `racetrack` command line.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "cli")]
pub mod cli;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod params;
pub mod spectral;

pub use error::{Error, ErrorKind, Result};
pub use geometry::{circle_distance, Grid, KernelMatrix, KernelOperator, Quadrature};
pub use params::ModelParams;
