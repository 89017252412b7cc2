//! Split conformal prediction in discretized function spaces.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: structured cell-centered grids on the unit box, quadrature
//!   weights, the weighted L² norm and resampling.
//! - [`conformal`]: nonconformity scores, split conformal calibration,
//!   coverage metrics and the log-volume score.
//! - [`pde`]: reference data generators (Darcy 1D, Poisson 2D,
//!   pseudo-spectral Navier–Stokes 2D) and random field samplers.
//! - [`surrogate`]: resolution-flexible truncated spectral operators used
//!   as stand-ins for learned neural operators.
//! - [`intervals`]: pointwise bounds from ensembles and quantile triplets.
//! - [`forecast`]: autoregressive ensemble diagnostics (spread, CES, IA, CRPS).
//! - [`transport`]: resolution sweeps and log-linear transport of the
//!   conformal radius.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod error;
pub mod forecast;
pub mod grid;
pub mod intervals;
pub mod pde;
pub mod rng;
pub mod surrogate;
pub mod transport;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{FcpError, Result};
pub use grid::{Field, Grid, GridKind};
