//! Numerical toolkit for potential-theoretic hitting estimates of Brownian
//! motion on flat space and on Eguchi-Hanson product spaces.
//!
//! The crate is organized around five building blocks:
//!
//! * [`geometry`]: manifold descriptions, chart metrics, distances, volumes.
//! * [`kernels`]: Martin/Newtonian kernels and two-sided heat kernel bounds.
//! * [`capacity`]: discrete equilibrium measures and capacity estimates.
//! * [`stochastics`]: Euler-Maruyama walkers and hitting-probability
//!   estimators with deterministic seeding.
//! * [`harness`]: the experiment registry, reports, and small statistics
//!   helpers shared by the command line driver.
//!
//! Throughout, Brownian motion is normalized so that its generator is the
//! full Laplace-Beltrami operator (per-coordinate variance `2 dt` in flat
//! charts), and `n` denotes the ambient dimension.

pub mod capacity;
pub mod defaults;
mod error;
pub mod geometry;
pub mod harness;
pub mod kernels;
mod quad;
pub mod stochastics;

pub use error::{Error, Result};

/// Version string echoed into every report payload.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
