//! Pseudospectral simulation of the dynamic `phi^4_2` model on a periodic
//! square and Monte Carlo checks of its quantitative estimates.
//!
//! The solution is split as `u = W1 + v`: `W1` is an Ornstein-Uhlenbeck
//! process restarted at stopping times, its Wick powers enter the equation
//! for the remainder `v`, and `v` is advanced with an exponential Euler step
//! on a dealiased grid. On top of the solver sit the linearised flow and its
//! adjoint, the restart counting process, and estimators for contraction,
//! smoothing, the variance identity and the spectral gap. The
//! [`experiment`] module turns a TOML config into a reproducible run
//! directory.
//!
//! ```no_run
//! use phi4::dynamics::{evolve, DynamicsConfig};
//! use phi4::rng::NoiseStream;
//! use phi4::torus::{Field, TorusGrid};
//!
//! let grid = TorusGrid::new(32, 1.0)?;
//! let cfg = DynamicsConfig::new(grid, 1.0, 1e-3, 0.5);
//! let traj = evolve(&Field::zeros(grid), &cfg, NoiseStream::new(7, 0), None)?;
//! println!("{} steps", traj.steps());
//! # Ok::<(), phi4::error::Error>(())
//! ```
// guards like `!(x > 0.0)` are written that way to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod linearization;
pub mod noise;
pub mod rng;
pub mod stats;
pub mod stopping;
pub mod torus;

pub use error::{Error, Result};
