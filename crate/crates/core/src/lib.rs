//! Numerical laboratory for the N-player Dyson game on the line and the
//! Coulomb game in the plane.
//!
//! The modules cover closed-form value functions and residual checks of the
//! Nash systems ([`nash`]), cost functions and closed- versus open-loop
//! comparisons ([`game`]), singular-drift SDE integration ([`dynamics`]),
//! log-gas samplers ([`ensembles`]), equilibrium measures ([`equilibrium`])
//! and Monte Carlo limit statistics ([`stats`]).
//!
//! Particle indices are zero-based.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod ensembles;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod nash;
pub mod point;
pub mod rng;
pub mod stats;
pub mod transforms;

pub use config::{Config1D, Config2D, GameParams};
pub use equilibrium::{EquilibriumMeasure1D, EquilibriumMeasure2D, PotentialSpec};
pub use error::{Error, Result};
pub use point::Point2;
pub use transforms::{PairSums, PairSums1D, PairSums2D};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
