//! Constructive control of the neural transport equation
//!
//! ```text
//! ∂t ρ + div( w(t) σ(⟨a(t), x⟩ + b(t)) ρ ) = 0,    σ(z) = max(z, 0)
//! ```
//!
//! with piecewise-constant controls `(w, a, b)`. The crate provides exact
//! push-forward of piecewise-constant densities, planners that synthesize
//! control schedules in one and several dimensions, sample-driven
//! certificates, and closed-form complexity bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod controls;
pub mod density;
pub mod error;
pub mod families;
pub mod io;
pub mod planner1d;
pub mod plannernd;
pub mod quadrature;
pub mod stats;
pub mod transport;

pub use controls::{ControlArc, ControlSchedule, ScheduleMetrics};
pub use density::{Cell, DensityFunction, ExactRepr, GridDensityND, Piece, PiecewiseDensity1D};
pub use error::{Error, Result};
pub use transport::ParticleCloud;

/// Absolute tolerance used to merge coincident breakpoints and equal heights.
pub const MERGE_TOL: f64 = 1e-12;

/// Fragments shorter than this are dropped when splitting at an activation point.
pub const FRAGMENT_TOL: f64 = 1e-14;
