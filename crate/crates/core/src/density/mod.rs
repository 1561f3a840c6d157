//! Piecewise-constant probability densities in one and several dimensions,
//! plus the general [`DensityFunction`] they approximate.

mod approx;
mod function;
mod grid;
mod piecewise;

pub use approx::{
    default_delta, grid_approximate_box, grid_approximate_nd, l1_to_function_1d, l1_to_function_nd,
    riemann_approximate_1d, riemann_approximate_1d_detailed, riemann_error_bound, RiemannApprox,
};
pub(crate) use approx::riemann_on_mesh;
pub use function::{DensityFunction, ExactRepr};
pub use grid::{Cell, GridDensityND};
pub use piecewise::{Piece, PiecewiseDensity1D};

/// `η log η` with the `0 log 0 = 0` convention.
pub(crate) fn xlogx(h: f64) -> f64 {
    if h > 0.0 {
        h * h.ln()
    } else {
        0.0
    }
}
