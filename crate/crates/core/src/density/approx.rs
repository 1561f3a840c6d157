use rayon::prelude::*;

use super::{Cell, DensityFunction, ExactRepr, GridDensityND, Piece, PiecewiseDensity1D};
use crate::error::{invalid, precondition, Result};
use crate::quadrature::{gauss_legendre, midpoint_box};

/// A 1-d Riemann approximation together with the mesh it was built on.
#[derive(Debug, Clone)]
pub struct RiemannApprox {
    pub density: PiecewiseDensity1D,
    pub h: f64,
    pub delta: f64,
    /// Uniform factor applied to the raw cell averages (1 when no scaling was needed).
    pub scale: f64,
    /// Certified bound on `‖ρ − ρʰ‖₁`, available when a Lipschitz constant is known.
    pub error_bound: Option<f64>,
}

/// Strip width `h·ε / (4·d·⌈2R/h⌉)`.
pub fn default_delta(h: f64, eps: f64, dim: usize, r: f64) -> f64 {
    let n = (2.0 * r / h).ceil().max(1.0);
    h * eps / (4.0 * dim as f64 * n)
}

/// `L·h·|support| + strip mass + scaling deficit`, an upper bound on the L¹
/// error of a scaled, strip-removed P0 approximation of an L-Lipschitz density.
pub fn riemann_error_bound(
    lipschitz: f64,
    h: f64,
    support_length: f64,
    strip_mass: f64,
    scaling_deficit: f64,
) -> f64 {
    lipschitz * h * support_length + strip_mass + scaling_deficit
}

fn check_mesh_args(h: f64, delta: f64, eps: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("mesh width must be positive, got {h}")));
    }
    if !(delta > 0.0) || delta >= h {
        return Err(invalid(format!("need 0 < delta < h, got delta={delta}, h={h}")));
    }
    if !(eps > 0.0) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Builds `s·Σ_k ρ̄_k 1_{(x_k, x_k + h − δ)}` on the mesh `x_k = x0 + k·h`,
/// `k < n`, where `ρ̄_k` is the average of `ρ` over `(x_k, x_k + h)` and `s ≤ 1`
/// is the largest factor with `mass + ε/2 ≤ ∫ρ`.
pub(crate) fn riemann_on_mesh(
    rho: &DensityFunction,
    x0: f64,
    h: f64,
    n: usize,
    delta: f64,
    eps: f64,
) -> (PiecewiseDensity1D, f64, f64) {
    let total = rho.total_mass();
    let mut pieces = Vec::with_capacity(n);
    let mut strip_mass = 0.0;
    for k in 0..n {
        let a = x0 + k as f64 * h;
        let b = a + h;
        let avg = rho.cell_mass(&[a], &[b]) / h;
        strip_mass += rho.cell_mass(&[b - delta], &[b]);
        if avg > 0.0 {
            pieces.push(Piece::new(a, b - delta, avg));
        }
    }
    let raw: f64 = pieces.iter().map(Piece::mass).sum();
    let allowed = total - 0.5 * eps;
    let scale = if raw <= 0.0 || raw <= allowed {
        1.0
    } else if allowed <= 0.0 {
        0.0
    } else {
        allowed / raw
    };
    for p in &mut pieces {
        p.height *= scale;
    }
    let density = PiecewiseDensity1D::from_sorted_fragments(pieces);
    (density, scale, strip_mass)
}

/// Riemann (P0) approximation of a 1-d density on a mesh of width at most
/// `h` fitted to the support, with a gap of width `δ` at the right end of
/// every cell and heights scaled so that `mass + ε/2 ≤ ∫ρ`.
///
/// With a Lipschitz constant the mesh is refined until the certified error
/// drops below `ε`.
pub fn riemann_approximate_1d(
    rho: &DensityFunction,
    h: f64,
    delta: f64,
    eps: f64,
) -> Result<PiecewiseDensity1D> {
    riemann_approximate_1d_detailed(rho, h, delta, eps).map(|r| r.density)
}

pub fn riemann_approximate_1d_detailed(
    rho: &DensityFunction,
    h: f64,
    delta: f64,
    eps: f64,
) -> Result<RiemannApprox> {
    check_mesh_args(h, delta, eps)?;
    if rho.dim() != 1 {
        return Err(crate::Error::DimensionMismatch {
            expected: 1,
            got: rho.dim(),
        });
    }
    if rho.has_empty_support() {
        return Ok(RiemannApprox {
            density: PiecewiseDensity1D::empty(),
            h,
            delta,
            scale: 1.0,
            error_bound: Some(0.0),
        });
    }
    let lo = rho.support_lo()[0];
    let len = rho.support_hi()[0] - lo;
    let (mut h, mut delta) = (h, delta);
    for _ in 0..60 {
        let n = ((len / h) - 1e-9).ceil().max(1.0) as usize;
        let h_fit = len / n as f64;
        let delta_fit = delta * h_fit / h;
        let (density, scale, strip_mass) = riemann_on_mesh(rho, lo, h_fit, n, delta_fit, eps);
        let Some(l) = rho.lipschitz else {
            return Ok(RiemannApprox {
                density,
                h: h_fit,
                delta: delta_fit,
                scale,
                error_bound: None,
            });
        };
        let raw = if scale > 0.0 { density.mass() / scale } else { 0.0 };
        let bound = riemann_error_bound(l, h_fit, len, strip_mass, (1.0 - scale) * raw);
        if bound < eps {
            return Ok(RiemannApprox {
                density,
                h: h_fit,
                delta: delta_fit,
                scale,
                error_bound: Some(bound),
            });
        }
        h *= 0.5;
        delta *= 0.25;
    }
    Err(precondition("mesh refinement did not certify the requested accuracy"))
}

/// P0 approximation on the mesh of `[−R, R]^d` with spacing `h`, strips of
/// width `δ` removed around every mesh hyperplane.
pub fn grid_approximate_nd(rho: &DensityFunction, r: f64, h: f64, delta: f64) -> Result<GridDensityND> {
    if !(r > 0.0 && h > 0.0) {
        return Err(invalid("R and h must be positive"));
    }
    let n = (2.0 * r / h - 1e-9).ceil().max(1.0) as usize;
    grid_approximate_box(rho, &vec![-r; rho.dim()], h, n, delta)
}

/// As [`grid_approximate_nd`] on the mesh of `n^d` cells of width `h` with
/// lower corner `origin`.
pub fn grid_approximate_box(
    rho: &DensityFunction,
    origin: &[f64],
    h: f64,
    n: usize,
    delta: f64,
) -> Result<GridDensityND> {
    let d = rho.dim();
    if origin.len() != d {
        return Err(crate::error::Error::DimensionMismatch {
            expected: d,
            got: origin.len(),
        });
    }
    if !(h > 0.0) || n == 0 {
        return Err(invalid("h and n must be positive"));
    }
    if !(delta > 0.0) || delta >= h {
        return Err(invalid(format!("need 0 < delta < h, got delta={delta}, h={h}")));
    }
    let total = n.checked_pow(d as u32).ok_or_else(|| invalid("mesh too fine"))?;
    if total > 50_000_000 {
        return Err(invalid(format!("mesh with {total} cells is too large")));
    }
    let half = 0.5 * (h - delta);
    let cells: Vec<Cell> = (0..total)
        .into_par_iter()
        .filter_map(|flat| {
            let mut idx = flat;
            let mut lo = vec![0.0; d];
            let mut hi = vec![0.0; d];
            for k in 0..d {
                lo[k] = origin[k] + (idx % n) as f64 * h;
                hi[k] = lo[k] + h;
                idx /= n;
            }
            let avg = rho.cell_mass(&lo, &hi) / h.powi(d as i32);
            (avg > 0.0).then(|| {
                let center = lo.iter().map(|v| v + 0.5 * h).collect();
                Cell::new(center, vec![half; d], avg)
            })
        })
        .collect();
    Ok(GridDensityND::from_disjoint_cells(d, cells))
}

/// `‖ρ − p‖₁` for a general 1-d density, by quadrature on the pieces of `p`
/// plus the mass of `ρ` outside them; exact when `ρ` is piecewise constant.
pub fn l1_to_function_1d(p: &PiecewiseDensity1D, rho: &DensityFunction) -> f64 {
    if let Some(ExactRepr::OneD(q)) = rho.exact() {
        return p.l1_distance(q);
    }
    let mut inside_diff = 0.0;
    let mut inside_mass = 0.0;
    for piece in p.pieces() {
        let f = |x: f64| rho.eval(&[x]);
        inside_diff += gauss_legendre(|x| (f(x) - piece.height).abs(), piece.left, piece.right, 16);
        inside_mass += gauss_legendre(f, piece.left, piece.right, 16);
    }
    inside_diff + (rho.total_mass() - inside_mass).max(0.0)
}

/// d-dimensional analogue of [`l1_to_function_1d`] with `per_axis` midpoint
/// samples per cell and axis.
pub fn l1_to_function_nd(g: &GridDensityND, rho: &DensityFunction, per_axis: usize) -> f64 {
    if let Some(ExactRepr::Grid(q)) = rho.exact() {
        return g.l1_distance(q).unwrap_or(f64::INFINITY);
    }
    let (diff, mass): (f64, f64) = g
        .cells()
        .par_iter()
        .map(|c| {
            let (lo, hi) = (c.lower(), c.upper());
            let diff = midpoint_box(|x| (rho.eval(x) - c.height).abs(), &lo, &hi, per_axis);
            let mass = midpoint_box(|x| rho.eval(x), &lo, &hi, per_axis);
            (diff, mass)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    diff + (rho.total_mass() - mass).max(0.0)
}
