//! Multidimensional planner. Both endpoints are approximated on a common
//! lattice with thin strips removed; shear pairs slice the lattice layers
//! apart along the first axis and stack the resulting rows into one slab,
//! where the problem becomes one-dimensional in `x₁`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controls::{ControlArc, ControlSchedule, ScheduleMetrics};
use crate::density::{
    default_delta, grid_approximate_box, l1_to_function_1d, l1_to_function_nd, Cell, DensityFunction, ExactRepr,
    GridDensityND, Piece, PiecewiseDensity1D,
};
use crate::error::{invalid, precondition, Error, Result};
use crate::planner1d::{plan_1d_arcs, plan_1d_full, CertMethod, PlanReport};
use crate::transport::{simulate_boxes, simulate_density, transport_particles, ParticleCloud};
use crate::MERGE_TOL;

/// Default particle count for particle certification.
pub const DEFAULT_PARTICLES: usize = 100_000;

/// Seed of the certification particle sampler.
pub const CERT_SEED: u64 = 0x5EED;

/// Largest lattice `plan_nd` refines to.
pub const MAX_LATTICE_CELLS: usize = 1 << 16;

/// Two divergence-free arcs `(a = e_k, w = −e_m, b = −b1)` and
/// `(a = e_k, w = e_m, b = −b2)`, each for `duration/2`. Points with
/// `x_k > max(b1, b2)` move by `−(b2 − b1)·duration/2` along axis `m`;
/// points with `x_k < min(b1, b2)` stay. Axes are zero-based.
pub fn build_parallel_translation(
    dim: usize,
    k: usize,
    m: usize,
    b1: f64,
    b2: f64,
    duration: f64,
) -> Result<ControlSchedule> {
    if k == m {
        return Err(invalid("active and moving axes must differ"));
    }
    if k >= dim || m >= dim {
        return Err(invalid(format!("axes {k}, {m} out of range for dimension {dim}")));
    }
    let mut a = vec![0.0; dim];
    a[k] = 1.0;
    let mut w = vec![0.0; dim];
    w[m] = -1.0;
    let first = ControlArc::new(w.clone(), a.clone(), -b1, 0.5 * duration)?;
    w[m] = 1.0;
    let second = ControlArc::new(w, a, -b2, 0.5 * duration)?;
    ControlSchedule::new(dim, vec![first, second])
}

/// Shear pair with thresholds around `center` (spread `gap/2`) shifting the
/// side `x_k > center` by `shift` along axis `m`.
fn shift_above(dim: usize, k: usize, m: usize, center: f64, gap: f64, shift: f64) -> Result<Vec<ControlArc>> {
    if shift == 0.0 {
        return Ok(Vec::new());
    }
    let q = 0.25 * gap;
    let (b1, b2) = if shift > 0.0 { (center + q, center - q) } else { (center - q, center + q) };
    let duration = 4.0 * shift.abs() / gap;
    Ok(build_parallel_translation(dim, k, m, b1, b2, duration)?.arcs().to_vec())
}

/// Disjoint sorted intervals occupied along `axis`; errors if two cells
/// overlap partially there.
fn layers(density: &GridDensityND, axis: usize) -> Result<Vec<(f64, f64)>> {
    let mut iv: Vec<(f64, f64)> = density.cells().iter().map(|c| (c.lo(axis), c.hi(axis))).collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in iv {
        match out.last() {
            Some(&(l, h)) if (lo - l).abs() <= MERGE_TOL && (hi - h).abs() <= MERGE_TOL => {}
            Some(&(_, h)) if lo < h - MERGE_TOL => {
                return Err(Error::Straddle {
                    cell: out.len(),
                    arc: 0,
                })
            }
            _ => out.push((lo, hi)),
        }
    }
    Ok(out)
}

fn extent(density: &GridDensityND, axis: usize) -> (f64, f64) {
    density
        .cells()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.lo(axis)), hi.max(c.hi(axis))))
}

/// Translates layer `l` of `axis` (counted from the bottom) along the first
/// axis by `l·(W + δ₀)`, `W` the current first-axis extent, so that the
/// layers' projections are `δ₀`-separated. Returns the schedule and the
/// exactly transported density.
pub fn slice_axis(density: &GridDensityND, axis: usize, delta0: f64) -> Result<(ControlSchedule, GridDensityND)> {
    let d = density.dim();
    if axis == 0 || axis >= d {
        return Err(invalid(format!("slicing axis must be in 1..{d}")));
    }
    if !(delta0 > 0.0) {
        return Err(invalid("clearance must be positive"));
    }
    if density.is_empty() {
        return Ok((ControlSchedule::empty(d), density.clone()));
    }
    let ls = layers(density, axis)?;
    let (lo, hi) = extent(density, 0);
    let step = hi - lo + delta0;
    let mut arcs = Vec::new();
    for pair in ls.windows(2) {
        let gap = pair[1].0 - pair[0].1;
        if gap <= 0.0 {
            return Err(precondition("layers along the slicing axis must be separated"));
        }
        arcs.extend(shift_above(d, axis, 0, 0.5 * (pair[0].1 + pair[1].0), gap, step)?);
    }
    let schedule = ControlSchedule::new(d, arcs)?;
    let out = simulate_boxes(density, &schedule)?;
    Ok((schedule, out))
}

/// Lattice geometry shared by both endpoints.
#[derive(Debug, Clone)]
struct Lattice {
    dim: usize,
    origin: Vec<f64>,
    h: f64,
    delta: f64,
    n: usize,
}

impl Lattice {
    fn index(&self, c: &Cell) -> Vec<usize> {
        c.center
            .iter()
            .zip(&self.origin)
            .map(|(x, o)| (((x - o) / self.h).floor().max(0.0) as usize).min(self.n - 1))
            .collect()
    }

    /// Every lattice cell with height `height`, in lexicographic order.
    fn companion(&self, height: f64) -> GridDensityND {
        let half = 0.5 * (self.h - self.delta);
        let total = self.n.pow(self.dim as u32);
        let cells = (0..total)
            .map(|flat| {
                let mut idx = flat;
                let center = self
                    .origin
                    .iter()
                    .map(|o| {
                        let i = idx % self.n;
                        idx /= self.n;
                        o + (i as f64 + 0.5) * self.h
                    })
                    .collect();
                Cell::new(center, vec![half; self.dim], height)
            })
            .collect();
        GridDensityND::from_disjoint_cells(self.dim, cells)
    }

    fn support_volume(&self) -> f64 {
        ((self.h - self.delta) * self.n as f64).powi(self.dim as i32)
    }
}

/// Slicing of axes `d−1, …, 1` followed by stacking every first-axis row
/// into the bottom layer. Depends only on the lattice.
fn slice_and_stack(lat: &Lattice) -> Result<ControlSchedule> {
    let d = lat.dim;
    let mut state = lat.companion(1.0);
    let indices: Vec<Vec<usize>> = state.cells().iter().map(|c| lat.index(c)).collect();
    let mut arcs = Vec::new();
    for axis in (1..d).rev() {
        let (s, next) = slice_axis(&state, axis, lat.delta)?;
        arcs.extend_from_slice(s.arcs());
        state = next;
    }
    // rows: cells sharing the transverse indices, ordered along the first axis
    let mut rows: std::collections::BTreeMap<Vec<usize>, (f64, f64)> = Default::default();
    for (c, idx) in state.cells().iter().zip(&indices) {
        let e = rows.entry(idx[1..].to_vec()).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        e.0 = e.0.min(c.lo(0));
        e.1 = e.1.max(c.hi(0));
    }
    let mut ordered: Vec<(Vec<usize>, (f64, f64))> = rows.into_iter().collect();
    ordered.sort_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
    for axis in 1..d {
        let mut previous = 0.0;
        for (g, (idx, (lo, _))) in ordered.iter().enumerate() {
            let required = -(idx[axis - 1] as f64) * lat.h;
            let center = if g == 0 { lo - lat.delta } else { 0.5 * (ordered[g - 1].1 .1 + lo) };
            let gap = if g == 0 { lat.delta } else { lo - ordered[g - 1].1 .1 };
            arcs.extend(shift_above(d, 0, axis, center, gap, required - previous)?);
            previous = required;
        }
    }
    ControlSchedule::new(d, arcs)
}

/// First-axis profile of a density stacked into one slab.
fn row_profile(density: &GridDensityND) -> Result<PiecewiseDensity1D> {
    let d = density.dim();
    if let Some(first) = density.cells().first() {
        let tol = 1e-6 * (1..d).map(|k| first.hi(k) - first.lo(k)).fold(f64::INFINITY, f64::min);
        let outlier = density.cells().iter().position(|c| {
            (1..d).any(|k| (c.lo(k) - first.lo(k)).abs() > tol || (c.hi(k) - first.hi(k)).abs() > tol)
        });
        if let Some(i) = outlier {
            let c = &density.cells()[i];
            return Err(precondition(format!(
                "stacked density is not a product with a common slab: cell {i} spans {:?}..{:?}, first cell {:?}..{:?}",
                c.lower(),
                c.upper(),
                first.lower(),
                first.upper()
            )));
        }
    }
    let mut pieces: Vec<Piece> = density.cells().iter().map(|c| Piece::new(c.lo(0), c.hi(0), c.height)).collect();
    pieces.sort_by(|a, b| a.left.total_cmp(&b.left));
    PiecewiseDensity1D::new(pieces)
}

fn lift(arcs: &[ControlArc], d: usize) -> Result<Vec<ControlArc>> {
    arcs.iter()
        .map(|a| {
            let mut w = vec![0.0; d];
            let mut av = vec![0.0; d];
            w[0] = a.w[0];
            av[0] = a.a[0];
            ControlArc::new(w, av, a.b, a.duration)
        })
        .collect()
}

fn inverse_arcs(arcs: &[ControlArc]) -> Vec<ControlArc> {
    arcs.iter().rev().map(ControlArc::inverse).collect()
}

fn is_inverse(p: &ControlArc, q: &ControlArc) -> bool {
    p.a == q.a && p.b == q.b && p.duration == q.duration && p.w.iter().zip(&q.w).all(|(x, y)| *x == -*y)
}

/// Multidimensional plan from `rho0` to `rho_t`; delegates to
/// [`plan_1d_full`] in one dimension.
pub fn plan_nd(
    rho0: &DensityFunction,
    rho_t: &DensityFunction,
    eps: f64,
    total_duration: f64,
) -> Result<(ControlSchedule, PlanReport)> {
    if rho0.dim() != rho_t.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho0.dim(),
            got: rho_t.dim(),
        });
    }
    let d = rho0.dim();
    if d == 1 {
        return plan_1d_full(rho0, rho_t, eps, total_duration);
    }
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    if !(total_duration > 0.0) {
        return Err(invalid("total duration must be positive"));
    }
    // lattice on the smallest cube holding both supports
    let origin: Vec<f64> = (0..d).map(|k| rho0.support_lo()[k].min(rho_t.support_lo()[k])).collect();
    let side = (0..d)
        .map(|k| rho0.support_hi()[k].max(rho_t.support_hi()[k]) - origin[k])
        .fold(0.0, f64::max);
    if !(side > 0.0 && side.is_finite()) {
        return Err(precondition("densities have empty support"));
    }
    let r = 0.5 * side;

    // approximation on the shared lattice, refined until both errors are below ε/2
    let mut h = 0.5 * r;
    let mut found = None;
    for _ in 0..12 {
        let n = (side / h - 1e-9).ceil() as usize;
        if n.checked_pow(d as u32).is_none_or(|c| c > MAX_LATTICE_CELLS) {
            break;
        }
        let delta = default_delta(h, eps, d, r);
        let g0 = grid_approximate_box(rho0, &origin, h, n, delta)?;
        let gt = grid_approximate_box(rho_t, &origin, h, n, delta)?;
        let e0 = l1_to_function_nd(&g0, rho0, 8);
        let et = l1_to_function_nd(&gt, rho_t, 8);
        log::debug!("plan_nd: h={h:.4} errors {e0:.3e} {et:.3e}");
        if e0 <= 0.5 * eps && et <= 0.5 * eps {
            found = Some((
                Lattice {
                    dim: d,
                    origin: origin.clone(),
                    h,
                    delta,
                    n,
                },
                g0,
                e0,
                gt,
                et,
            ));
            break;
        }
        h *= 0.5;
    }
    let (lat, g0, e0, gt, et) =
        found.ok_or_else(|| precondition("lattice approximation did not reach ε/2"))?;
    if g0.is_empty() || gt.is_empty() {
        return Err(precondition("a density has zero mass on the lattice"));
    }

    // geometric part shared by both half-plans
    let prefix = slice_and_stack(&lat)?;
    let c = g0.mass().max(gt.mass()) / lat.support_volume();
    let star = row_profile(&simulate_boxes(&lat.companion(c), &prefix)?)?;
    let row0 = row_profile(&simulate_boxes(&g0, &prefix)?)?;
    let row_t = row_profile(&simulate_boxes(&gt, &prefix)?)?;
    let mass = star.mass();
    let gap_mass = 0.01 * eps * mass;
    let right = star.inf_support().unwrap() - 1.0;
    let uniform = PiecewiseDensity1D::block(right - (mass + gap_mass) / c, right, c)?;
    let a_star = lift(&plan_1d_arcs(&uniform, &star)?, d)?;
    let b0 = lift(&plan_1d_arcs(&uniform, &row0)?, d)?;
    let bt = lift(&plan_1d_arcs(&uniform, &row_t)?, d)?;

    // half-plans ρ* → ρ̃ and their reversal composition
    let half = |b: &[ControlArc]| -> Result<ControlSchedule> {
        let mut arcs = prefix.arcs().to_vec();
        arcs.extend(inverse_arcs(&a_star));
        arcs.extend_from_slice(b);
        arcs.extend(inverse_arcs(prefix.arcs()));
        ControlSchedule::new(d, arcs)
    };
    let p0 = half(&b0)?;
    let pt = half(&bt)?;
    let composed = p0.reverse().concatenate(&pt)?.cancel_inverse_pairs(0.0);

    let mut left = prefix.arcs().to_vec();
    left.extend(inverse_arcs(&b0));
    let mut tail = bt.clone();
    tail.extend(inverse_arcs(prefix.arcs()));
    let mut right_arcs = tail.as_slice();
    while let (Some(l), Some(r0)) = (left.last(), right_arcs.first()) {
        if !is_inverse(l, r0) {
            break;
        }
        left.pop();
        right_arcs = &right_arcs[1..];
    }
    let split = left.len();
    let mut arcs = left;
    arcs.extend_from_slice(right_arcs);
    let raw = ControlSchedule::new(d, arcs)?;
    debug_assert_eq!(raw, composed);
    let schedule = raw.equalize_durations(total_duration)?;

    // exact certification where the two half-plans meet
    let v0 = simulate_boxes(&g0, &schedule.slice(0..split))?;
    let vt = simulate_boxes(&gt, &schedule.slice(split..schedule.len()).reverse())?;
    let residual = v0.l1_distance(&vt)?;
    let metrics = schedule.metrics().ok();
    let report = PlanReport {
        dim: d,
        eps,
        tolerance: 3.0 * eps,
        h: lat.h,
        delta: lat.delta,
        mesh_cells: lat.n,
        pieces_source: g0.len(),
        pieces_target: gt.len(),
        approx_error_source: e0,
        approx_error_target: et,
        plan_residual: residual,
        certified_error: e0 + residual + et,
        method: CertMethod::Exact,
        statistical_tolerance: None,
        discontinuities: metrics.as_ref().map_or(0, ScheduleMetrics::discontinuities),
        discontinuity_bound: lat.n.pow(d as u32) * (d + 10),
        mesh_origin: Some(lat.origin.clone()),
        metrics,
    };
    log::info!(
        "plan_nd: d={d} N={} arcs={} certified={:.3e}",
        lat.n,
        schedule.len(),
        report.certified_error
    );
    Ok((schedule, report))
}

/// Re-runs a schedule and measures the terminal L¹ error against `reference`:
/// exactly when the box transport applies, otherwise from `particles`
/// transported samples binned on a mesh, with a statistical tolerance.
pub fn certify(
    rho0: &ExactRepr,
    schedule: &ControlSchedule,
    reference: &DensityFunction,
    particles: usize,
) -> Result<PlanReport> {
    certify_seeded(rho0, schedule, reference, particles, CERT_SEED)
}

/// As [`certify`] with the particle seed given.
pub fn certify_seeded(
    rho0: &ExactRepr,
    schedule: &ControlSchedule,
    reference: &DensityFunction,
    particles: usize,
    seed: u64,
) -> Result<PlanReport> {
    let d = rho0.dim();
    if schedule.dim() != d || reference.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if schedule.dim() != d { schedule.dim() } else { reference.dim() },
        });
    }
    let exact = match rho0 {
        ExactRepr::OneD(p) => Some(l1_to_function_1d(&simulate_density(p, schedule)?, reference)),
        ExactRepr::Grid(g) => match simulate_boxes(g, schedule) {
            Ok(out) => Some(l1_to_function_nd(&out, reference, 8)),
            Err(Error::Straddle { .. } | Error::UnsupportedArc { .. }) => None,
            Err(e) => return Err(e),
        },
    };
    let (error, method, tol) = match exact {
        Some(e) => (e, CertMethod::Exact, None),
        None => {
            let (e, t) = particle_error(rho0, schedule, reference, particles, seed)?;
            (e, CertMethod::Particles, Some(t))
        }
    };
    let metrics = schedule.metrics().ok();
    Ok(PlanReport {
        dim: d,
        eps: 0.0,
        tolerance: f64::INFINITY,
        h: 0.0,
        delta: 0.0,
        mesh_cells: 0,
        pieces_source: rho0.len(),
        pieces_target: 0,
        approx_error_source: 0.0,
        approx_error_target: 0.0,
        plan_residual: error,
        certified_error: error,
        method,
        statistical_tolerance: tol,
        discontinuities: metrics.as_ref().map_or(0, ScheduleMetrics::discontinuities),
        discontinuity_bound: 0,
        mesh_origin: None,
        metrics,
    })
}

/// Binned L¹ distance between transported samples and `reference`, and the
/// tolerance `√(B/M)` bounding the expected sampling error over `B` bins.
fn particle_error(
    rho0: &ExactRepr,
    schedule: &ControlSchedule,
    reference: &DensityFunction,
    m: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let d = rho0.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = rho0.to_function().sample(m, &mut rng)?;
    let cloud = transport_particles(&ParticleCloud::uniform(d, pts)?, schedule)?;
    let total_mass = rho0.mass();
    let lo = reference.support_lo();
    let hi = reference.support_hi();
    let per_axis = ((m as f64 / 100.0).powf(1.0 / d as f64).floor() as usize).clamp(1, 256);
    let bins = per_axis.pow(d as u32);
    let mut counts = vec![0.0; bins];
    let mut outside = 0.0;
    for (p, wgt) in cloud.points().iter().zip(cloud.weights()) {
        let mut flat = 0;
        let mut stride = 1;
        let mut inside = true;
        for k in 0..d {
            let t = (p[k] - lo[k]) / (hi[k] - lo[k]);
            if !(0.0..1.0).contains(&t) {
                inside = false;
                break;
            }
            flat += ((t * per_axis as f64) as usize).min(per_axis - 1) * stride;
            stride *= per_axis;
        }
        if inside {
            counts[flat] += wgt * total_mass;
        } else {
            outside += wgt * total_mass;
        }
    }
    let mut error = outside;
    let widths: Vec<f64> = (0..d).map(|k| (hi[k] - lo[k]) / per_axis as f64).collect();
    for (flat, count) in counts.iter().enumerate() {
        let mut idx = flat;
        let mut blo = vec![0.0; d];
        let mut bhi = vec![0.0; d];
        for k in 0..d {
            let i = idx % per_axis;
            idx /= per_axis;
            blo[k] = lo[k] + i as f64 * widths[k];
            bhi[k] = blo[k] + widths[k];
        }
        error += (count - reference.cell_mass(&blo, &bhi)).abs();
    }
    Ok((error, (bins as f64 / m as f64).sqrt() * total_mass))
}
