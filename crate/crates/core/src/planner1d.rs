//! One-dimensional controllers: dilation and translation arc builders, the
//! component-by-component planner between piecewise-constant densities, the
//! end-to-end planner for general densities, and the explicit exact
//! controller for smooth targets on the unit interval.

use serde::{Deserialize, Serialize};

use crate::controls::{ControlArc, ControlSchedule, ScheduleMetrics};
use crate::density::{
    l1_to_function_1d, riemann_on_mesh, DensityFunction, ExactRepr, Piece, PiecewiseDensity1D,
};
use crate::error::{invalid, precondition, Error, Result};
use crate::transport::simulate_density;

const MASS_TOL: f64 = 1e-12;

/// Single arc `a = 1, b = −x1` stretching `(x1, x2)` onto `(x1, y2)`.
pub fn build_dilation(x1: f64, x2: f64, y2: f64, duration: f64) -> Result<ControlSchedule> {
    if !(x2 > x1) {
        return Err(invalid("dilation needs x2 > x1"));
    }
    if !(y2 > x1) {
        return Err(invalid("dilation needs y2 > x1"));
    }
    let w = ((y2 - x1) / (x2 - x1)).ln() / duration;
    ControlSchedule::new(1, vec![ControlArc::scalar(w, 1.0, -x1, duration)?])
}

/// Two arcs translating all mass right of the midpoint of
/// `(protected_sup, blocks_left_edge)` by `kappa`; mass left of it is untouched.
pub fn build_translation(
    blocks_left_edge: f64,
    protected_sup: f64,
    kappa: f64,
    duration: f64,
) -> Result<ControlSchedule> {
    if !(protected_sup < blocks_left_edge) {
        return Err(invalid("translation needs protected_sup < blocks_left_edge"));
    }
    build_translation_with_pivot(blocks_left_edge, 0.5 * (protected_sup + blocks_left_edge), kappa, duration)
}

/// As [`build_translation`] with the activation threshold `b1 = pivot` given.
pub fn build_translation_with_pivot(
    blocks_left_edge: f64,
    pivot: f64,
    kappa: f64,
    duration: f64,
) -> Result<ControlSchedule> {
    if !(duration > 0.0) {
        return Err(invalid("duration must be positive"));
    }
    let r = blocks_left_edge - pivot;
    if !(r > 0.0) {
        return Err(invalid("pivot must lie left of the blocks"));
    }
    if !(kappa > -r) {
        return Err(invalid(format!("kappa = {kappa} outside the admissible range (−{r}, ∞)")));
    }
    let half = 0.5 * duration;
    let w1 = (kappa / r).ln_1p() / half;
    ControlSchedule::new(
        1,
        vec![
            ControlArc::scalar(w1, 1.0, -pivot, half)?,
            ControlArc::scalar(-w1, 1.0, -(blocks_left_edge + kappa), half)?,
        ],
    )
}

/// Source segments of a uniform block matched index by index to the pieces
/// of a target, with equal masses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPartition {
    pub source_pieces: Vec<Piece>,
    pub target_pieces: Vec<Piece>,
    pub gap: f64,
}

/// Splits the uniform block `rho0_uniform` into segments carrying the
/// target masses, right-aligned and separated by equal gaps of total mass `tau`.
pub fn build_matched_partition(
    rho0_uniform: &PiecewiseDensity1D,
    rho_t: &PiecewiseDensity1D,
    tau: f64,
) -> Result<MatchedPartition> {
    let [block] = rho0_uniform.pieces() else {
        return Err(precondition("source must be a single uniform block"));
    };
    if rho_t.is_empty() {
        return Err(precondition("target is empty"));
    }
    let k = rho_t.len();
    if rho_t.support_components() != k {
        return Err(precondition("target pieces must be pairwise separated"));
    }
    if block.right >= rho_t.inf_support().unwrap_or(f64::INFINITY) {
        return Err(precondition("sup of the source support must lie left of the target support"));
    }
    if tau < 0.0 || (k > 1 && tau <= 0.0) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    let expected = rho0_uniform.mass() - rho_t.mass();
    if (tau - expected).abs() > 1e-9 * rho0_uniform.mass().max(1.0) {
        return Err(precondition(format!(
            "tau = {tau} does not match the mass difference {expected}"
        )));
    }
    let u = block.height;
    let gap = if k > 1 { tau / u / (k - 1) as f64 } else { 0.0 };
    let mut source = Vec::with_capacity(k);
    let mut right = block.right;
    for p in rho_t.pieces().iter().rev() {
        let left = right - p.mass() / u;
        source.push(Piece::new(left, right, u));
        right = left - gap;
    }
    source.reverse();
    if source[0].left < block.left - 1e-9 * (1.0 + block.left.abs()) {
        return Err(precondition("source block cannot carry the target mass"));
    }
    source[0].left = source[0].left.max(block.left);
    for (s, t) in source.iter().zip(rho_t.pieces()) {
        if (s.mass() - t.mass()).abs() > 1e-9 * t.mass().max(1.0) {
            return Err(precondition("per-index masses do not match"));
        }
    }
    Ok(MatchedPartition {
        source_pieces: source,
        target_pieces: rho_t.pieces().to_vec(),
        gap,
    })
}

impl MatchedPartition {
    /// The gapped source `Σ u 1_{S_k}` carried exactly onto the target.
    pub fn gapped_source(&self) -> PiecewiseDensity1D {
        PiecewiseDensity1D::from_sorted_fragments(self.source_pieces.clone())
    }
}

struct ArcList(Vec<ControlArc>);

impl ArcList {
    fn extend(&mut self, s: ControlSchedule) {
        self.0.extend(s.arcs().iter().filter(|a| !a.is_identity()).cloned());
    }
}

/// Schedule carrying the gapped uniform source of the matched partition
/// exactly onto `rho_t` (pieces separated, right of the source block).
///
/// Components are handled from the rightmost target piece leftwards: the
/// source zone is dilated about a fixed anchor to the piece's height, the
/// segment is translated onto its target, and the previously placed pieces
/// are translated back.
pub fn plan_1d(
    rho0: &PiecewiseDensity1D,
    rho_t: &PiecewiseDensity1D,
    total_duration: f64,
) -> Result<ControlSchedule> {
    if !(total_duration > 0.0) {
        return Err(invalid("total duration must be positive"));
    }
    let tau = rho0.mass() - rho_t.mass();
    let part = build_matched_partition(rho0, rho_t, tau)?;
    let arcs = plan_from_partition(&part)?;
    if arcs.is_empty() {
        return Ok(ControlSchedule::empty(1));
    }
    ControlSchedule::new(1, arcs)?.rescale_time(total_duration)
}

/// Arcs of [`plan_1d`] with unit durations.
pub(crate) fn plan_1d_arcs(rho0: &PiecewiseDensity1D, rho_t: &PiecewiseDensity1D) -> Result<Vec<ControlArc>> {
    let tau = rho0.mass() - rho_t.mass();
    plan_from_partition(&build_matched_partition(rho0, rho_t, tau)?)
}

fn plan_from_partition(part: &MatchedPartition) -> Result<Vec<ControlArc>> {
    let src = &part.source_pieces;
    let tgt = &part.target_pieces;
    let k = src.len();
    let u = src[0].height;
    let src_right = src[k - 1].right;
    let anchor = 0.5 * (src_right + tgt[0].left);
    let mut arcs = ArcList(Vec::with_capacity(5 * k));
    let mut factor = 1.0;
    let image = |x: f64, f: f64| anchor - (anchor - x) * f;
    for j in (0..k).rev() {
        // dilate the source zone about the anchor so segment j gets its target height
        let f_j = u / tgt[j].height;
        let ratio = f_j / factor;
        if (ratio - 1.0).abs() > MASS_TOL {
            arcs.extend(ControlSchedule::new(
                1,
                vec![ControlArc::scalar(-ratio.ln(), -1.0, anchor, 1.0)?],
            )?);
        }
        factor = f_j;
        let left = image(src[j].left, factor);
        let protected = if j == 0 {
            left - 1.0
        } else {
            image(src[j - 1].right, factor)
        };
        let kappa = tgt[j].left - left;
        arcs.extend(build_translation(left, protected, kappa, 2.0)?);
        if j + 1 < k {
            let pivot = 0.5 * (tgt[j].right + tgt[j + 1].left);
            arcs.extend(build_translation_with_pivot(tgt[j + 1].left + kappa, pivot, -kappa, 2.0)?);
        }
    }
    Ok(arcs.0)
}

/// How a plan's terminal error was certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertMethod {
    Exact,
    Particles,
}

/// Certificate of an end-to-end plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub dim: usize,
    pub eps: f64,
    /// Error level the plan promises: `2ε` in one dimension, `3ε` otherwise.
    pub tolerance: f64,
    pub h: f64,
    pub delta: f64,
    /// `⌈2R/h⌉`, the number of mesh cells per axis covering `[−R, R]`.
    pub mesh_cells: usize,
    pub pieces_source: usize,
    pub pieces_target: usize,
    pub approx_error_source: f64,
    pub approx_error_target: f64,
    /// Exact L¹ mismatch of the two approximants where the half-plans meet.
    pub plan_residual: f64,
    /// Upper bound on `‖ρ(T) − ρ_T‖₁` (an estimate when `method` is particles).
    pub certified_error: f64,
    pub method: CertMethod,
    pub statistical_tolerance: Option<f64>,
    pub discontinuities: usize,
    pub discontinuity_bound: usize,
    /// Lower corner of the shared lattice, for multidimensional plans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_origin: Option<Vec<f64>>,
    pub metrics: Option<ScheduleMetrics>,
}

impl PlanReport {
    pub fn within_tolerance(&self) -> bool {
        self.certified_error <= self.tolerance
    }
}

/// Plans between two general 1-d densities through an intermediate
/// uniform block left of both supports: the reversed plan onto the source
/// approximant, then the plan onto the target approximant.
pub fn plan_1d_full(
    rho0: &DensityFunction,
    rho_t: &DensityFunction,
    eps: f64,
    total_duration: f64,
) -> Result<(ControlSchedule, PlanReport)> {
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    if !(total_duration > 0.0) {
        return Err(invalid("total duration must be positive"));
    }
    for f in [rho0, rho_t] {
        if f.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: f.dim(),
            });
        }
        if f.has_empty_support() || f.total_mass() <= 0.0 {
            return Err(precondition("densities must have positive mass"));
        }
    }
    let r = rho0.support_radius().max(rho_t.support_radius()).max(f64::MIN_POSITIVE);
    let eps_half = 0.5 * eps;
    let mut h = 2.0 * r / 8.0;
    let mut chosen = None;
    for _ in 0..24 {
        let n = (2.0 * r / h).ceil() as usize;
        let delta = crate::density::default_delta(h, eps, 1, r);
        let (a0, e0) = approximate(rho0, h, delta, eps_half);
        let (at, et) = approximate(rho_t, h, delta, eps_half);
        if e0 <= 0.45 * eps && et <= 0.45 * eps && !a0.is_empty() && !at.is_empty() {
            chosen = Some((h, delta, n, a0, e0, at, et));
            break;
        }
        h *= 0.5;
    }
    let (h, delta, n, a0, e0, at, et) =
        chosen.ok_or_else(|| precondition("approximation did not reach the requested accuracy"))?;

    let mass = rho0.total_mass().max(rho_t.total_mass());
    let right = a0.inf_support().unwrap().min(at.inf_support().unwrap()) - 1.0;
    let uniform = PiecewiseDensity1D::block(right - mass, right, 1.0)?;
    let p0 = plan_1d(&uniform, &a0, 1.0)?;
    let pt = plan_1d(&uniform, &at, 1.0)?;
    let mut schedule = p0.reverse().concatenate(&pt)?.cancel_inverse_pairs(crate::MERGE_TOL);
    if !schedule.is_empty() {
        schedule = schedule.rescale_time(total_duration)?;
    }

    let sim_h = simulate_density(&a0, &schedule)?;
    let plan_residual = sim_h.l1_distance(&at);
    let certified_error = match rho0.exact() {
        Some(ExactRepr::OneD(p)) => l1_to_function_1d(&simulate_density(p, &schedule)?, rho_t),
        _ => e0 + l1_to_function_1d(&sim_h, rho_t),
    };
    let metrics = schedule.metrics().ok();
    let report = PlanReport {
        dim: 1,
        eps,
        tolerance: 2.0 * eps,
        h,
        delta,
        mesh_cells: n,
        pieces_source: a0.len(),
        pieces_target: at.len(),
        approx_error_source: e0,
        approx_error_target: et,
        plan_residual,
        certified_error,
        method: CertMethod::Exact,
        statistical_tolerance: None,
        discontinuities: metrics.as_ref().map_or(0, ScheduleMetrics::discontinuities),
        discontinuity_bound: 10 * n,
        mesh_origin: None,
        metrics,
    };
    log::info!(
        "plan_1d_full: h={h:.3e} K0={} KT={} arcs={} certified={:.3e}",
        report.pieces_source,
        report.pieces_target,
        schedule.len(),
        certified_error
    );
    Ok((schedule, report))
}

fn approximate(rho: &DensityFunction, h: f64, delta: f64, eps: f64) -> (PiecewiseDensity1D, f64) {
    if let Some(ExactRepr::OneD(q)) = rho.exact() {
        let p = separated(q, delta, eps);
        let err = p.l1_distance(q);
        return (p, err);
    }
    let lo = rho.support_lo()[0];
    let len = rho.support_hi()[0] - lo;
    let n = ((len / h) - 1e-9).ceil().max(1.0) as usize;
    let (p, _, _) = riemann_on_mesh(rho, lo, h, n, delta, eps);
    let err = l1_to_function_1d(&p, rho);
    (p, err)
}

/// A piecewise density on its own breakpoints: touching pieces are separated
/// by a strip of width `δ` and heights scaled so that `mass + ε/2 ≤ ∫ρ`.
fn separated(p: &PiecewiseDensity1D, delta: f64, eps: f64) -> PiecewiseDensity1D {
    let src = p.pieces();
    let mut pieces: Vec<Piece> = Vec::with_capacity(src.len());
    for (i, q) in src.iter().enumerate() {
        let touching = src.get(i + 1).is_some_and(|next| next.left <= q.right + MASS_TOL);
        let cut = if touching { delta.min(0.25 * q.length()) } else { 0.0 };
        pieces.push(Piece::new(q.left, q.right - cut, q.height));
    }
    let total = p.mass();
    let raw: f64 = pieces.iter().map(Piece::mass).sum();
    let allowed = total - 0.5 * eps;
    let scale = if raw <= allowed { 1.0 } else { allowed.max(0.0) / raw };
    for q in &mut pieces {
        q.height *= scale;
    }
    PiecewiseDensity1D::from_sorted_fragments(pieces)
}

/// Norms of the explicit exact controller against the closed-form bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactBoundReport {
    pub n: usize,
    pub h: f64,
    pub linf_w: f64,
    /// `‖w‖_∞ + TV(w)`.
    pub bv_w: f64,
    pub bv_b: f64,
    /// `3|log ρ(0)| + 4|∂ₓ log ρ(0)| + ‖∂ₓ log ρ‖_BV`.
    pub bv_w_bound: f64,
    pub bv_b_bound: f64,
    /// `‖S(1_{(0,1)}) − ρ_T‖₁`.
    pub terminal_error: f64,
    /// `L·h`.
    pub error_bound: f64,
}

/// Explicit controller on `[0, 1]` for a smooth target bounded below: a
/// first dilation to the mean level, then `n − 1` steps rescaling the mass
/// right of `(i−1)/n` by `ρ(x_i)/ρ(x_{i−1})` at midpoints `x_i`.
pub fn plan_1d_exact(rho_t: &DensityFunction, n: usize) -> Result<(ControlSchedule, ExactBoundReport)> {
    if n < 2 {
        return Err(invalid("n must be at least 2"));
    }
    if rho_t.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: rho_t.dim(),
        });
    }
    if rho_t.support_lo()[0] != 0.0 || rho_t.support_hi()[0] != 1.0 {
        return Err(precondition("target must be supported on [0, 1]"));
    }
    let c = rho_t
        .lower_bound
        .filter(|&c| c > 0.0)
        .ok_or_else(|| precondition("target needs a positive lower bound"))?;
    let l = rho_t
        .lipschitz
        .ok_or_else(|| precondition("target needs a regularity constant"))?;
    let h = 1.0 / n as f64;
    let rho: Vec<f64> = (1..=n)
        .map(|i| rho_t.eval(&[(2 * i - 1) as f64 * h / 2.0]).max(c))
        .collect();
    let m_h: f64 = rho.iter().map(|v| h * v).sum();
    let d1 = 0.5 + h / 2.0;
    let dn = h / 2.0;
    let mut arcs = vec![ControlArc::scalar((m_h / rho[0]).ln() / d1, 1.0, 0.0, d1)?];
    for i in 2..=n {
        let w = (rho[i - 2] / rho[i - 1]).ln() / dn;
        arcs.push(ControlArc::scalar(w, 1.0, -((i - 1) as f64) * h, dn)?);
    }
    let schedule = ControlSchedule::new(1, arcs)?;
    let m = schedule.metrics()?;
    let terminal = simulate_density(&PiecewiseDensity1D::uniform(0.0, 1.0)?, &schedule)?;
    let report = ExactBoundReport {
        n,
        h,
        linf_w: m.linf_w,
        bv_w: m.linf_w + m.jump_w,
        bv_b: m.linf_b + m.jump_b,
        bv_w_bound: log_bv_bound(rho_t),
        bv_b_bound: 2.0,
        terminal_error: l1_to_function_1d(&terminal, rho_t),
        error_bound: l * h,
    };
    Ok((schedule, report))
}

/// `3|log ρ(0)| + 4|g(0)| + ‖g‖_∞ + TV(g)` with `g = ∂ₓ log ρ` by finite differences.
fn log_bv_bound(rho: &DensityFunction) -> f64 {
    const SAMPLES: usize = 4096;
    let step = 1.0 / SAMPLES as f64;
    let fd = 1e-5;
    let log_rho = |x: f64| rho.eval(&[x]).ln();
    let g = |x: f64| {
        let lo = (x - fd).max(0.0);
        let hi = (x + fd).min(1.0);
        (log_rho(hi) - log_rho(lo)) / (hi - lo)
    };
    let values: Vec<f64> = (0..=SAMPLES).map(|i| g(i as f64 * step)).collect();
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tv: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    3.0 * log_rho(0.0).abs() + 4.0 * values[0].abs() + sup + tv
}
