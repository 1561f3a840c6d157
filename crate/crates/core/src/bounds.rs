//! Entropy-gap lower bounds on control norms and closed-form complexity
//! upper bounds, checked against emitted schedules.

use serde::{Deserialize, Serialize};

use crate::controls::{ControlArc, ControlSchedule, ScheduleMetrics};
use crate::density::ExactRepr;
use crate::error::{invalid, Error, Result};

const ENTROPY_SLACK: f64 = 1e-9;

/// Discontinuity and time budget of one level of the dimension recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBound {
    pub k: usize,
    pub s_k: usize,
    pub d_k: usize,
    pub tau_k: f64,
    pub t_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub entropy_source: Option<f64>,
    pub entropy_target: Option<f64>,
    pub entropy_gap: Option<f64>,
    /// `Σ ‖w‖₁·duration` over arcs normalized to `‖a‖∞ = 1`.
    pub w_l1_norm: Option<f64>,
    /// `Σ |⟨a, w⟩|·duration`, the time integral of `‖div V‖∞`.
    pub divergence_integral: Option<f64>,
    /// `Σ ‖w‖₂‖a‖₂·duration`.
    pub l2_product: Option<f64>,
    pub entropy_bound_satisfied: Option<bool>,
    pub n_cells: Option<usize>,
    pub d_bound: Option<usize>,
    pub t1_bound: Option<f64>,
    pub td_bound: Option<f64>,
    pub levels: Vec<LevelBound>,
    pub measured: Option<ScheduleMetrics>,
    /// `‖w‖∞ · T` of the schedule; compared with `td_bound` for information only.
    pub w_time_product: Option<f64>,
    pub time_within_bound: Option<bool>,
    pub violations: Vec<String>,
    pub passed: bool,
}

impl BoundReport {
    fn blank() -> Self {
        Self {
            entropy_source: None,
            entropy_target: None,
            entropy_gap: None,
            w_l1_norm: None,
            divergence_integral: None,
            l2_product: None,
            entropy_bound_satisfied: None,
            n_cells: None,
            d_bound: None,
            t1_bound: None,
            td_bound: None,
            levels: Vec::new(),
            measured: None,
            w_time_product: None,
            time_within_bound: None,
            violations: Vec::new(),
            passed: true,
        }
    }

    fn fail(&mut self, msg: String) {
        self.violations.push(msg);
        self.passed = false;
    }
}

fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Arc with `‖a‖∞ = 1`, or with `a = 0` and the constant `σ(b)` folded into `w`.
fn unit_arc(arc: &ControlArc) -> ControlArc {
    if arc.a.iter().all(|&v| v == 0.0) {
        let s = arc.b.max(0.0);
        ControlArc {
            w: arc.w.iter().map(|v| v * s).collect(),
            a: arc.a.clone(),
            b: if s > 0.0 { 1.0 } else { 0.0 },
            duration: arc.duration,
        }
    } else {
        arc.normalized()
    }
}

/// Control norms `(Σ‖w‖₁ dt, Σ|⟨a,w⟩| dt, Σ‖w‖₂‖a‖₂ dt)` of a normalized schedule.
pub fn control_norms(schedule: &ControlSchedule) -> (f64, f64, f64) {
    schedule.arcs().iter().map(unit_arc).fold((0.0, 0.0, 0.0), |(l1, div, l2), arc| {
        (
            l1 + norm1(&arc.w) * arc.duration,
            div + arc.rate().abs() * arc.duration,
            l2 + norm2(&arc.w) * norm2(&arc.a) * arc.duration,
        )
    })
}

/// Compares the entropy gap `|S(ρ_T) − S(ρ₀)|` with the `L¹` norm of `w`.
pub fn entropy_lower_bound_check(
    rho0: &ExactRepr,
    rho_t: &ExactRepr,
    schedule: &ControlSchedule,
) -> Result<BoundReport> {
    if rho0.dim() != rho_t.dim() || schedule.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho0.dim(),
            got: if rho_t.dim() != rho0.dim() { rho_t.dim() } else { schedule.dim() },
        });
    }
    let s0 = rho0.entropy();
    let st = rho_t.entropy();
    let gap = (st - s0).abs();
    let (l1, div, l2) = control_norms(schedule);
    let mut r = BoundReport::blank();
    r.entropy_source = Some(s0);
    r.entropy_target = Some(st);
    r.entropy_gap = Some(gap);
    r.w_l1_norm = Some(l1);
    r.divergence_integral = Some(div);
    r.l2_product = Some(l2);
    let ok = gap <= l1 + ENTROPY_SLACK;
    r.entropy_bound_satisfied = Some(ok);
    if !ok {
        r.fail(format!("entropy gap {gap:.6e} exceeds control norm {l1:.6e}"));
    }
    r.measured = schedule.metrics().ok();
    Ok(r)
}

/// Parameters of the lattice a schedule was planned on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub r: f64,
    pub h: f64,
    pub delta: f64,
    pub dim: usize,
    pub eps: f64,
    /// Lower height bound `c`.
    pub c: f64,
    /// Upper height bound `K`.
    pub k_height: f64,
}

/// Evaluates the closed-form discontinuity and time bounds with
/// `N = ⌈2R/h⌉^d`, together with the level-by-level recursion.
pub fn complexity_upper_bounds(p: &BoundParams) -> Result<BoundReport> {
    let positive = [p.r, p.h, p.delta, p.eps, p.c, p.k_height].iter().all(|v| *v > 0.0 && v.is_finite());
    if !positive || p.dim == 0 {
        return Err(invalid("all bound parameters must be positive"));
    }
    if p.c > p.k_height {
        return Err(invalid("lower height bound exceeds upper height bound"));
    }
    let d = p.dim;
    let side = (2.0 * p.r / p.h - 1e-12).ceil().max(1.0) as usize;
    let n = side.pow(d as u32);
    let nf = n as f64;
    let t1 = 2.0 * nf * ((2.0 * nf * (2.0 * nf + 2.0) / p.eps).ln().abs() + p.k_height.ln().abs() + p.c.ln().abs());
    let d1 = 10 * n;
    let mut levels = vec![LevelBound {
        k: 1,
        s_k: d1,
        d_k: d1,
        tau_k: t1,
        t_k: t1,
    }];
    for k in 2..=d {
        let m = side.pow((d + 1 - k) as u32);
        let prev = levels.last().unwrap();
        let s_k = 2 * m;
        let tau_k = 2.0 / p.delta * m as f64;
        levels.push(LevelBound {
            k,
            s_k,
            d_k: prev.d_k + s_k,
            tau_k,
            t_k: prev.t_k + tau_k,
        });
    }
    let mut r = BoundReport::blank();
    r.n_cells = Some(n);
    r.d_bound = Some(if d == 1 { d1 } else { n * (d + 10) });
    r.t1_bound = Some(t1);
    r.td_bound = Some(if d == 1 { t1 } else { d as f64 * p.delta * nf + t1 });
    r.levels = levels;
    Ok(r)
}

/// Bounds for `p` with the schedule's measured counts filled in; a count above
/// the discontinuity bound is reported as a violation.
pub fn check_schedule_against_bounds(schedule: &ControlSchedule, p: &BoundParams) -> Result<BoundReport> {
    if schedule.dim() != p.dim {
        return Err(Error::DimensionMismatch {
            expected: p.dim,
            got: schedule.dim(),
        });
    }
    let mut r = complexity_upper_bounds(p)?;
    let Ok(m) = schedule.metrics() else {
        return Ok(r);
    };
    let bound = r.d_bound.unwrap();
    if m.discontinuities() > bound {
        r.fail(format!("{} discontinuities exceed the bound {bound}", m.discontinuities()));
    }
    let product = m.linf_w * m.total_duration;
    r.w_time_product = Some(product);
    r.time_within_bound = r.td_bound.map(|t| product <= t);
    r.measured = Some(m);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::PiecewiseDensity1D;
    use crate::planner1d::build_dilation;
    use approx::assert_abs_diff_eq;

    fn params(r: f64, h: f64, dim: usize) -> BoundParams {
        BoundParams {
            r,
            h,
            delta: 0.01,
            dim,
            eps: 0.1,
            c: 0.5,
            k_height: 2.0,
        }
    }

    #[test]
    fn discontinuity_bound_examples() {
        assert_eq!(complexity_upper_bounds(&params(1.0, 1.0, 2)).unwrap().d_bound, Some(48));
        assert_eq!(complexity_upper_bounds(&params(1.0, 0.25, 1)).unwrap().d_bound, Some(80));
        let coarse = complexity_upper_bounds(&params(1.0, 0.5, 2)).unwrap();
        let fine = complexity_upper_bounds(&params(1.0, 0.25, 2)).unwrap();
        assert!(coarse.d_bound < fine.d_bound && coarse.td_bound < fine.td_bound);
    }

    #[test]
    fn recursion_levels() {
        let r = complexity_upper_bounds(&params(1.0, 0.5, 3)).unwrap();
        assert_eq!(r.levels.len(), 3);
        assert_eq!(r.levels[0].d_k, 640);
        assert_eq!(r.levels[1].s_k, 32);
        assert_eq!(r.levels[2].d_k, 640 + 32 + 8);
        assert!(r.levels[2].d_k <= r.d_bound.unwrap());
    }

    #[test]
    fn dilation_is_tight() {
        let eta: f64 = 3.0;
        let s = build_dilation(0.0, 1.0, 1.0 / eta, 1.0).unwrap();
        let u = ExactRepr::OneD(PiecewiseDensity1D::uniform(0.0, 1.0).unwrap());
        let target = ExactRepr::OneD(PiecewiseDensity1D::block(0.0, 1.0 / eta, eta).unwrap());
        let r = entropy_lower_bound_check(&u, &target, &s).unwrap();
        assert_abs_diff_eq!(r.entropy_gap.unwrap(), eta.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.w_l1_norm.unwrap(), eta.ln(), epsilon = 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn empty_and_padded_schedules() {
        let p = params(1.0, 1.0, 1);
        assert!(check_schedule_against_bounds(&ControlSchedule::empty(1), &p).unwrap().passed);
        let arcs = (0..40)
            .map(|i| ControlArc::scalar(if i % 2 == 0 { 1.0 } else { -1.0 }, 1.0, 0.0, 0.01).unwrap())
            .collect();
        let padded = ControlSchedule::new(1, arcs).unwrap();
        let r = check_schedule_against_bounds(&padded, &p).unwrap();
        assert!(!r.passed);
        assert_eq!(r.violations.len(), 1);
    }

    #[test]
    fn zero_activation_arc_folds_bias() {
        let arc = ControlArc::new(vec![2.0], vec![0.0], 3.0, 0.5).unwrap();
        let (l1, div, _) = control_norms(&ControlSchedule::new(1, vec![arc]).unwrap());
        assert_abs_diff_eq!(l1, 3.0);
        assert_eq!(div, 0.0);
    }
}
