//! Piecewise-constant controls `(w, a, b)` and the closed-form flow of the
//! single-neuron field `w σ(⟨a, x⟩ + b)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, precondition, Error, Result};
use crate::MERGE_TOL;

/// One constancy interval of the controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArc")]
pub struct ControlArc {
    pub duration: f64,
    pub w: Vec<f64>,
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Deserialize)]
struct RawArc {
    duration: f64,
    w: Vec<f64>,
    a: Vec<f64>,
    b: f64,
}

impl TryFrom<RawArc> for ControlArc {
    type Error = Error;
    fn try_from(r: RawArc) -> Result<Self> {
        ControlArc::new(r.w, r.a, r.b, r.duration)
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(x, y)| x * y).sum()
}

fn norm2(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

fn dist2(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `(e^{pt} − 1)/p`, continuous at `p = 0`.
fn growth(p: f64, t: f64) -> f64 {
    if p == 0.0 {
        t
    } else {
        (p * t).exp_m1() / p
    }
}

impl ControlArc {
    pub fn new(w: Vec<f64>, a: Vec<f64>, b: f64, duration: f64) -> Result<Self> {
        if w.len() != a.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: w.len(),
            });
        }
        if w.is_empty() {
            return Err(invalid("arc dimension must be at least 1"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(invalid(format!("arc duration must be positive, got {duration}")));
        }
        if !b.is_finite() || w.iter().chain(&a).any(|v| !v.is_finite()) {
            return Err(invalid("arc parameters must be finite"));
        }
        Ok(Self { duration, w, a, b })
    }

    /// Scalar arc in one dimension.
    pub fn scalar(w: f64, a: f64, b: f64, duration: f64) -> Result<Self> {
        Self::new(vec![w], vec![a], b, duration)
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// `⟨a, x⟩ + b`.
    pub fn activation(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) + self.b
    }

    /// `⟨a, w⟩`, the divergence of the field on its active side.
    pub fn rate(&self) -> f64 {
        dot(&self.a, &self.w)
    }

    pub fn is_identity(&self) -> bool {
        self.w.iter().all(|&v| v == 0.0) || (self.a.iter().all(|&v| v == 0.0) && self.b <= 0.0)
    }

    /// Same arc with `w` negated: its flow inverts this one's.
    pub fn inverse(&self) -> Self {
        Self {
            duration: self.duration,
            w: self.w.iter().map(|v| -v).collect(),
            a: self.a.clone(),
            b: self.b,
        }
    }

    /// Rescales `(w, a, b) → (‖a‖∞ w, a/‖a‖∞, b/‖a‖∞)`; the field is unchanged.
    pub fn normalized(&self) -> Self {
        let m = self.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m == 0.0 {
            return self.clone();
        }
        Self {
            duration: self.duration,
            w: self.w.iter().map(|v| v * m).collect(),
            a: self.a.iter().map(|v| v / m).collect(),
            b: self.b / m,
        }
    }

    /// In-place exact flow for time `t`.
    pub fn flow_in_place(&self, x: &mut [f64], t: f64) {
        let s0 = self.activation(x);
        if s0 <= 0.0 {
            return;
        }
        let g = s0 * growth(self.rate(), t);
        for (xi, wi) in x.iter_mut().zip(&self.w) {
            *xi += wi * g;
        }
    }

    /// Scalar specialisation of the flow for one-dimensional arcs.
    pub fn flow_scalar(&self, x: f64, t: f64) -> f64 {
        let s0 = self.a[0] * x + self.b;
        if s0 <= 0.0 {
            return x;
        }
        x + self.w[0] * s0 * growth(self.a[0] * self.w[0], t)
    }

    /// Exact solution of `x' = w σ(⟨a,x⟩ + b)` at time `t` from `x0`.
    pub fn flow_map(&self, x0: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_dim(x0.len())?;
        let mut x = x0.to_vec();
        self.flow_in_place(&mut x, t);
        Ok(x)
    }

    /// `det ∂x(t)/∂x0 = e^{⟨a,w⟩t}` on the active side, 1 on the inactive side.
    pub fn flow_jacobian_determinant(&self, x0: &[f64], t: f64) -> Result<f64> {
        self.check_dim(x0.len())?;
        let s0 = self.activation(x0);
        if s0 == 0.0 {
            return Err(precondition("Jacobian is undefined on the activation hyperplane"));
        }
        Ok(if s0 > 0.0 { (self.rate() * t).exp() } else { 1.0 })
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// Ordered list of arcs sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct ControlSchedule {
    dim: usize,
    arcs: Vec<ControlArc>,
}

#[derive(Deserialize)]
struct RawSchedule {
    dim: usize,
    arcs: Vec<ControlArc>,
}

impl TryFrom<RawSchedule> for ControlSchedule {
    type Error = Error;
    fn try_from(r: RawSchedule) -> Result<Self> {
        ControlSchedule::new(r.dim, r.arcs)
    }
}

/// Norms and jump counts of the three control channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleMetrics {
    pub arcs: usize,
    pub discontinuities_w: usize,
    pub discontinuities_a: usize,
    pub discontinuities_b: usize,
    pub linf_w: f64,
    pub linf_a: f64,
    pub linf_b: f64,
    /// `linf·(1 + 2D)`, the piecewise-constant BV bound.
    pub bv_w: f64,
    pub bv_a: f64,
    pub bv_b: f64,
    /// Exact total jump variation.
    pub jump_w: f64,
    pub jump_a: f64,
    pub jump_b: f64,
    pub total_duration: f64,
}

impl ScheduleMetrics {
    /// Discontinuities of the whole control triple: the max over channels.
    pub fn discontinuities(&self) -> usize {
        self.discontinuities_w
            .max(self.discontinuities_a)
            .max(self.discontinuities_b)
    }

    /// Exact BV norms `linf + jump` for `(w, a, b)`.
    pub fn bv_exact(&self) -> (f64, f64, f64) {
        (
            self.linf_w + self.jump_w,
            self.linf_a + self.jump_a,
            self.linf_b + self.jump_b,
        )
    }
}

impl ControlSchedule {
    pub fn new(dim: usize, arcs: Vec<ControlArc>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if let Some(bad) = arcs.iter().find(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(Self { dim, arcs })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            arcs: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arcs(&self) -> &[ControlArc] {
        &self.arcs
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn push(&mut self, arc: ControlArc) -> Result<()> {
        if arc.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: arc.dim(),
            });
        }
        self.arcs.push(arc);
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.arcs.iter().map(|a| a.duration).sum()
    }

    /// Applies every arc for its full duration.
    pub fn flow_map(&self, x0: &[f64]) -> Result<Vec<f64>> {
        if x0.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x0.len(),
            });
        }
        let mut x = x0.to_vec();
        for arc in &self.arcs {
            arc.flow_in_place(&mut x, arc.duration);
        }
        Ok(x)
    }

    pub fn metrics(&self) -> Result<ScheduleMetrics> {
        if self.arcs.is_empty() {
            return Err(Error::EmptySchedule);
        }
        let mut m = ScheduleMetrics {
            arcs: self.arcs.len(),
            discontinuities_w: 0,
            discontinuities_a: 0,
            discontinuities_b: 0,
            linf_w: 0.0,
            linf_a: 0.0,
            linf_b: 0.0,
            bv_w: 0.0,
            bv_a: 0.0,
            bv_b: 0.0,
            jump_w: 0.0,
            jump_a: 0.0,
            jump_b: 0.0,
            total_duration: self.total_duration(),
        };
        for arc in &self.arcs {
            m.linf_w = m.linf_w.max(norm2(&arc.w));
            m.linf_a = m.linf_a.max(norm2(&arc.a));
            m.linf_b = m.linf_b.max(arc.b.abs());
        }
        for pair in self.arcs.windows(2) {
            let (p, q) = (&pair[0], &pair[1]);
            let jw = dist2(&p.w, &q.w);
            let ja = dist2(&p.a, &q.a);
            let jb = (p.b - q.b).abs();
            if jw > MERGE_TOL {
                m.discontinuities_w += 1;
                m.jump_w += jw;
            }
            if ja > MERGE_TOL {
                m.discontinuities_a += 1;
                m.jump_a += ja;
            }
            if jb > MERGE_TOL {
                m.discontinuities_b += 1;
                m.jump_b += jb;
            }
        }
        m.bv_w = m.linf_w * (1.0 + 2.0 * m.discontinuities_w as f64);
        m.bv_a = m.linf_a * (1.0 + 2.0 * m.discontinuities_a as f64);
        m.bv_b = m.linf_b * (1.0 + 2.0 * m.discontinuities_b as f64);
        Ok(m)
    }

    /// Time reversal: arcs in reverse order with `w` negated.
    pub fn reverse(&self) -> Self {
        Self {
            dim: self.dim,
            arcs: self.arcs.iter().rev().map(ControlArc::inverse).collect(),
        }
    }

    pub fn concatenate(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut arcs = self.arcs.clone();
        arcs.extend_from_slice(&other.arcs);
        Ok(Self {
            dim: self.dim,
            arcs,
        })
    }

    /// Stretches the horizon to `t_new`, scaling `w` inversely so the
    /// terminal flow map is unchanged.
    pub fn rescale_time(&self, t_new: f64) -> Result<Self> {
        if !(t_new > 0.0 && t_new.is_finite()) {
            return Err(invalid(format!("new horizon must be positive, got {t_new}")));
        }
        let t_old = self.total_duration();
        if t_old <= 0.0 {
            return Ok(self.clone());
        }
        let r = t_new / t_old;
        Ok(Self {
            dim: self.dim,
            arcs: self
                .arcs
                .iter()
                .map(|arc| ControlArc {
                    duration: arc.duration * r,
                    w: arc.w.iter().map(|v| v / r).collect(),
                    a: arc.a.clone(),
                    b: arc.b,
                })
                .collect(),
        })
    }

    /// Removes adjacent arc/inverse pairs (equal `a`, `b` and duration with
    /// opposite `w`, within `tol`) until none remain, and drops arcs whose
    /// field vanishes identically. The terminal flow map is unchanged.
    pub fn cancel_inverse_pairs(&self, tol: f64) -> Self {
        let mut stack: Vec<ControlArc> = Vec::with_capacity(self.arcs.len());
        for arc in &self.arcs {
            if arc.is_identity() {
                continue;
            }
            let cancels = stack.last().is_some_and(|top| {
                (top.b - arc.b).abs() <= tol
                    && (top.duration - arc.duration).abs() <= tol
                    && top.a.iter().zip(&arc.a).all(|(x, y)| (x - y).abs() <= tol)
                    && top.w.iter().zip(&arc.w).all(|(x, y)| (x + y).abs() <= tol)
            });
            if cancels {
                stack.pop();
            } else {
                stack.push(arc.clone());
            }
        }
        Self {
            dim: self.dim,
            arcs: stack,
        }
    }

    pub fn normalized(&self) -> Self {
        Self {
            dim: self.dim,
            arcs: self.arcs.iter().map(ControlArc::normalized).collect(),
        }
    }

    /// Gives every arc the duration `total / len`, rescaling each `w` so that
    /// every arc's flow map is unchanged.
    pub fn equalize_durations(&self, total: f64) -> Result<Self> {
        if !(total > 0.0 && total.is_finite()) {
            return Err(invalid(format!("total duration must be positive, got {total}")));
        }
        if self.arcs.is_empty() {
            return Ok(self.clone());
        }
        let dt = total / self.arcs.len() as f64;
        Ok(Self {
            dim: self.dim,
            arcs: self
                .arcs
                .iter()
                .map(|arc| ControlArc {
                    duration: dt,
                    w: arc.w.iter().map(|v| v * arc.duration / dt).collect(),
                    a: arc.a.clone(),
                    b: arc.b,
                })
                .collect(),
        })
    }

    /// Arcs `range` as a schedule of the same dimension.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dim: self.dim,
            arcs: self.arcs[range].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn arc1(w: f64, a: f64, b: f64, d: f64) -> ControlArc {
        ControlArc::scalar(w, a, b, d).unwrap()
    }

    #[test]
    fn exponential_growth() {
        let arc = arc1(1.0, 1.0, 0.0, 1.0);
        assert_abs_diff_eq!(arc.flow_map(&[1.0], 2f64.ln()).unwrap()[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            arc.flow_jacobian_determinant(&[1.0], 1.0).unwrap(),
            std::f64::consts::E,
            epsilon = 1e-14
        );
    }

    #[test]
    fn inactive_points_frozen() {
        let arc = ControlArc::new(vec![3.0, -2.0], vec![1.0, 1.0], 0.0, 1.0).unwrap();
        let x0 = [-0.5, -0.5];
        assert_eq!(arc.flow_map(&x0, 0.7).unwrap(), x0.to_vec());
        assert_eq!(arc.flow_jacobian_determinant(&x0, 0.7).unwrap(), 1.0);
    }

    #[test]
    fn shear_moves_second_coordinate() {
        let b1 = 0.3;
        let arc = ControlArc::new(vec![0.0, -1.0], vec![1.0, 0.0], -b1, 2.0).unwrap();
        let x = arc.flow_map(&[0.8, 1.0], 1.5).unwrap();
        assert_eq!(x[0], 0.8);
        assert_abs_diff_eq!(x[1], 1.0 - (0.8 - b1) * 1.5, epsilon = 1e-14);
        assert_eq!(arc.flow_jacobian_determinant(&[0.8, 1.0], 1.5).unwrap(), 1.0);
    }

    #[test]
    fn kink_and_dimension_errors() {
        let arc = arc1(1.0, 1.0, -1.0, 1.0);
        assert!(arc.flow_jacobian_determinant(&[1.0], 0.5).is_err());
        assert!(arc.flow_map(&[1.0, 2.0], 0.5).is_err());
        assert!(ControlArc::scalar(1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn metrics_counts() {
        let s = ControlSchedule::new(1, vec![arc1(2.0, 1.0, 0.5, 1.0)]).unwrap();
        let m = s.metrics().unwrap();
        assert_eq!(m.discontinuities(), 0);
        let s = ControlSchedule::new(1, vec![arc1(2.0, 1.0, 0.5, 1.0), arc1(-2.0, 1.0, 0.5, 1.0)]).unwrap();
        let m = s.metrics().unwrap();
        assert_eq!((m.discontinuities_w, m.discontinuities_a, m.discontinuities_b), (1, 0, 0));
        assert_abs_diff_eq!(m.bv_w, 2.0 * 3.0);
        assert_abs_diff_eq!(m.jump_w, 4.0);
        assert!(ControlSchedule::empty(1).metrics().is_err());
    }

    #[test]
    fn reverse_single_arc_and_involution() {
        let s = ControlSchedule::new(1, vec![arc1(2.0, 1.0, 0.5, 0.3)]).unwrap();
        assert_eq!(s.reverse().arcs()[0], arc1(-2.0, 1.0, 0.5, 0.3));
        assert_eq!(s.reverse().reverse(), s);
    }

    #[test]
    fn rescale_doubles_w() {
        let s = ControlSchedule::new(1, vec![arc1(1.5, 1.0, 0.0, 1.0), arc1(-1.0, 1.0, 1.0, 1.0)]).unwrap();
        let r = s.rescale_time(1.0).unwrap();
        assert_abs_diff_eq!(r.metrics().unwrap().linf_w, 3.0);
        assert_eq!(s.rescale_time(2.0).unwrap(), s);
        assert!(s.rescale_time(0.0).is_err());
    }

    #[test]
    fn concatenate_neutral_and_additive() {
        let s = ControlSchedule::new(1, vec![arc1(1.0, 1.0, 0.0, 0.5)]).unwrap();
        assert_eq!(s.concatenate(&ControlSchedule::empty(1)).unwrap(), s);
        assert_abs_diff_eq!(s.concatenate(&s).unwrap().total_duration(), 1.0);
        assert!(s.concatenate(&ControlSchedule::empty(2)).is_err());
    }

    #[test]
    fn cancellation_collapses_palindromes() {
        let s = ControlSchedule::new(
            1,
            vec![arc1(1.0, 1.0, 0.0, 0.5), arc1(2.0, -1.0, 3.0, 0.25), arc1(0.0, 1.0, 0.0, 1.0)],
        )
        .unwrap();
        let both = s.reverse().concatenate(&s).unwrap();
        assert!(both.cancel_inverse_pairs(1e-12).is_empty());
    }

    #[test]
    fn json_roundtrip() {
        let s = ControlSchedule::new(2, vec![ControlArc::new(vec![0.0, 1.0], vec![1.0, 0.0], -0.5, 0.25).unwrap()])
            .unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(
            j,
            r#"{"dim":2,"arcs":[{"duration":0.25,"w":[0.0,1.0],"a":[1.0,0.0],"b":-0.5}]}"#
        );
        assert_eq!(serde_json::from_str::<ControlSchedule>(&j).unwrap(), s);
        assert!(serde_json::from_str::<ControlSchedule>(
            r#"{"dim":2,"arcs":[{"duration":-1,"w":[0.0,1.0],"a":[1.0,0.0],"b":0}]}"#
        )
        .is_err());
    }

    fn arb_arc(d: usize) -> impl Strategy<Value = ControlArc> {
        (
            prop::collection::vec(-2.0..2.0f64, d),
            prop::collection::vec(-2.0..2.0f64, d),
            -2.0..2.0f64,
            0.01..1.0f64,
        )
            .prop_map(|(w, a, b, t)| ControlArc::new(w, a, b, t).unwrap())
    }

    proptest! {
        #[test]
        fn activation_sign_is_invariant(arc in arb_arc(3), x0 in prop::collection::vec(-3.0..3.0f64, 3), f in 0.0..1.0f64) {
            let s0 = arc.activation(&x0);
            let x = arc.flow_map(&x0, f * arc.duration).unwrap();
            let s = arc.activation(&x);
            prop_assert!(s0 <= 0.0 && s == s0 || s0 > 0.0 && s > 0.0);
        }

        #[test]
        fn semigroup(arc in arb_arc(2), x0 in prop::collection::vec(-3.0..3.0f64, 2), f in 0.0..1.0f64) {
            let t1 = f * arc.duration;
            let t2 = arc.duration - t1;
            let two = arc.flow_map(&arc.flow_map(&x0, t1).unwrap(), t2).unwrap();
            let one = arc.flow_map(&x0, arc.duration).unwrap();
            for (p, q) in two.iter().zip(&one) {
                prop_assert!((p - q).abs() <= 1e-10 * (1.0 + q.abs()));
            }
        }

        #[test]
        fn reverse_inverts_flow(arcs in prop::collection::vec(arb_arc(2), 1..6), x0 in prop::collection::vec(-3.0..3.0f64, 2)) {
            let s = ControlSchedule::new(2, arcs).unwrap();
            let y = s.flow_map(&x0).unwrap();
            let back = s.reverse().flow_map(&y).unwrap();
            for (p, q) in back.iter().zip(&x0) {
                prop_assert!((p - q).abs() <= 1e-10 * (1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max)));
            }
        }

        #[test]
        fn rescale_keeps_terminal_map(arcs in prop::collection::vec(arb_arc(2), 1..6), x0 in prop::collection::vec(-3.0..3.0f64, 2), t in 0.1..5.0f64) {
            let s = ControlSchedule::new(2, arcs).unwrap();
            let y = s.flow_map(&x0).unwrap();
            let z = s.rescale_time(t).unwrap().flow_map(&x0).unwrap();
            for (p, q) in y.iter().zip(&z) {
                prop_assert!((p - q).abs() <= 1e-10 * (1.0 + p.abs()));
            }
        }

        #[test]
        fn equalized_durations_keep_terminal_map(arcs in prop::collection::vec(arb_arc(2), 1..6), x0 in prop::collection::vec(-3.0..3.0f64, 2)) {
            let s = ControlSchedule::new(2, arcs).unwrap();
            let e = s.equalize_durations(1.0).unwrap();
            let y = s.flow_map(&x0).unwrap();
            let z = e.flow_map(&x0).unwrap();
            for (p, q) in y.iter().zip(&z) {
                prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()));
            }
        }

        #[test]
        fn concatenation_jump_count(a in prop::collection::vec(arb_arc(1), 1..5), b in prop::collection::vec(arb_arc(1), 1..5)) {
            let s1 = ControlSchedule::new(1, a).unwrap();
            let s2 = ControlSchedule::new(1, b).unwrap();
            let m1 = s1.metrics().unwrap();
            let m2 = s2.metrics().unwrap();
            let m = s1.concatenate(&s2).unwrap().metrics().unwrap();
            prop_assert!(m.discontinuities_w <= m1.discontinuities_w + m2.discontinuities_w + 1);
            prop_assert!(m.discontinuities_b <= m1.discontinuities_b + m2.discontinuities_b + 1);
        }
    }
}
