use serde::{Deserialize, Serialize};

use super::xlogx;
use crate::error::{invalid, Result};
use crate::{FRAGMENT_TOL, MERGE_TOL};

/// One constancy interval `(left, right)` carrying `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64, f64)", into = "(f64, f64, f64)")]
pub struct Piece {
    pub left: f64,
    pub right: f64,
    pub height: f64,
}

impl Piece {
    pub fn new(left: f64, right: f64, height: f64) -> Self {
        Self {
            left,
            right,
            height,
        }
    }

    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    pub fn mass(&self) -> f64 {
        self.height * self.length()
    }
}

impl From<(f64, f64, f64)> for Piece {
    fn from((left, right, height): (f64, f64, f64)) -> Self {
        Piece::new(left, right, height)
    }
}

impl From<Piece> for (f64, f64, f64) {
    fn from(p: Piece) -> Self {
        (p.left, p.right, p.height)
    }
}

/// A finite union of disjoint, sorted intervals with constant positive heights.
///
/// The representation is canonical: zero-height pieces are dropped and
/// touching pieces of equal height (within [`MERGE_TOL`]) are merged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawPiecewise", into = "RawPiecewise")]
pub struct PiecewiseDensity1D {
    pieces: Vec<Piece>,
}

#[derive(Serialize, Deserialize)]
struct RawPiecewise {
    pieces: Vec<Piece>,
}

impl TryFrom<RawPiecewise> for PiecewiseDensity1D {
    type Error = crate::Error;
    fn try_from(raw: RawPiecewise) -> Result<Self> {
        PiecewiseDensity1D::new(raw.pieces)
    }
}

impl From<PiecewiseDensity1D> for RawPiecewise {
    fn from(d: PiecewiseDensity1D) -> Self {
        RawPiecewise { pieces: d.pieces }
    }
}

impl PiecewiseDensity1D {
    /// Validates and canonicalizes a list of pieces given in increasing order.
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        for (i, p) in pieces.iter().enumerate() {
            if !(p.left.is_finite() && p.right.is_finite() && p.height.is_finite()) {
                return Err(invalid(format!("piece {i} has a non-finite entry")));
            }
            if p.left >= p.right {
                return Err(invalid(format!(
                    "piece {i} is empty or reversed: ({}, {})",
                    p.left, p.right
                )));
            }
            if p.height < 0.0 {
                return Err(invalid(format!("piece {i} has negative height {}", p.height)));
            }
        }
        for (i, w) in pieces.windows(2).enumerate() {
            if w[0].right > w[1].left + MERGE_TOL {
                return Err(invalid(format!(
                    "pieces {i} and {} overlap or are out of order",
                    i + 1
                )));
            }
        }
        Ok(Self {
            pieces: canonicalize(pieces),
        })
    }

    /// Builds a density from pieces that are known to be sorted up to rounding
    /// (for example the image of a sorted density under a monotone map).
    pub(crate) fn from_sorted_fragments(mut pieces: Vec<Piece>) -> Self {
        pieces.retain(|p| p.right - p.left > FRAGMENT_TOL && p.height > 0.0);
        pieces.sort_by(|a, b| a.left.total_cmp(&b.left));
        for i in 1..pieces.len() {
            if pieces[i].left < pieces[i - 1].right {
                // rounding overlap from the flow map; keep the left endpoint monotone
                pieces[i].left = pieces[i - 1].right;
            }
        }
        pieces.retain(|p| p.right - p.left > FRAGMENT_TOL);
        Self {
            pieces: canonicalize(pieces),
        }
    }

    pub fn empty() -> Self {
        Self { pieces: Vec::new() }
    }

    /// Constant `height` on `(left, right)`.
    pub fn block(left: f64, right: f64, height: f64) -> Result<Self> {
        Self::new(vec![Piece::new(left, right, height)])
    }

    /// The probability density of the uniform law on `(left, right)`.
    pub fn uniform(left: f64, right: f64) -> Result<Self> {
        if !(right > left) {
            return Err(invalid("uniform needs left < right"));
        }
        Self::block(left, right, 1.0 / (right - left))
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.pieces.iter().map(Piece::mass).sum()
    }

    /// `∫ ρ log ρ`.
    pub fn entropy(&self) -> f64 {
        self.pieces.iter().map(|p| xlogx(p.height) * p.length()).sum()
    }

    pub fn inf_support(&self) -> Option<f64> {
        self.pieces.first().map(|p| p.left)
    }

    pub fn sup_support(&self) -> Option<f64> {
        self.pieces.last().map(|p| p.right)
    }

    pub fn max_height(&self) -> f64 {
        self.pieces.iter().map(|p| p.height).fold(0.0, f64::max)
    }

    /// Value at `x`; pieces are treated as half-open `[left, right)`.
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.pieces.partition_point(|p| p.right <= x);
        match self.pieces.get(idx) {
            Some(p) if p.left <= x => p.height,
            _ => 0.0,
        }
    }

    /// `∫_{-∞}^{x} ρ`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for p in &self.pieces {
            if x <= p.left {
                break;
            }
            acc += p.height * (x.min(p.right) - p.left);
        }
        acc
    }

    /// Generalized inverse of the normalized distribution function, `u ∈ [0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let total = self.mass();
        let target = u.clamp(0.0, 1.0) * total;
        let mut acc = 0.0;
        for p in &self.pieces {
            let m = p.mass();
            if acc + m >= target {
                return p.left + (target - acc) / p.height;
            }
            acc += m;
        }
        self.sup_support().unwrap_or(0.0)
    }

    /// Number of connected components of the support.
    pub fn support_components(&self) -> usize {
        let mut count = 0;
        let mut last_right = f64::NEG_INFINITY;
        for p in &self.pieces {
            if p.left > last_right + MERGE_TOL {
                count += 1;
            }
            last_right = p.right;
        }
        count
    }

    /// Connected components of the support as `(left, right)` pairs.
    pub fn components(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for p in &self.pieces {
            match out.last_mut() {
                Some(last) if p.left <= last.1 + MERGE_TOL => last.1 = p.right,
                _ => out.push((p.left, p.right)),
            }
        }
        out
    }

    /// Sorted, deduplicated breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut xs: Vec<f64> = self
            .pieces
            .iter()
            .flat_map(|p| [p.left, p.right])
            .collect();
        xs.dedup();
        xs
    }

    /// Exact `∫ |f - g|` on the common refinement of both breakpoint sets.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        let grid = merged_breakpoints(self, other);
        grid.windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (self.eval(mid) - other.eval(mid)).abs() * (w[1] - w[0])
            })
            .sum()
    }

    /// Kolmogorov distance between the normalized distribution functions.
    pub fn ks_distance_to_samples(&self, sorted_samples: &[f64]) -> f64 {
        let n = sorted_samples.len() as f64;
        let total = self.mass();
        let mut worst: f64 = 0.0;
        for (i, &x) in sorted_samples.iter().enumerate() {
            let f = self.cdf(x) / total;
            worst = worst.max((f - i as f64 / n).abs());
            worst = worst.max((f - (i + 1) as f64 / n).abs());
        }
        worst
    }

    /// Pointwise `alpha·self + beta·other`. Fails if the result would be
    /// negative beyond [`MERGE_TOL`].
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        let grid = merged_breakpoints(self, other);
        let mut out = Vec::with_capacity(grid.len());
        for w in grid.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let v = alpha * self.eval(mid) + beta * other.eval(mid);
            if v < -MERGE_TOL {
                return Err(invalid("linear combination is negative somewhere"));
            }
            if v > 0.0 {
                out.push(Piece::new(w[0], w[1], v));
            }
        }
        Self::new(out)
    }

    /// Multiplies every height by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece::new(p.left, p.right, p.height * factor))
            .collect();
        Self {
            pieces: canonicalize(pieces),
        }
    }

    /// Rigid translation by `shift`.
    pub fn translated(&self, shift: f64) -> Self {
        Self {
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece::new(p.left + shift, p.right + shift, p.height))
                .collect(),
        }
    }

    /// Graph of the step function as `(x, ρ(x))` breakpoint pairs: two points
    /// per breakpoint so that plotting the polyline draws the steps.
    pub fn graph_points(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(4 * self.pieces.len());
        let mut prev_right = f64::NAN;
        for p in &self.pieces {
            if p.left != prev_right {
                pts.push((p.left, 0.0));
            }
            pts.push((p.left, p.height));
            pts.push((p.right, p.height));
            pts.push((p.right, 0.0));
            prev_right = p.right;
        }
        pts
    }
}

fn merged_breakpoints(a: &PiecewiseDensity1D, b: &PiecewiseDensity1D) -> Vec<f64> {
    let mut xs = a.breakpoints();
    xs.extend(b.breakpoints());
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

fn canonicalize(pieces: Vec<Piece>) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::with_capacity(pieces.len());
    for mut p in pieces {
        if p.height <= 0.0 || p.right - p.left <= 0.0 {
            continue;
        }
        if let Some(last) = out.last_mut() {
            if (p.left - last.right).abs() <= MERGE_TOL {
                if (p.height - last.height).abs() <= MERGE_TOL {
                    last.right = p.right;
                    continue;
                }
                p.left = last.right;
            }
        }
        out.push(p);
    }
    out
}
