//! Exact push-forward of piecewise-constant densities and particle clouds.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::controls::{ControlArc, ControlSchedule};
use crate::density::{Cell, ExactRepr, GridDensityND, Piece, PiecewiseDensity1D};
use crate::error::{invalid, Error, Result};
use crate::{FRAGMENT_TOL, MERGE_TOL};

/// Weighted points in `ℝᵈ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if points.len() != weights.len() {
            return Err(invalid("points and weights differ in length"));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("points must be finite"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !points.is_empty() && (total - 1.0).abs() > 1e-12 {
            if total <= 0.0 {
                return Err(invalid("weights sum to zero"));
            }
            return Ok(Self {
                dim,
                points,
                weights: weights.iter().map(|w| w / total).collect(),
            });
        }
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    /// Equal weights `1/n`.
    pub fn uniform(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len().max(1) as f64;
        let weights = vec![1.0 / n; points.len()];
        Self::new(dim, points, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sorted first coordinates, for 1-d distribution comparisons.
    pub fn sorted_coordinate(&self, k: usize) -> Vec<f64> {
        let mut xs: Vec<f64> = self.points.iter().map(|p| p[k]).collect();
        xs.sort_by(f64::total_cmp);
        xs
    }

    /// Writes `x1,…,xd,weight` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        header.push("weight".into());
        w.write_record(&header).map_err(csv_err)?;
        for (p, wt) in self.points.iter().zip(&self.weights) {
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            row.push(wt.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads one point per row. A non-numeric first row is a header; a last
    /// header column named `weight` carries weights, otherwise weights are equal.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(input);
        let mut weighted = false;
        let mut dim = None;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            if i == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
                weighted = rec.iter().next_back().is_some_and(|f| f.eq_ignore_ascii_case("weight"));
                let cols = rec.len() - usize::from(weighted);
                dim = Some(cols);
                continue;
            }
            let vals = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", i + 1))))
                .collect::<Result<Vec<f64>>>()?;
            let (coords, wt) = if weighted {
                let (w, c) = vals.split_last().ok_or_else(|| Error::Parse("empty row".into()))?;
                (c.to_vec(), Some(*w))
            } else {
                (vals, None)
            };
            let d = *dim.get_or_insert(coords.len());
            if coords.len() != d {
                return Err(Error::Parse(format!("row {} has {} coordinates, expected {d}", i + 1, coords.len())));
            }
            points.push(coords);
            weights.push(wt);
        }
        let dim = dim.filter(|&d| d > 0).ok_or_else(|| Error::Parse("no coordinates".into()))?;
        if weighted {
            let w = weights.into_iter().map(|w| w.unwrap_or(0.0)).collect();
            Self::new(dim, points, w).map_err(|e| Error::Parse(e.to_string()))
        } else {
            Self::uniform(dim, points).map_err(|e| Error::Parse(e.to_string()))
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Exact image of a 1-d piecewise-constant density under one arc.
pub fn pushforward_1d(density: &PiecewiseDensity1D, arc: &ControlArc) -> Result<PiecewiseDensity1D> {
    if arc.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: arc.dim(),
        });
    }
    if arc.is_identity() {
        return Ok(density.clone());
    }
    let (a, b) = (arc.a[0], arc.b);
    let split = if a != 0.0 { Some(-b / a) } else { None };
    let jac = (-arc.rate() * arc.duration).exp();
    let mut out = Vec::with_capacity(density.len() + 1);
    let mut push = |l: f64, r: f64, h: f64| {
        if r - l <= FRAGMENT_TOL {
            return;
        }
        let mid = 0.5 * (l + r);
        if a * mid + b > 0.0 {
            let nl = arc.flow_scalar(l, arc.duration);
            let nr = arc.flow_scalar(r, arc.duration);
            out.push(Piece::new(nl, nr, h * jac));
        } else {
            out.push(Piece::new(l, r, h));
        }
    };
    for p in density.pieces() {
        match split {
            Some(x) if x > p.left && x < p.right => {
                push(p.left, x, p.height);
                push(x, p.right, p.height);
            }
            _ => push(p.left, p.right, p.height),
        }
    }
    Ok(PiecewiseDensity1D::from_sorted_fragments(out))
}

/// Folds [`pushforward_1d`] over the schedule.
pub fn simulate_density(density: &PiecewiseDensity1D, schedule: &ControlSchedule) -> Result<PiecewiseDensity1D> {
    simulate_density_trace(density, schedule, |_, _| {})
}

/// As [`simulate_density`], reporting the state after every arc.
pub fn simulate_density_trace<F>(
    density: &PiecewiseDensity1D,
    schedule: &ControlSchedule,
    mut on_arc: F,
) -> Result<PiecewiseDensity1D>
where
    F: FnMut(usize, &PiecewiseDensity1D),
{
    if schedule.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: schedule.dim(),
        });
    }
    let mut rho = density.clone();
    for (i, arc) in schedule.arcs().iter().enumerate() {
        rho = pushforward_1d(&rho, arc)?;
        on_arc(i, &rho);
    }
    Ok(rho)
}

/// Exact terminal density of a piecewise-constant initial density.
pub fn simulate_exact(density: &ExactRepr, schedule: &ControlSchedule) -> Result<ExactRepr> {
    Ok(match density {
        ExactRepr::OneD(p) => ExactRepr::OneD(simulate_density(p, schedule)?),
        ExactRepr::Grid(g) => ExactRepr::Grid(simulate_boxes(g, schedule)?),
    })
}

/// Applies the schedule to every particle; weights are unchanged.
pub fn transport_particles(cloud: &ParticleCloud, schedule: &ControlSchedule) -> Result<ParticleCloud> {
    if cloud.dim() != schedule.dim() {
        return Err(Error::DimensionMismatch {
            expected: schedule.dim(),
            got: cloud.dim(),
        });
    }
    let points = cloud
        .points
        .par_iter()
        .map(|p| {
            let mut x = p.clone();
            for arc in schedule.arcs() {
                arc.flow_in_place(&mut x, arc.duration);
            }
            x
        })
        .collect();
    Ok(ParticleCloud {
        dim: cloud.dim,
        points,
        weights: cloud.weights.clone(),
    })
}

/// Range of `⟨a, x⟩ + b` over a cell.
fn activation_range(arc: &ControlArc, c: &Cell) -> (f64, f64) {
    let s = arc.activation(&c.center);
    let r: f64 = arc.a.iter().zip(&c.half_widths).map(|(a, h)| a.abs() * h).sum();
    (s - r, s + r)
}

enum Side {
    Active,
    Inactive,
    Straddles,
}

fn side(arc: &ControlArc, c: &Cell) -> Side {
    let (lo, hi) = activation_range(arc, c);
    let tol = MERGE_TOL * (1.0 + lo.abs().max(hi.abs()));
    if hi <= tol {
        Side::Inactive
    } else if lo >= -tol {
        Side::Active
    } else {
        Side::Straddles
    }
}

/// The single axis carrying both `a` and `w`, if the arc acts along one axis only.
fn single_axis(arc: &ControlArc) -> Option<usize> {
    let k = arc.a.iter().position(|&v| v != 0.0)?;
    let only = |v: &[f64]| v.iter().enumerate().all(|(i, &x)| i == k || x == 0.0);
    (only(&arc.a) && only(&arc.w)).then_some(k)
}

fn is_shear_pair(p: &ControlArc, q: &ControlArc) -> bool {
    p.a == q.a
        && (p.duration - q.duration).abs() <= MERGE_TOL * p.duration.max(1.0)
        && p.w.iter().zip(&q.w).all(|(x, y)| (x + y).abs() <= MERGE_TOL * (1.0 + x.abs()))
        && p.rate().abs() <= MERGE_TOL * (1.0 + p.w.iter().map(|v| v.abs()).sum::<f64>())
}

fn translate_cell(c: &mut Cell, shift: &[f64]) {
    for (x, s) in c.center.iter_mut().zip(shift) {
        *x += s;
    }
}

/// Maps `[lo, hi]` along axis `k` of `c` through the scalar flow, in place.
fn flow_interval(c: &mut Cell, k: usize, lo: f64, hi: f64, scalar: &ControlArc, jac: f64) {
    let a = scalar.a[0];
    let mid = 0.5 * (lo + hi);
    let (nlo, nhi) = if a * mid + scalar.b > 0.0 {
        c.height *= jac;
        (scalar.flow_scalar(lo, scalar.duration), scalar.flow_scalar(hi, scalar.duration))
    } else {
        (lo, hi)
    };
    c.center[k] = 0.5 * (nlo + nhi);
    c.half_widths[k] = 0.5 * (nhi - nlo);
}

fn push_axis_arc(cells: &mut Vec<Cell>, arc: &ControlArc, k: usize) {
    let a = arc.a[k];
    let x_star = -arc.b / a;
    let jac = (-arc.rate() * arc.duration).exp();
    let scalar = ControlArc {
        duration: arc.duration,
        w: vec![arc.w[k]],
        a: vec![a],
        b: arc.b,
    };
    let mut extra = Vec::new();
    for c in cells.iter_mut() {
        let (lo, hi) = (c.lo(k), c.hi(k));
        if x_star > lo && x_star < hi {
            let mut right = c.clone();
            flow_interval(c, k, lo, x_star, &scalar, jac);
            flow_interval(&mut right, k, x_star, hi, &scalar, jac);
            extra.push(right);
        } else {
            flow_interval(c, k, lo, hi, &scalar, jac);
        }
    }
    cells.extend(extra);
    cells.retain(|c| 2.0 * c.half_widths[k] > FRAGMENT_TOL);
}

fn push_shear_pair(cells: &mut [Cell], p: &ControlArc, q: &ControlArc, index: usize) -> Result<()> {
    let shift: Vec<f64> = p.w.iter().map(|w| w * p.duration * (p.b - q.b)).collect();
    for (ci, c) in cells.iter_mut().enumerate() {
        match (side(p, c), side(q, c)) {
            (Side::Active, Side::Active) => translate_cell(c, &shift),
            (Side::Inactive, Side::Inactive) => {}
            _ => return Err(Error::Straddle { cell: ci, arc: index }),
        }
    }
    Ok(())
}

/// Exact image of a box density under an arc pair built by the shear-pair
/// construction: cells active for both arcs translate rigidly, inactive cells stay.
pub fn pushforward_boxes_nd(density: &GridDensityND, arcs: &[ControlArc; 2]) -> Result<GridDensityND> {
    if !is_shear_pair(&arcs[0], &arcs[1]) {
        return Err(Error::UnsupportedArc {
            arc: 0,
            reason: "not a divergence-free shear pair".into(),
        });
    }
    let mut cells = density.cells().to_vec();
    push_shear_pair(&mut cells, &arcs[0], &arcs[1], 0)?;
    Ok(GridDensityND::from_disjoint_cells(density.dim(), cells))
}

/// Exact push-forward of a box density under schedules made of single-axis
/// arcs (split at the activation hyperplane), shear pairs, rigid translations
/// (`a = 0`) and identity arcs.
pub fn simulate_boxes(density: &GridDensityND, schedule: &ControlSchedule) -> Result<GridDensityND> {
    run_boxes(density, schedule, None)
}

/// As [`simulate_boxes`], reporting the state after each processed arc index.
pub fn simulate_boxes_trace<F>(density: &GridDensityND, schedule: &ControlSchedule, mut on_step: F) -> Result<GridDensityND>
where
    F: FnMut(usize, &GridDensityND),
{
    run_boxes(density, schedule, Some(&mut on_step))
}

type StepHook<'a> = Option<&'a mut dyn FnMut(usize, &GridDensityND)>;

fn run_boxes(density: &GridDensityND, schedule: &ControlSchedule, mut on_step: StepHook<'_>) -> Result<GridDensityND> {
    let d = density.dim();
    if schedule.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: schedule.dim(),
        });
    }
    let arcs = schedule.arcs();
    let mut cells = density.cells().to_vec();
    let mut i = 0;
    while i < arcs.len() {
        let arc = &arcs[i];
        let mut consumed = 1;
        if arc.is_identity() {
        } else if arc.a.iter().all(|&v| v == 0.0) {
            let shift: Vec<f64> = arc.w.iter().map(|w| w * arc.b * arc.duration).collect();
            cells.iter_mut().for_each(|c| translate_cell(c, &shift));
        } else if let Some(k) = single_axis(arc) {
            push_axis_arc(&mut cells, arc, k);
        } else if i + 1 < arcs.len() && is_shear_pair(arc, &arcs[i + 1]) {
            push_shear_pair(&mut cells, arc, &arcs[i + 1], i)?;
            consumed = 2;
        } else if cells.iter().all(|c| matches!(side(arc, c), Side::Inactive)) {
        } else {
            return Err(Error::UnsupportedArc {
                arc: i,
                reason: "field is neither single-axis nor part of a shear pair".into(),
            });
        }
        i += consumed;
        if let Some(hook) = on_step.as_mut() {
            hook(i - 1, &GridDensityND::from_disjoint_cells(d, cells.clone()));
        }
    }
    Ok(GridDensityND::from_disjoint_cells(d, cells))
}
