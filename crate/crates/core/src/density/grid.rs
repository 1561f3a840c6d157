use serde::{Deserialize, Serialize};

use super::xlogx;
use crate::error::{invalid, Error, Result};
use crate::MERGE_TOL;

/// Axis-aligned box `center ± half_widths` carrying a constant height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub height: f64,
}

impl Cell {
    pub fn new(center: Vec<f64>, half_widths: Vec<f64>, height: f64) -> Self {
        Self {
            center,
            half_widths,
            height,
        }
    }

    /// Cell from its lower and upper corners.
    pub fn from_bounds(lo: &[f64], hi: &[f64], height: f64) -> Self {
        let center = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let half_widths = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect();
        Self::new(center, half_widths, height)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lo(&self, k: usize) -> f64 {
        self.center[k] - self.half_widths[k]
    }

    pub fn hi(&self, k: usize) -> f64 {
        self.center[k] + self.half_widths[k]
    }

    pub fn lower(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.lo(k)).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.hi(k)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.half_widths.iter().map(|w| 2.0 * w).product()
    }

    pub fn mass(&self) -> f64 {
        self.height * self.volume()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| x[k] >= self.lo(k) && x[k] < self.hi(k))
    }

    /// Volume of the intersection with `other`.
    pub fn overlap_volume(&self, other: &Cell) -> f64 {
        let mut v = 1.0;
        for k in 0..self.dim() {
            let len = self.hi(k).min(other.hi(k)) - self.lo(k).max(other.lo(k));
            if len <= 0.0 {
                return 0.0;
            }
            v *= len;
        }
        v
    }

    /// Volume of the intersection with the box `[lo, hi]`.
    pub fn overlap_with_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut v = 1.0;
        for k in 0..self.dim() {
            let len = self.hi(k).min(hi[k]) - self.lo(k).max(lo[k]);
            if len <= 0.0 {
                return 0.0;
            }
            v *= len;
        }
        v
    }
}

/// Union of pairwise-disjoint axis-aligned cells with constant heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridDensityND {
    dim: usize,
    cells: Vec<Cell>,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    dim: usize,
    cells: Vec<Cell>,
}

impl TryFrom<RawGrid> for GridDensityND {
    type Error = Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        GridDensityND::new(raw.dim, raw.cells)
    }
}

impl From<GridDensityND> for RawGrid {
    fn from(g: GridDensityND) -> Self {
        RawGrid {
            dim: g.dim,
            cells: g.cells,
        }
    }
}

impl GridDensityND {
    /// Validates cells (dimension, positive widths, nonnegative heights,
    /// disjoint interiors) and drops zero-height cells.
    pub fn new(dim: usize, cells: Vec<Cell>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        for (i, c) in cells.iter().enumerate() {
            if c.center.len() != dim || c.half_widths.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.center.len().max(c.half_widths.len()),
                });
            }
            if !c.height.is_finite() || c.height < 0.0 {
                return Err(invalid(format!("cell {i} has invalid height {}", c.height)));
            }
            if c.center.iter().any(|v| !v.is_finite())
                || c.half_widths.iter().any(|w| !(w.is_finite() && *w > 0.0))
            {
                return Err(invalid(format!("cell {i} has invalid geometry")));
            }
        }
        let cells: Vec<Cell> = cells.into_iter().filter(|c| c.height > 0.0).collect();
        check_disjoint(&cells)?;
        Ok(Self { dim, cells })
    }

    /// Skips the disjointness sweep; callers guarantee it by construction.
    pub(crate) fn from_disjoint_cells(dim: usize, cells: Vec<Cell>) -> Self {
        Self {
            dim,
            cells: cells.into_iter().filter(|c| c.height > 0.0).collect(),
        }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            cells: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.cells.iter().map(Cell::mass).sum()
    }

    pub fn support_volume(&self) -> f64 {
        self.cells.iter().map(Cell::volume).sum()
    }

    pub fn entropy(&self) -> f64 {
        self.cells.iter().map(|c| xlogx(c.height) * c.volume()).sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.cells
            .iter()
            .find(|c| c.contains(x))
            .map_or(0.0, |c| c.height)
    }

    /// Exact `∫ |f − g| = ∫f + ∫g − 2∫min(f, g)` over pairwise cell overlaps.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut common = 0.0;
        // sort the other side by its first-axis lower bound to prune pairs
        let mut order: Vec<usize> = (0..other.cells.len()).collect();
        order.sort_by(|&a, &b| other.cells[a].lo(0).total_cmp(&other.cells[b].lo(0)));
        let los: Vec<f64> = order.iter().map(|&i| other.cells[i].lo(0)).collect();
        let max_width = other
            .cells
            .iter()
            .map(|c| 2.0 * c.half_widths[0])
            .fold(0.0, f64::max);
        for c in &self.cells {
            let start = los.partition_point(|&lo| lo < c.lo(0) - max_width);
            for &j in &order[start..] {
                let o = &other.cells[j];
                if o.lo(0) >= c.hi(0) {
                    break;
                }
                let v = c.overlap_volume(o);
                if v > 0.0 {
                    common += v * c.height.min(o.height);
                }
            }
        }
        Ok((self.mass() + other.mass() - 2.0 * common).max(0.0))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_disjoint_cells(
            self.dim,
            self.cells
                .iter()
                .map(|c| Cell::new(c.center.clone(), c.half_widths.clone(), c.height * factor))
                .collect(),
        )
    }

    /// Bounding box `(lo, hi)` of the support, or `None` when empty.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.cells.is_empty() {
            return None;
        }
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for c in &self.cells {
            for k in 0..self.dim {
                lo[k] = lo[k].min(c.lo(k));
                hi[k] = hi[k].max(c.hi(k));
            }
        }
        Some((lo, hi))
    }
}

fn check_disjoint(cells: &[Cell]) -> Result<()> {
    if cells.len() < 2 {
        return Ok(());
    }
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| cells[a].lo(0).total_cmp(&cells[b].lo(0)));
    for (pos, &i) in order.iter().enumerate() {
        let ci = &cells[i];
        for &j in &order[pos + 1..] {
            let cj = &cells[j];
            if cj.lo(0) >= ci.hi(0) - MERGE_TOL {
                break;
            }
            let overlapping = (0..ci.dim())
                .all(|k| ci.hi(k).min(cj.hi(k)) - ci.lo(k).max(cj.lo(k)) > MERGE_TOL);
            if overlapping {
                return Err(invalid(format!("cells {i} and {j} overlap")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_cell_mass() {
        let g = GridDensityND::new(2, vec![Cell::new(vec![0.0, 0.0], vec![0.5, 0.5], 3.0)]).unwrap();
        assert_abs_diff_eq!(g.mass(), 3.0);
    }

    #[test]
    fn overlap_rejected_and_touching_accepted() {
        let a = Cell::new(vec![0.0, 0.0], vec![0.5, 0.5], 1.0);
        let b = Cell::new(vec![0.5, 0.0], vec![0.5, 0.5], 1.0);
        assert!(GridDensityND::new(2, vec![a.clone(), b]).is_err());
        let c = Cell::new(vec![1.0, 0.0], vec![0.5, 0.5], 1.0);
        assert!(GridDensityND::new(2, vec![a, c]).is_ok());
    }

    #[test]
    fn l1_distance_between_shifted_cells() {
        let f = GridDensityND::new(2, vec![Cell::new(vec![0.0, 0.0], vec![0.5, 0.5], 1.0)]).unwrap();
        let g = GridDensityND::new(2, vec![Cell::new(vec![0.5, 0.0], vec![0.5, 0.5], 1.0)]).unwrap();
        // overlap area 0.5 → ∫|f−g| = 2 − 2·0.5
        assert_abs_diff_eq!(f.l1_distance(&g).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(f.l1_distance(&f).unwrap(), 0.0);
    }

    #[test]
    fn entropy_and_zero_cells() {
        let g = GridDensityND::new(
            1,
            vec![
                Cell::new(vec![0.25], vec![0.25], 2.0),
                Cell::new(vec![2.0], vec![0.5], 0.0),
            ],
        )
        .unwrap();
        assert_eq!(g.len(), 1);
        assert_abs_diff_eq!(g.entropy(), std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn json_shape() {
        let g = GridDensityND::new(2, vec![Cell::new(vec![0.0, 1.0], vec![0.5, 0.25], 2.0)]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(
            s,
            r#"{"dim":2,"cells":[{"center":[0.0,1.0],"half_widths":[0.5,0.25],"height":2.0}]}"#
        );
        assert_eq!(serde_json::from_str::<GridDensityND>(&s).unwrap(), g);
        assert!(serde_json::from_str::<GridDensityND>(
            r#"{"dim":2,"cells":[{"center":[0.0],"half_widths":[0.5,0.25],"height":2.0}]}"#
        )
        .is_err());
    }
}
