use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::{GridDensityND, PiecewiseDensity1D};
use crate::error::{invalid, Error, Result};

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Exact piecewise-constant form of a density, when one is known.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactRepr {
    OneD(PiecewiseDensity1D),
    Grid(GridDensityND),
}

impl ExactRepr {
    pub fn dim(&self) -> usize {
        match self {
            Self::OneD(_) => 1,
            Self::Grid(g) => g.dim(),
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            Self::OneD(p) => p.mass(),
            Self::Grid(g) => g.mass(),
        }
    }

    /// Number of pieces or cells.
    pub fn len(&self) -> usize {
        match self {
            Self::OneD(p) => p.len(),
            Self::Grid(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entropy(&self) -> f64 {
        match self {
            Self::OneD(p) => p.entropy(),
            Self::Grid(g) => g.entropy(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Self::OneD(p) => Self::OneD(p.scaled(factor)),
            Self::Grid(g) => Self::Grid(g.scaled(factor)),
        }
    }

    pub fn to_function(&self) -> DensityFunction {
        match self {
            Self::OneD(p) => DensityFunction::from_piecewise(p.clone()),
            Self::Grid(g) => DensityFunction::from_grid(g.clone()),
        }
    }
}

/// A general density on a bounded box, given by its pointwise evaluator and
/// optional regularity constants.
#[derive(Clone)]
pub struct DensityFunction {
    dim: usize,
    evaluator: Evaluator,
    lo: Vec<f64>,
    hi: Vec<f64>,
    pub lipschitz: Option<f64>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    exact: Option<ExactRepr>,
}

impl fmt::Debug for DensityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFunction")
            .field("dim", &self.dim)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("lipschitz", &self.lipschitz)
            .field("lower_bound", &self.lower_bound)
            .field("upper_bound", &self.upper_bound)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl DensityFunction {
    /// Density supported in the box `[lo, hi]`; the evaluator is only queried
    /// there and taken to vanish outside.
    pub fn new<F>(lo: Vec<f64>, hi: Vec<f64>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(invalid("dimension must be at least 1"));
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(invalid("support box must be finite"));
        }
        Ok(Self {
            dim: lo.len(),
            evaluator: Arc::new(f),
            lo,
            hi,
            lipschitz: None,
            lower_bound: None,
            upper_bound: None,
            exact: None,
        })
    }

    /// Support box `[−r, r]^d`.
    pub fn on_cube<F>(dim: usize, r: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(vec![-r; dim], vec![r; dim], f)
    }

    pub fn from_piecewise(p: PiecewiseDensity1D) -> Self {
        let (lo, hi) = match (p.inf_support(), p.sup_support()) {
            (Some(a), Some(b)) => (a, b),
            _ => (0.0, 0.0),
        };
        let q = p.clone();
        let mut f = Self::new(vec![lo], vec![hi], move |x| q.eval(x[0])).expect("finite support");
        f.upper_bound = Some(p.max_height());
        f.exact = Some(ExactRepr::OneD(p));
        f
    }

    pub fn from_grid(g: GridDensityND) -> Self {
        let d = g.dim();
        let (lo, hi) = g
            .bounding_box()
            .unwrap_or_else(|| (vec![0.0; d], vec![0.0; d]));
        let q = g.clone();
        let mut f = Self::new(lo, hi, move |x| q.eval(x)).expect("finite support");
        f.upper_bound = Some(g.cells().iter().map(|c| c.height).fold(0.0, f64::max));
        f.exact = Some(ExactRepr::Grid(g));
        f
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_bounds(mut self, lower: Option<f64>, upper: Option<f64>) -> Self {
        self.lower_bound = lower;
        self.upper_bound = upper;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn support_hi(&self) -> &[f64] {
        &self.hi
    }

    /// Smallest `R` with the support box inside `[−R, R]^d`.
    pub fn support_radius(&self) -> f64 {
        self.lo
            .iter()
            .chain(&self.hi)
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    pub fn has_empty_support(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(a, b)| a >= b)
    }

    pub fn exact(&self) -> Option<&ExactRepr> {
        self.exact.as_ref()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let inside = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| v >= a && v <= b);
        if inside {
            (self.evaluator)(x).max(0.0)
        } else {
            0.0
        }
    }

    /// `∫_{[lo,hi]} ρ`, exact for piecewise forms, else midpoint rule with
    /// `per_axis` samples per axis on the part inside the support box.
    pub fn cell_mass_with(&self, lo: &[f64], hi: &[f64], per_axis: usize) -> f64 {
        match &self.exact {
            Some(ExactRepr::OneD(p)) => p.cdf(hi[0]) - p.cdf(lo[0]),
            Some(ExactRepr::Grid(g)) => g
                .cells()
                .iter()
                .map(|c| c.height * c.overlap_with_box(lo, hi))
                .sum(),
            None => {
                let clo: Vec<f64> = lo.iter().zip(&self.lo).map(|(a, b)| a.max(*b)).collect();
                let chi: Vec<f64> = hi.iter().zip(&self.hi).map(|(a, b)| a.min(*b)).collect();
                if clo.iter().zip(&chi).any(|(a, b)| a >= b) {
                    return 0.0;
                }
                crate::quadrature::midpoint_box(|x| self.eval(x), &clo, &chi, per_axis)
            }
        }
    }

    /// Cell mass with the default 8 samples per axis.
    pub fn cell_mass(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.cell_mass_with(lo, hi, 8)
    }

    pub fn total_mass(&self) -> f64 {
        if self.has_empty_support() {
            return 0.0;
        }
        match &self.exact {
            Some(ExactRepr::OneD(p)) => p.mass(),
            Some(ExactRepr::Grid(g)) => g.mass(),
            None if self.dim == 1 => {
                crate::quadrature::gauss_legendre(|x| self.eval(&[x]), self.lo[0], self.hi[0], 256)
            }
            None => {
                let per_axis = match self.dim {
                    2 => 256,
                    3 => 48,
                    _ => 12,
                };
                crate::quadrature::midpoint_box(|x| self.eval(x), &self.lo, &self.hi, per_axis)
            }
        }
    }

    /// Draws `n` i.i.d. points: inverse CDF or cell picking for exact forms,
    /// rejection against `upper_bound` otherwise.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if self.has_empty_support() {
            return Err(invalid("cannot sample from an empty support"));
        }
        match &self.exact {
            Some(ExactRepr::OneD(p)) => {
                if p.mass() <= 0.0 {
                    return Err(invalid("cannot sample from a zero density"));
                }
                Ok((0..n)
                    .map(|_| vec![p.quantile(rng.random::<f64>())])
                    .collect())
            }
            Some(ExactRepr::Grid(g)) => sample_grid(g, n, rng),
            None => {
                let k = self
                    .upper_bound
                    .ok_or_else(|| invalid("rejection sampling needs an upper bound"))?;
                if k <= 0.0 {
                    return Err(invalid("upper bound must be positive"));
                }
                let mut out = Vec::with_capacity(n);
                let mut x = vec![0.0; self.dim];
                let mut tries = 0usize;
                while out.len() < n {
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi = rng.random_range(self.lo[i]..self.hi[i]);
                    }
                    if rng.random::<f64>() * k < self.eval(&x) {
                        out.push(x.clone());
                    }
                    tries += 1;
                    if out.is_empty() && tries > 10_000_000 {
                        return Err(invalid("rejection sampler found no mass"));
                    }
                }
                Ok(out)
            }
        }
    }
}

fn sample_grid<R: Rng + ?Sized>(g: &GridDensityND, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let cells = g.cells();
    let mut cum = Vec::with_capacity(cells.len());
    let mut acc = 0.0;
    for c in cells {
        acc += c.mass();
        cum.push(acc);
    }
    if acc <= 0.0 {
        return Err(invalid("cannot sample from a zero density"));
    }
    Ok((0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let i = cum.partition_point(|&c| c <= u).min(cells.len() - 1);
            let c = &cells[i];
            (0..g.dim())
                .map(|k| c.lo(k) + rng.random::<f64>() * (c.hi(k) - c.lo(k)))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triangle_mass_and_cell_mass() {
        let f = DensityFunction::new(vec![0.0], vec![1.0], |x| 2.0 * (1.0 - x[0])).unwrap();
        assert_abs_diff_eq!(f.total_mass(), 1.0, epsilon = 1e-12);
        // ∫_0^0.5 2(1−x) = 0.75; midpoint rule is exact for linear integrands
        assert_abs_diff_eq!(f.cell_mass(&[0.0], &[0.5]), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn exact_piecewise_cell_mass() {
        let p = PiecewiseDensity1D::block(0.0, 2.0, 0.5).unwrap();
        let f = DensityFunction::from_piecewise(p);
        assert_abs_diff_eq!(f.cell_mass(&[-1.0], &[1.0]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn samples_stay_in_support() {
        let f = DensityFunction::new(vec![0.0, 0.0], vec![1.0, 2.0], |_| 0.5)
            .unwrap()
            .with_bounds(Some(0.5), Some(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = f.sample(500, &mut rng).unwrap();
        assert_eq!(pts.len(), 500);
        assert!(pts.iter().all(|p| (0.0..1.0).contains(&p[0]) && (0.0..2.0).contains(&p[1])));
    }

    #[test]
    fn rejection_without_bound_fails() {
        let f = DensityFunction::new(vec![0.0], vec![1.0], |_| 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(f.sample(3, &mut rng).is_err());
    }
}
