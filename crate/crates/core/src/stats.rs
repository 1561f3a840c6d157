//! Sample-driven targets: lattice histograms, Chebyshev concentration
//! certificates and the combined control-in-probability bound.

use std::collections::HashMap;
use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::ControlSchedule;
use crate::density::{Cell, DensityFunction, ExactRepr, GridDensityND, Piece, PiecewiseDensity1D};
use crate::error::{invalid, Error, Result};
use crate::planner1d::PlanReport;
use crate::plannernd::plan_nd;
use crate::transport::ParticleCloud;

/// I.i.d. samples `x_1, …, x_N` in `ℝ^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    dim: usize,
    samples: Vec<Vec<f64>>,
}

impl SampleSet {
    pub fn new(dim: usize, samples: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if samples.is_empty() {
            return Err(invalid("sample set is empty"));
        }
        for s in &samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.len(),
                });
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(invalid("samples must be finite"));
            }
        }
        Ok(Self { dim, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Reads one sample per row; a header row and a trailing `weight` column
    /// are accepted and the weights ignored.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let cloud = ParticleCloud::read_csv(input)?;
        Self::new(cloud.dim(), cloud.points().to_vec()).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn draw(rho: &DensityFunction, n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(rho.dim(), rho.sample(n, &mut rng)?)
    }
}

fn bin_of(x: &[f64], h: f64) -> Vec<i64> {
    x.iter().map(|v| (v / h).floor() as i64).collect()
}

fn bin_counts(samples: &[Vec<f64>], h: f64) -> HashMap<Vec<i64>, usize> {
    let mut counts = HashMap::new();
    for x in samples {
        *counts.entry(bin_of(x, h)).or_insert(0) += 1;
    }
    counts
}

fn bin_cell(idx: &[i64], h: f64, height: f64) -> Cell {
    let lo: Vec<f64> = idx.iter().map(|&j| j as f64 * h).collect();
    let hi: Vec<f64> = idx.iter().map(|&j| (j + 1) as f64 * h).collect();
    Cell::from_bounds(&lo, &hi, height)
}

/// Histogram on the lattice `hℤ^d` with heights `count/(N h^d)`; total mass 1.
pub fn histogram_density(samples: &SampleSet, h: f64) -> Result<ExactRepr> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("bin width must be positive"));
    }
    let n = samples.len() as f64;
    let d = samples.dim();
    let mut bins: Vec<(Vec<i64>, usize)> = bin_counts(samples.samples(), h).into_iter().collect();
    bins.sort();
    let vol = h.powi(d as i32);
    if d == 1 {
        let pieces = bins
            .iter()
            .map(|(j, c)| Piece::new(j[0] as f64 * h, (j[0] + 1) as f64 * h, *c as f64 / (n * vol)))
            .collect();
        Ok(ExactRepr::OneD(PiecewiseDensity1D::new(pieces)?))
    } else {
        let cells = bins.iter().map(|(j, c)| bin_cell(j, h, *c as f64 / (n * vol))).collect();
        Ok(ExactRepr::Grid(GridDensityND::new(d, cells)?))
    }
}

/// `sqrt(2 s³ / (N h^d τ))`: the L¹ deviation of the histogram from the
/// binned target that holds with probability at least `1 − τ`.
pub fn chebyshev_certificate(supp_measure: f64, n: usize, h: f64, tau: f64, dim: usize) -> Result<f64> {
    if !(h > 0.0) || n == 0 || dim == 0 {
        return Err(invalid("h, N and dim must be positive"));
    }
    if h >= supp_measure {
        return Err(invalid("bin width must be smaller than the support measure"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid("tau must lie in (0, 1)"));
    }
    Ok((2.0 * supp_measure.powi(3) / (n as f64 * h.powi(dim as i32) * tau)).sqrt())
}

/// Bin width equalizing the statistical and target-approximation terms:
/// `[(1/(L√d)) (2s/(Nτ))^{1/2}]^{2/(2+d)}`.
pub fn optimal_h(lipschitz: f64, dim: usize, supp_measure: f64, n: usize, tau: f64) -> f64 {
    let d = dim as f64;
    ((2.0 * supp_measure / (n as f64 * tau)).sqrt() / (lipschitz * d.sqrt())).powf(2.0 / (2.0 + d))
}

/// `C = (2s)^{(3+d)/(d+2)} (L√d)^{d/(d+2)}`.
pub fn bound_constant(lipschitz: f64, dim: usize, supp_measure: f64) -> f64 {
    let d = dim as f64;
    (2.0 * supp_measure).powf((3.0 + d) / (d + 2.0)) * (lipschitz * d.sqrt()).powf(d / (d + 2.0))
}

/// The three error contributions of the sample-driven bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub approx: f64,
    pub statistical: f64,
    pub target_approx: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.approx + self.statistical + self.target_approx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticCertificate {
    pub epsilon: f64,
    pub tau: f64,
    pub h: f64,
    pub n: usize,
    pub dim: usize,
    pub bound_terms: BoundTerms,
    /// Sum of the three terms at `h`.
    pub three_term_bound: f64,
    pub constant_c: f64,
    /// `ε + C (Nτ)^{−1/(2+d)}`.
    pub collapsed_bound: f64,
    /// Control error measured by the planner against the histogram, when a plan was run.
    pub certified_control_error: Option<f64>,
}

fn terms_at(eps: f64, lipschitz: f64, dim: usize, supp: f64, n: usize, tau: f64, h: f64) -> BoundTerms {
    BoundTerms {
        approx: eps,
        statistical: (2.0 * supp.powi(3) / (tau * n as f64 * h.powi(dim as i32))).sqrt(),
        target_approx: supp * lipschitz * h * (dim as f64).sqrt(),
    }
}

fn check_inputs(eps: f64, lipschitz: f64, dim: usize, supp: f64, n: usize, tau: f64) -> Result<()> {
    if !(eps >= 0.0) || !(lipschitz > 0.0) || !(supp > 0.0) || dim == 0 || n == 0 {
        return Err(invalid("eps must be nonnegative and L, s, d, N positive"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid("tau must lie in (0, 1)"));
    }
    Ok(())
}

fn certificate(eps: f64, lipschitz: f64, dim: usize, supp: f64, n: usize, tau: f64, h: f64) -> ProbabilisticCertificate {
    let terms = terms_at(eps, lipschitz, dim, supp, n, tau, h);
    let c = bound_constant(lipschitz, dim, supp);
    ProbabilisticCertificate {
        epsilon: eps,
        tau,
        h,
        n,
        dim,
        bound_terms: terms,
        three_term_bound: terms.total(),
        constant_c: c,
        collapsed_bound: eps + c * (n as f64 * tau).powf(-1.0 / (2.0 + dim as f64)),
        certified_control_error: None,
    }
}

/// Certificate at the optimal bin width.
pub fn combined_bound(
    eps: f64,
    lipschitz: f64,
    dim: usize,
    supp_measure: f64,
    n: usize,
    tau: f64,
) -> Result<ProbabilisticCertificate> {
    check_inputs(eps, lipschitz, dim, supp_measure, n, tau)?;
    let h = optimal_h(lipschitz, dim, supp_measure, n, tau);
    Ok(certificate(eps, lipschitz, dim, supp_measure, n, tau, h))
}

/// Plans from `rho0` to the histogram of `samples` and certifies the result
/// with probability `1 − τ`. The bin width and hence the schedule do not
/// depend on `τ`.
pub fn control_in_probability(
    rho0: &DensityFunction,
    samples: &SampleSet,
    eps: f64,
    tau: f64,
    lipschitz: f64,
    supp_measure: f64,
) -> Result<(ControlSchedule, ProbabilisticCertificate, PlanReport)> {
    let d = samples.dim();
    let h = optimal_h(lipschitz, d, supp_measure, samples.len(), 1.0);
    control_in_probability_at(rho0, samples, eps, tau, lipschitz, supp_measure, h)
}

/// As [`control_in_probability`] with the bin width `h` fixed by the caller.
pub fn control_in_probability_at(
    rho0: &DensityFunction,
    samples: &SampleSet,
    eps: f64,
    tau: f64,
    lipschitz: f64,
    supp_measure: f64,
    h: f64,
) -> Result<(ControlSchedule, ProbabilisticCertificate, PlanReport)> {
    let d = samples.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rho0.dim(),
        });
    }
    check_inputs(eps, lipschitz, d, supp_measure, samples.len(), tau)?;
    if !(eps > 0.0) || !(h > 0.0) {
        return Err(invalid("eps and h must be positive"));
    }
    let target = histogram_density(samples, h)?.scaled(1.0 - 0.5 * eps).to_function();
    let (schedule, report) = plan_nd(rho0, &target, eps, 1.0)?;
    let mut cert = certificate(eps, lipschitz, d, supp_measure, samples.len(), tau, h);
    cert.certified_control_error = Some(report.certified_error);
    Ok((schedule, cert, report))
}

/// Monte Carlo check of the histogram concentration lemma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub trials: usize,
    pub n: usize,
    pub h: f64,
    pub eps: f64,
    /// Fraction of trials with `‖ρ_{T,h,N} − ρ_{T,h}‖₁ ≤ ε`.
    pub coverage: f64,
    /// `max(0, 1 − 2 s³/(N h^d ε²))`.
    pub lemma_bound: f64,
    /// Binomial standard error of `coverage`.
    pub standard_error: f64,
    /// Fraction of trials with some bin probability off by more than `ε`.
    pub linf_failure_rate: f64,
    /// `s/(4 N h ε²)`, the union bound on that failure rate.
    pub linf_failure_bound: f64,
    pub passed: bool,
}

/// Repeats `trials` independent draws of `N` samples from `rho_t` and
/// counts how often the histogram is within `ε` of the binned target.
pub fn empirical_coverage_test(
    rho_t: &DensityFunction,
    h: f64,
    n: usize,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if trials < 100 {
        return Err(invalid("at least 100 trials are required"));
    }
    if !(h > 0.0) || !(eps > 0.0) || n == 0 {
        return Err(invalid("h, eps and N must be positive"));
    }
    let d = rho_t.dim();
    let lo = bin_of(rho_t.support_lo(), h);
    let hi: Vec<i64> = rho_t.support_hi().iter().map(|v| (v / h).ceil() as i64 - 1).collect();
    let mut probs: HashMap<Vec<i64>, f64> = HashMap::new();
    let mut idx = lo.clone();
    'outer: loop {
        let cell = bin_cell(&idx, h, 1.0);
        let p = rho_t.cell_mass(&cell.lower(), &cell.upper());
        if p > 0.0 {
            probs.insert(idx.clone(), p);
        }
        for k in 0..d {
            if idx[k] < hi[k] {
                idx[k] += 1;
                continue 'outer;
            }
            idx[k] = lo[k];
        }
        break;
    }
    let total: f64 = probs.values().sum();
    probs.values_mut().for_each(|p| *p /= total);

    let outcomes: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let pts = rho_t.sample(n, &mut rng)?;
            let counts = bin_counts(&pts, h);
            let mut l1 = 0.0;
            let mut linf: f64 = 0.0;
            for (j, p) in &probs {
                let z = counts.get(j).copied().unwrap_or(0) as f64 / n as f64;
                l1 += (z - p).abs();
                linf = linf.max((z - p).abs());
            }
            for (j, c) in &counts {
                if !probs.contains_key(j) {
                    let z = *c as f64 / n as f64;
                    l1 += z;
                    linf = linf.max(z);
                }
            }
            Ok((l1, linf))
        })
        .collect::<Result<_>>()?;

    let supp = rho_t
        .support_lo()
        .iter()
        .zip(rho_t.support_hi())
        .map(|(a, b)| b - a)
        .product::<f64>();
    let m = trials as f64;
    let coverage = outcomes.iter().filter(|(l1, _)| *l1 <= eps).count() as f64 / m;
    let linf_failure_rate = outcomes.iter().filter(|(_, li)| *li > eps).count() as f64 / m;
    let lemma_bound = (1.0 - 2.0 * supp.powi(3) / (n as f64 * h.powi(d as i32) * eps * eps)).max(0.0);
    let standard_error = (lemma_bound * (1.0 - lemma_bound) / m).sqrt().max(0.5 / m);
    Ok(CoverageReport {
        trials,
        n,
        h,
        eps,
        coverage,
        lemma_bound,
        standard_error,
        linf_failure_rate,
        linf_failure_bound: supp / (4.0 * n as f64 * h * eps * eps),
        passed: coverage >= lemma_bound - 3.0 * standard_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn histogram_example() {
        let s = SampleSet::new(1, vec![vec![0.1], vec![0.2], vec![0.6], vec![0.7]]).unwrap();
        let ExactRepr::OneD(p) = histogram_density(&s, 0.5).unwrap() else {
            panic!("expected 1-d histogram")
        };
        assert_abs_diff_eq!(p.eval(0.25), 1.0);
        assert_abs_diff_eq!(p.eval(0.75), 1.0);
        assert_abs_diff_eq!(p.mass(), 1.0);
    }

    #[test]
    fn histogram_single_bin_and_negative_bins() {
        let s = SampleSet::new(1, vec![vec![-0.3], vec![-0.2]]).unwrap();
        let ExactRepr::OneD(p) = histogram_density(&s, 0.5).unwrap() else {
            panic!("expected 1-d histogram")
        };
        assert_eq!(p.pieces(), &[Piece::new(-0.5, 0.0, 2.0)]);
        let s2 = SampleSet::new(2, vec![vec![0.1, 0.1], vec![0.9, 0.1], vec![0.9, 0.2]]).unwrap();
        let g = histogram_density(&s2, 0.5).unwrap();
        assert_abs_diff_eq!(g.mass(), 1.0, epsilon = 1e-15);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn chebyshev_example_and_shape() {
        assert_abs_diff_eq!(chebyshev_certificate(1.0, 200, 0.1, 0.1, 1).unwrap(), 1.0, epsilon = 1e-12);
        let a = chebyshev_certificate(1.0, 200, 0.1, 0.1, 1).unwrap();
        let b = chebyshev_certificate(1.0, 800, 0.1, 0.1, 1).unwrap();
        assert_relative_eq!(a / b, 2.0, max_relative = 1e-12);
        let c = chebyshev_certificate(1.0, 200, 0.1, 0.2, 1).unwrap();
        assert_relative_eq!(a / c, 2f64.sqrt(), max_relative = 1e-12);
        assert!(chebyshev_certificate(1.0, 200, 1.0, 0.1, 1).is_err());
    }

    #[test]
    fn optimal_h_example_and_equalization() {
        assert_relative_eq!(optimal_h(1.0, 1, 1.0, 800, 0.01), 0.5f64.powf(2.0 / 3.0), max_relative = 1e-12);
        for &(l, d, s, n, tau) in &[(1.0, 1, 1.0, 800, 0.01), (2.5, 2, 4.0, 5000, 0.05), (0.3, 3, 8.0, 100, 0.5)] {
            let h = optimal_h(l, d, s, n, tau);
            let t = terms_at(0.0, l, d, s, n, tau, h);
            assert_relative_eq!(t.statistical, t.target_approx, max_relative = 1e-9);
        }
        assert!(optimal_h(1.0, 2, 1.0, 10_000, 0.1) < optimal_h(1.0, 2, 1.0, 100, 0.1));
    }

    #[test]
    fn constant_example_and_collapse() {
        assert_relative_eq!(bound_constant(1.0, 1, 1.0), 2f64.powf(4.0 / 3.0), max_relative = 1e-12);
        let cert = combined_bound(0.1, 1.5, 2, 3.0, 1000, 0.05).unwrap();
        assert_relative_eq!(cert.three_term_bound, cert.collapsed_bound, max_relative = 1e-12);
        assert!(cert.bound_terms.statistical >= 0.0 && cert.bound_terms.target_approx >= 0.0);
    }

    #[test]
    fn coverage_vacuous_bound() {
        let rho = DensityFunction::from_piecewise(PiecewiseDensity1D::uniform(0.0, 1.0).unwrap());
        let r = empirical_coverage_test(&rho, 0.1, 50, 0.2, 100, 3).unwrap();
        assert_eq!(r.lemma_bound, 0.0);
        assert!(r.passed);
        assert!(empirical_coverage_test(&rho, 0.1, 50, 0.2, 99, 3).is_err());
    }
}
