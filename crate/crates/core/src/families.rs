//! Named built-in densities on the unit cube `[0, 1]^d`, selected by
//! strings of the form `name[:param]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::density::{Cell, DensityFunction, GridDensityND, Piece, PiecewiseDensity1D};
use crate::error::{invalid, Error, Result};
use crate::quadrature::gauss_legendre;

pub const DEFAULT_SIGMA: f64 = 0.2;
pub const DEFAULT_CHECKERBOARD: usize = 2;
pub const DEFAULT_BETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    UniformBox,
    /// Gaussian centred at the cube midpoint with standard deviation `sigma`, truncated to the cube.
    GaussianTruncated { sigma: f64 },
    /// `Π 2(1 − x_k)`.
    Triangle,
    /// `n^d` cells with heights `3/2` and `1/2` alternating, normalized.
    Checkerboard { n: usize },
    /// `Π (1 + β(x_k − ½))`, `|β| < 2`.
    Smooth { beta: f64 },
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => match s.strip_suffix(')').and_then(|t| t.split_once('(')) {
                Some((n, p)) => (n.trim(), Some(p.trim())),
                None => (s, None),
            },
        };
        let real = |default: f64| -> Result<f64> {
            match param {
                None => Ok(default),
                Some(p) => p
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse(format!("bad parameter `{p}` for `{name}`"))),
            }
        };
        let no_param = |f: Family| -> Result<Family> {
            match param {
                None => Ok(f),
                Some(p) => Err(Error::Parse(format!("`{name}` takes no parameter, got `{p}`"))),
            }
        };
        let family = match name {
            "uniform-box" | "uniform" => no_param(Family::UniformBox)?,
            "gaussian-truncated" | "truncated-gaussian" | "gaussian" => Family::GaussianTruncated {
                sigma: real(DEFAULT_SIGMA)?,
            },
            "triangle" => no_param(Family::Triangle)?,
            "checkerboard" => Family::Checkerboard {
                n: match param {
                    None => DEFAULT_CHECKERBOARD,
                    Some(p) => p
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad parameter `{p}` for `{name}`")))?,
                },
            },
            "smooth" | "smooth-class-c" => Family::Smooth {
                beta: real(DEFAULT_BETA)?,
            },
            _ => return Err(Error::Parse(format!("unknown density family `{name}`"))),
        };
        family.validate()?;
        Ok(family)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::UniformBox => write!(f, "uniform-box"),
            Family::GaussianTruncated { sigma } => write!(f, "gaussian-truncated:{sigma}"),
            Family::Triangle => write!(f, "triangle"),
            Family::Checkerboard { n } => write!(f, "checkerboard:{n}"),
            Family::Smooth { beta } => write!(f, "smooth:{beta}"),
        }
    }
}

impl Family {
    fn validate(&self) -> Result<()> {
        match *self {
            Family::GaussianTruncated { sigma } if !(sigma > 0.0) => Err(invalid("sigma must be positive")),
            Family::Checkerboard { n } if n == 0 || n > 64 => Err(invalid("checkerboard size must be in 1..=64")),
            Family::Smooth { beta } if !(beta.abs() < 2.0) => Err(invalid("|beta| must be below 2")),
            _ => Ok(()),
        }
    }

    /// The density in dimension `dim`, with its regularity constants.
    pub fn density(&self, dim: usize) -> Result<DensityFunction> {
        self.validate()?;
        if dim == 0 || dim > 6 {
            return Err(invalid("families are available in dimensions 1..=6"));
        }
        let d = dim as i32;
        let sd = (dim as f64).sqrt();
        let f = match *self {
            Family::UniformBox => {
                if dim == 1 {
                    DensityFunction::from_piecewise(PiecewiseDensity1D::uniform(0.0, 1.0)?)
                } else {
                    let cell = Cell::from_bounds(&vec![0.0; dim], &vec![1.0; dim], 1.0);
                    DensityFunction::from_grid(GridDensityND::new(dim, vec![cell])?)
                }
                .with_lipschitz(0.0)
                .with_bounds(Some(1.0), Some(1.0))
            }
            Family::GaussianTruncated { sigma } => {
                let g = move |x: f64| (-0.5 * ((x - 0.5) / sigma).powi(2)).exp();
                let z = gauss_legendre(g, 0.0, 1.0, 64);
                let peak = 1.0 / z;
                let floor = g(0.0) / z;
                let slope = (-0.5f64).exp() / (sigma * z);
                DensityFunction::new(vec![0.0; dim], vec![1.0; dim], move |x| {
                    x.iter().map(|&v| g(v)).product::<f64>() / z.powi(d)
                })?
                .with_lipschitz(sd * slope * peak.powi(d - 1))
                .with_bounds(Some(floor.powi(d)), Some(peak.powi(d)))
            }
            Family::Triangle => DensityFunction::new(vec![0.0; dim], vec![1.0; dim], |x| {
                x.iter().map(|&v| 2.0 * (1.0 - v)).product()
            })?
            .with_lipschitz(sd * 2f64.powi(d))
            .with_bounds(None, Some(2f64.powi(d))),
            Family::Checkerboard { n } => checkerboard(n, dim)?,
            Family::Smooth { beta } => {
                let top = 1.0 + 0.5 * beta.abs();
                DensityFunction::new(vec![0.0; dim], vec![1.0; dim], move |x| {
                    x.iter().map(|&v| 1.0 + beta * (v - 0.5)).product()
                })?
                .with_lipschitz(sd * beta.abs() * top.powi(d - 1))
                .with_bounds(Some((1.0 - 0.5 * beta.abs()).powi(d)), Some(top.powi(d)))
            }
        };
        Ok(f)
    }
}

fn checkerboard(n: usize, dim: usize) -> Result<DensityFunction> {
    let total = n.checked_pow(dim as u32).filter(|&t| t <= 1 << 20).ok_or_else(|| invalid("checkerboard too large"))?;
    let h = 1.0 / n as f64;
    let mut weights = Vec::with_capacity(total);
    let mut boxes = Vec::with_capacity(total);
    for flat in 0..total {
        let mut idx = flat;
        let mut parity = 0;
        let mut lo = vec![0.0; dim];
        for l in lo.iter_mut() {
            let i = idx % n;
            idx /= n;
            parity += i;
            *l = i as f64 * h;
        }
        weights.push(if parity % 2 == 0 { 1.5 } else { 0.5 });
        boxes.push(lo);
    }
    let norm = weights.iter().sum::<f64>() / total as f64;
    let f = if dim == 1 {
        let pieces = boxes
            .iter()
            .zip(&weights)
            .map(|(lo, w)| Piece::new(lo[0], lo[0] + h, w / norm))
            .collect();
        DensityFunction::from_piecewise(PiecewiseDensity1D::new(pieces)?)
    } else {
        let cells = boxes
            .iter()
            .zip(&weights)
            .map(|(lo, w)| {
                let hi: Vec<f64> = lo.iter().map(|v| v + h).collect();
                Cell::from_bounds(lo, &hi, w / norm)
            })
            .collect();
        DensityFunction::from_grid(GridDensityND::new(dim, cells)?)
    };
    let lo = weights.iter().cloned().fold(f64::INFINITY, f64::min) / norm;
    let hi = weights.iter().cloned().fold(0.0, f64::max) / norm;
    Ok(f.with_bounds(Some(lo), Some(hi)))
}

/// Parses `name[:param]` and builds the family in dimension `dim`.
pub fn named_density(spec: &str, dim: usize) -> Result<DensityFunction> {
    spec.parse::<Family>()?.density(dim)
}
