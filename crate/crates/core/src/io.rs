//! JSON and CSV readers and writers for densities, schedules, particles and
//! samples. Readers never panic on malformed input.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controls::ControlSchedule;
use crate::density::{DensityFunction, ExactRepr, GridDensityND, PiecewiseDensity1D};
use crate::error::{Error, Result};
use crate::families::named_density;
use crate::stats::SampleSet;
use crate::transport::ParticleCloud;

/// On-disk density: `{"pieces": [[l, r, h], …]}` or `{"dim": d, "cells": […]}`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DensityFile {
    OneD(PiecewiseDensity1D),
    Grid(GridDensityND),
}

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

pub fn parse_density_json(text: &str) -> Result<ExactRepr> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
    let file = if value.get("pieces").is_some() {
        DensityFile::OneD(serde_json::from_value(value).map_err(parse_err)?)
    } else if value.get("cells").is_some() {
        DensityFile::Grid(serde_json::from_value(value).map_err(parse_err)?)
    } else {
        return Err(Error::Parse("density JSON needs `pieces` or `cells`".into()));
    };
    Ok(match file {
        DensityFile::OneD(p) => ExactRepr::OneD(p),
        DensityFile::Grid(g) => ExactRepr::Grid(g),
    })
}

pub fn density_to_json(density: &ExactRepr) -> String {
    let file = match density {
        ExactRepr::OneD(p) => DensityFile::OneD(p.clone()),
        ExactRepr::Grid(g) => DensityFile::Grid(g.clone()),
    };
    serde_json::to_string_pretty(&file).expect("densities serialize")
}

pub fn parse_schedule_json(text: &str) -> Result<ControlSchedule> {
    serde_json::from_str(text).map_err(parse_err)
}

pub fn schedule_to_json(schedule: &ControlSchedule) -> String {
    serde_json::to_string_pretty(schedule).expect("schedules serialize")
}

pub fn parse_particles_csv(text: &str) -> Result<ParticleCloud> {
    ParticleCloud::read_csv(text.as_bytes())
}

pub fn parse_samples_csv(text: &str) -> Result<SampleSet> {
    SampleSet::read_csv(text.as_bytes())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn read_density(path: &Path) -> Result<ExactRepr> {
    parse_density_json(&read(path)?)
}

pub fn read_schedule(path: &Path) -> Result<ControlSchedule> {
    parse_schedule_json(&read(path)?)
}

pub fn read_samples(path: &Path) -> Result<SampleSet> {
    parse_samples_csv(&read(path)?)
}

/// A density file path, or a family name `name[:param]` in dimension `dim`.
pub fn resolve_density(spec: &str, dim: usize) -> Result<DensityFunction> {
    let path = Path::new(spec);
    if path.is_file() {
        let d = read_density(path)?;
        if d.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: d.dim(),
            });
        }
        Ok(d.to_function())
    } else {
        named_density(spec, dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::ControlArc;
    use crate::density::{Cell, Piece};

    #[test]
    fn density_roundtrip() {
        let p = ExactRepr::OneD(PiecewiseDensity1D::new(vec![Piece::new(0.0, 1.0, 0.5), Piece::new(2.0, 3.0, 1.5)]).unwrap());
        assert_eq!(parse_density_json(&density_to_json(&p)).unwrap(), p);
        let g = ExactRepr::Grid(GridDensityND::new(2, vec![Cell::new(vec![0.0, 0.0], vec![0.5, 1.0], 2.0)]).unwrap());
        assert_eq!(parse_density_json(&density_to_json(&g)).unwrap(), g);
    }

    #[test]
    fn schedule_roundtrip() {
        let s = ControlSchedule::new(1, vec![ControlArc::scalar(0.5, -1.0, 0.25, 2.0).unwrap()]).unwrap();
        assert_eq!(parse_schedule_json(&schedule_to_json(&s)).unwrap(), s);
    }

    #[test]
    fn malformed_inputs_error() {
        for bad in ["", "{}", "[1,2]", r#"{"pieces": [[1, 0, 1]]}"#, r#"{"dim": 2, "cells": [{"center": [0], "half_widths": [1], "height": 1}]}"#] {
            assert!(parse_density_json(bad).is_err(), "{bad}");
        }
        for bad in ["", r#"{"dim": 1, "arcs": [{"duration": -1, "w": [1], "a": [1], "b": 0}]}"#, r#"{"dim": 2, "arcs": [{"duration": 1, "w": [1], "a": [1], "b": 0}]}"#] {
            assert!(parse_schedule_json(bad).is_err(), "{bad}");
        }
        assert!(parse_samples_csv("x1\n").is_err());
        assert!(parse_samples_csv("1,2\n3\n").is_err());
        assert_eq!(parse_samples_csv("x1,x2\n1,2\n3,4\n").unwrap().len(), 2);
    }
}
