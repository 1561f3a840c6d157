use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ntc_core::bounds::BoundReport;
use ntc_core::io::{parse_density_json, parse_schedule_json, schedule_to_json};
use ntc_core::planner1d::PlanReport;
use ntc_core::stats::{CoverageReport, SampleSet};
use ntc_core::transport::simulate_density;
use ntc_core::{DensityFunction, ExactRepr, PiecewiseDensity1D};
use tempfile::TempDir;

fn ntc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn plan_checkerboard_with_certificate() {
    let dir = TempDir::new().unwrap();
    let out = ntc(
        dir.path(),
        &["plan", "--dim", "2", "--source", "uniform-box", "--target", "checkerboard", "--eps", "0.1", "--certify", "--out", "s.json", "--report", "r.json"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(dir.path(), "r.json");
    let report: PlanReport = serde_json::from_str(&text).unwrap();
    assert!(report.certified_error <= 0.3, "{report:?}");
    assert_eq!(serde_json::to_string_pretty(&report).unwrap(), text);
    let schedule = parse_schedule_json(&read(dir.path(), "s.json")).unwrap();
    assert_eq!(schedule_to_json(&schedule), read(dir.path(), "s.json"));
    assert_eq!(schedule.dim(), 2);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    for tag in ["a", "b"] {
        let s = format!("s_{tag}.json");
        let r = format!("r_{tag}.json");
        let out = ntc(dir.path(), &["plan1d", "--target", "gaussian:0.3", "--eps", "0.05", "--out", &s, "--report", &r]);
        assert_eq!(code(&out), 0);
    }
    assert_eq!(read(dir.path(), "s_a.json"), read(dir.path(), "s_b.json"));
    assert_eq!(read(dir.path(), "r_a.json"), read(dir.path(), "r_b.json"));
}

#[test]
fn simulate_with_trace_matches_library() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(code(&ntc(p, &["plan1d", "--target", "triangle", "--out", "s.json", "--report", "r.json"])), 0);
    fs::write(p.join("d.json"), r#"{"pieces": [[0, 1, 1]]}"#).unwrap();
    let out = ntc(p, &["simulate", "--density", "d.json", "--schedule", "s.json", "--trace", "--out", "t.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let schedule = parse_schedule_json(&read(p, "s.json")).unwrap();
    let expected = simulate_density(&PiecewiseDensity1D::uniform(0.0, 1.0).unwrap(), &schedule).unwrap();
    assert_eq!(parse_density_json(&read(p, "t.json")).unwrap(), ExactRepr::OneD(expected.clone()));

    let trace = read(p, "trace.csv");
    let last = schedule.len().to_string();
    let rows: Vec<Vec<f64>> = trace
        .lines()
        .skip(1)
        .filter(|l| l.split(',').next() == Some(last.as_str()))
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), expected.len());
    for (row, piece) in rows.iter().zip(expected.pieces()) {
        assert_eq!(row, &vec![piece.left, piece.right, piece.height]);
    }
}

#[test]
fn simulate_particles() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    fs::write(p.join("s.json"), r#"{"dim": 1, "arcs": [{"duration": 1, "w": [1], "a": [1], "b": 0}]}"#).unwrap();
    fs::write(p.join("x.csv"), "x1\n-1\n0.5\n").unwrap();
    let out = ntc(p, &["simulate", "--particles", "x.csv", "--schedule", "s.json"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(values[0], -1.0);
    assert!((values[1] - 0.5 * std::f64::consts::E).abs() < 1e-12);
}

#[test]
fn dilation_figure_data() {
    let dir = TempDir::new().unwrap();
    let out = ntc(dir.path(), &["repro", "dilation-figure", "--out-dir", "fig", "--eta", "2", "--x0", "0.5"]);
    assert_eq!(code(&out), 0);
    let after = read(&dir.path().join("fig"), "dilation_after.csv");
    let pts: Vec<(f64, f64)> = after
        .lines()
        .skip(1)
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    // a block of height 2 on (0.5, 1) dilated by e^{ln 2}
    assert!((pts[1].0 - 0.5).abs() < 1e-12 && (pts[1].1 - 1.0).abs() < 1e-12);
    assert!((pts[2].0 - 1.5).abs() < 1e-12);
    assert!(dir.path().join("fig/compression_after.csv").is_file());
}

#[test]
fn bounds_report_and_violation() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(code(&ntc(p, &["plan1d", "--target", "triangle", "--eps", "0.05", "--out", "s.json", "--report", "r.json"])), 0);
    let report: PlanReport = serde_json::from_str(&read(p, "r.json")).unwrap();
    let r = (report.mesh_cells as f64 * report.h / 2.0).to_string();
    let h = report.h.to_string();
    let ok = ntc(p, &["bounds", "--schedule", "s.json", "--r", &r, "--h", &h, "--eps", "0.05", "--c", "0.5", "--k", "2", "--source", "uniform-box"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let parsed: BoundReport = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(parsed.passed && parsed.entropy_bound_satisfied == Some(true));

    let coarse = ntc(p, &["bounds", "--schedule", "s.json", "--r", "0.5", "--h", "1", "--eps", "0.05", "--c", "0.5", "--k", "2"]);
    assert_eq!(code(&coarse), 1);
    let parsed: BoundReport = serde_json::from_slice(&coarse.stdout).unwrap();
    assert!(!parsed.violations.is_empty());
}

#[test]
fn coverage_report() {
    let dir = TempDir::new().unwrap();
    let out = ntc(dir.path(), &["coverage", "--trials", "200", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    let report: CoverageReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.trials, 200);
    assert!(report.passed);
}

#[test]
fn sample_target_schedule_ignores_tau() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let rho = DensityFunction::from_piecewise(PiecewiseDensity1D::uniform(0.0, 1.0).unwrap());
    let samples = SampleSet::draw(&rho, 400, 11).unwrap();
    let mut csv = String::from("x1\n");
    for s in samples.samples() {
        csv.push_str(&format!("{}\n", s[0]));
    }
    fs::write(p.join("samples.csv"), csv).unwrap();
    for tau in ["0.1", "0.01"] {
        let out = ntc(
            p,
            &["sample-target", "--samples", "samples.csv", "--L", "1", "--tau", tau, "--out", &format!("s{tau}.json"), "--report", &format!("c{tau}.json")],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(read(p, "s0.1.json"), read(p, "s0.01.json"));
    assert_ne!(read(p, "c0.1.json"), read(p, "c0.01.json"));
}

#[test]
fn input_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(code(&ntc(p, &["plan", "--bogus"])), 2);
    assert_eq!(code(&ntc(p, &["frobnicate"])), 2);
    assert_eq!(code(&ntc(p, &["plan1d", "--target", "nope"])), 2);
    fs::write(p.join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&ntc(p, &["simulate", "--density", "bad.json", "--schedule", "bad.json"])), 2);
    let out = ntc(p, &["plan1d", "--target", "triangle", "--eps", "-1"]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
}
