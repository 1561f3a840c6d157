use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use ntc_core::bounds::{check_schedule_against_bounds, entropy_lower_bound_check, BoundParams};
use ntc_core::density::default_delta;
use ntc_core::io::{density_to_json, read_density, read_samples, read_schedule, resolve_density, schedule_to_json};
use ntc_core::planner1d::{build_dilation, plan_1d_exact, plan_1d_full, PlanReport};
use ntc_core::plannernd::{certify_seeded, plan_nd, CERT_SEED};
use ntc_core::stats::{control_in_probability, control_in_probability_at, empirical_coverage_test};
use ntc_core::transport::{simulate_boxes_trace, simulate_density_trace, simulate_exact, transport_particles};
use ntc_core::{ControlSchedule, ExactRepr, GridDensityND, ParticleCloud, PiecewiseDensity1D};
use serde::Serialize;

use crate::{BoundsArgs, CertifyArgs, Cli, Command, CoverageArgs, Plan1dArgs, PlanArgs, ReproArgs, SampleTargetArgs, SimulateArgs};

type Res<T> = Result<T, Box<dyn std::error::Error>>;

pub enum Status {
    Ok,
    Violated(String),
}

pub fn run(cli: Cli) -> Res<Status> {
    let seed = cli.seed;
    match cli.command {
        Command::Plan1d(a) => plan1d(a),
        Command::Plan(a) => plan(a, seed),
        Command::Simulate(a) => simulate(a),
        Command::Certify(a) => certify(a, seed),
        Command::SampleTarget(a) => sample_target(a),
        Command::Coverage(a) => coverage(a, seed),
        Command::Bounds(a) => bounds(a),
        Command::Repro(a) => repro(a),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Res<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Res<()> {
    emit(path, &serde_json::to_string_pretty(value)?)
}

fn exact_source(spec: &str, dim: usize) -> Res<ExactRepr> {
    let f = resolve_density(spec, dim)?;
    f.exact()
        .cloned()
        .ok_or_else(|| format!("`{spec}` is not piecewise constant; pass a density JSON or a box family").into())
}

/// `2ε` in one dimension, `3ε` otherwise.
fn plan_tolerance(dim: usize, eps: f64) -> f64 {
    if dim == 1 {
        2.0 * eps
    } else {
        3.0 * eps
    }
}

/// Particle estimates are allowed their sampling tolerance on top.
fn check(report: &PlanReport) -> Status {
    let allowed = report.tolerance + report.statistical_tolerance.unwrap_or(0.0);
    if report.certified_error <= allowed {
        Status::Ok
    } else {
        Status::Violated(format!("certified error {:.6e} > {:.6e}", report.certified_error, allowed))
    }
}

fn write_plan(schedule: &ControlSchedule, report: &PlanReport, out: Option<&PathBuf>, report_path: Option<&PathBuf>) -> Res<()> {
    emit(out.map(PathBuf::as_path), &schedule_to_json(schedule))?;
    match report_path {
        Some(p) => emit_json(Some(p), report)?,
        None => eprintln!(
            "{} arcs, certified error {:.4e} (tolerance {:.4e})",
            schedule.len(),
            report.certified_error,
            report.tolerance
        ),
    }
    Ok(())
}

fn plan1d(a: Plan1dArgs) -> Res<Status> {
    let target = resolve_density(&a.target, 1)?;
    if a.exact {
        let (schedule, report) = plan_1d_exact(&target, a.n)?;
        emit(a.out.as_deref(), &schedule_to_json(&schedule))?;
        emit_json(a.report.as_deref(), &report)?;
        if report.bv_b > report.bv_b_bound {
            return Ok(Status::Violated(format!("BV(b) {} > {}", report.bv_b, report.bv_b_bound)));
        }
        return Ok(Status::Ok);
    }
    let source = resolve_density(&a.source, 1)?;
    let (schedule, report) = plan_1d_full(&source, &target, a.eps, a.duration)?;
    info!("h = {}, δ = {}, {} arcs", report.h, report.delta, schedule.len());
    write_plan(&schedule, &report, a.out.as_ref(), a.report.as_ref())?;
    Ok(check(&report))
}

fn plan(a: PlanArgs, seed: u64) -> Res<Status> {
    let source = resolve_density(&a.source, a.dim)?;
    let target = resolve_density(&a.target, a.dim)?;
    let (schedule, mut report) = plan_nd(&source, &target, a.eps, a.duration)?;
    info!("h = {}, {} mesh cells per axis, {} arcs", report.h, report.mesh_cells, schedule.len());
    if a.certify {
        let rho0 = exact_source(&a.source, a.dim)?;
        let check = certify_seeded(&rho0, &schedule, &target, a.particles, CERT_SEED ^ seed)?;
        info!("independent check: {:?} error {:.4e}", check.method, check.certified_error);
        report.certified_error = report.certified_error.max(check.certified_error);
        report.method = check.method;
        report.statistical_tolerance = check.statistical_tolerance;
    }
    write_plan(&schedule, &report, a.out.as_ref(), a.report.as_ref())?;
    Ok(check(&report))
}

fn simulate(a: SimulateArgs) -> Res<Status> {
    let schedule = read_schedule(&a.schedule)?;
    if let Some(path) = a.particles {
        let cloud = ParticleCloud::read_csv(fs::File::open(&path)?)?;
        let moved = transport_particles(&cloud, &schedule)?;
        let mut buf = Vec::new();
        moved.write_csv(&mut buf)?;
        emit(a.out.as_deref(), String::from_utf8(buf)?.trim_end())?;
        return Ok(Status::Ok);
    }
    let density = read_density(a.density.as_deref().expect("clap requires one input"))?;
    let terminal = if a.trace {
        let mut csv = String::new();
        let out = match &density {
            ExactRepr::OneD(p) => {
                csv.push_str("arc,left,right,height\n");
                trace_pieces(&mut csv, 0, p);
                ExactRepr::OneD(simulate_density_trace(p, &schedule, |i, q| trace_pieces(&mut csv, i + 1, q))?)
            }
            ExactRepr::Grid(g) => {
                let d = g.dim();
                let cols: Vec<String> = (1..=d).map(|k| format!("lo{k}")).chain((1..=d).map(|k| format!("hi{k}"))).collect();
                writeln!(csv, "arc,{},height", cols.join(","))?;
                trace_cells(&mut csv, 0, g);
                ExactRepr::Grid(simulate_boxes_trace(g, &schedule, |i, q| trace_cells(&mut csv, i + 1, q))?)
            }
        };
        fs::write(&a.trace_out, csv)?;
        out
    } else {
        simulate_exact(&density, &schedule)?
    };
    emit(a.out.as_deref(), &density_to_json(&terminal))?;
    Ok(Status::Ok)
}

fn trace_pieces(csv: &mut String, arc: usize, p: &PiecewiseDensity1D) {
    for piece in p.pieces() {
        let _ = writeln!(csv, "{arc},{},{},{}", piece.left, piece.right, piece.height);
    }
}

fn trace_cells(csv: &mut String, arc: usize, g: &GridDensityND) {
    for c in g.cells() {
        let lo: Vec<String> = c.lower().iter().map(f64::to_string).collect();
        let hi: Vec<String> = c.upper().iter().map(f64::to_string).collect();
        let _ = writeln!(csv, "{arc},{},{},{}", lo.join(","), hi.join(","), c.height);
    }
}

fn certify(a: CertifyArgs, seed: u64) -> Res<Status> {
    let schedule = read_schedule(&a.schedule)?;
    let d = schedule.dim();
    let rho0 = exact_source(&a.source, d)?;
    let target = resolve_density(&a.target, d)?;
    let mut report = certify_seeded(&rho0, &schedule, &target, a.particles, CERT_SEED ^ seed)?;
    report.eps = a.eps;
    report.tolerance = plan_tolerance(d, a.eps);
    emit_json(a.out.as_deref(), &report)?;
    Ok(check(&report))
}

#[derive(Serialize)]
struct SampleTargetReport {
    certificate: ntc_core::stats::ProbabilisticCertificate,
    plan: PlanReport,
}

fn sample_target(a: SampleTargetArgs) -> Res<Status> {
    let samples = read_samples(&a.samples)?;
    let source = resolve_density(&a.source, samples.dim())?;
    let (schedule, certificate, plan) = if a.h == "auto" {
        control_in_probability(&source, &samples, a.eps, a.tau, a.lipschitz, a.supp)?
    } else {
        let h: f64 = a.h.parse().map_err(|_| format!("--h expects `auto` or a number, got `{}`", a.h))?;
        control_in_probability_at(&source, &samples, a.eps, a.tau, a.lipschitz, a.supp, h)?
    };
    info!("h = {}, bound {:.4e}", certificate.h, certificate.three_term_bound);
    emit(a.out.as_deref(), &schedule_to_json(&schedule))?;
    let status = check(&plan);
    emit_json(a.report.as_deref(), &SampleTargetReport { certificate, plan })?;
    Ok(status)
}

fn coverage(a: CoverageArgs, seed: u64) -> Res<Status> {
    let target = resolve_density(&a.target, a.dim)?;
    let report = empirical_coverage_test(&target, a.h, a.n, a.eps, a.trials, seed)?;
    emit_json(a.out.as_deref(), &report)?;
    Ok(if report.passed {
        Status::Ok
    } else {
        Status::Violated(format!("coverage {} below {}", report.coverage, report.lemma_bound))
    })
}

fn bounds(a: BoundsArgs) -> Res<Status> {
    let schedule = read_schedule(&a.schedule)?;
    let dim = schedule.dim();
    let params = BoundParams {
        r: a.r,
        h: a.h,
        delta: a.delta.unwrap_or_else(|| default_delta(a.h, a.eps, dim, a.r)),
        dim,
        eps: a.eps,
        c: a.c,
        k_height: a.k,
    };
    let mut report = check_schedule_against_bounds(&schedule, &params)?;
    if let Some(spec) = &a.source {
        let rho0 = exact_source(spec, dim)?;
        let terminal = simulate_exact(&rho0, &schedule)?;
        let e = entropy_lower_bound_check(&rho0, &terminal, &schedule)?;
        report.entropy_source = e.entropy_source;
        report.entropy_target = e.entropy_target;
        report.entropy_gap = e.entropy_gap;
        report.w_l1_norm = e.w_l1_norm;
        report.divergence_integral = e.divergence_integral;
        report.l2_product = e.l2_product;
        report.entropy_bound_satisfied = e.entropy_bound_satisfied;
        report.passed &= e.passed;
        report.violations.extend(e.violations);
    }
    emit_json(a.out.as_deref(), &report)?;
    Ok(if report.passed {
        Status::Ok
    } else {
        Status::Violated(report.violations.join("; "))
    })
}

fn repro(a: ReproArgs) -> Res<Status> {
    if !(a.eta > 0.0) || !(a.t > 0.0) {
        return Err("eta and t must be positive".into());
    }
    fs::create_dir_all(&a.out_dir)?;
    let before = PiecewiseDensity1D::block(a.x0, a.x0 + 1.0 / a.eta, a.eta)?;
    write_graph(&a.out_dir.join("dilation_before.csv"), &before)?;
    let mut worst: f64 = 0.0;
    for (name, w) in [("dilation_after.csv", a.w), ("compression_after.csv", -a.w)] {
        let len = (w * a.t).exp() / a.eta;
        let y2 = a.x0 + len;
        let schedule = build_dilation(a.x0, a.x0 + 1.0 / a.eta, y2, a.t)?;
        let after = simulate_exact(&ExactRepr::OneD(before.clone()), &schedule)?;
        let ExactRepr::OneD(after) = after else { unreachable!("1-d in, 1-d out") };
        let closed = PiecewiseDensity1D::block(a.x0, y2, a.eta * (-w * a.t).exp())?;
        worst = worst.max(after.l1_distance(&closed));
        write_graph(&a.out_dir.join(name), &after)?;
    }
    info!("max L1 deviation from the closed form: {worst:.3e}");
    Ok(if worst <= 1e-10 {
        Status::Ok
    } else {
        Status::Violated(format!("closed-form deviation {worst:.3e}"))
    })
}

fn write_graph(path: &Path, p: &PiecewiseDensity1D) -> Res<()> {
    let mut csv = String::from("x,density\n");
    for (x, y) in p.graph_points() {
        writeln!(csv, "{x},{y}")?;
    }
    fs::write(path, csv)?;
    Ok(())
}
