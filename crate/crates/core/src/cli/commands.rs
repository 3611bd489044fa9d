use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::bv::{weak_star_report, BvError, ConvergenceReport, SoftSettings};
use crate::hard::{surgery_solve, HardError};
use crate::numerics::quadrature::QuadOptions;
use crate::output::{fmt_f64, header_line};
use crate::potentials::{validate_hypotheses, PotentialError, ReferencePotential};
use crate::scattering::{hardening_sweep, scatter_error, soft_scatter_with, ScatterError, SweepOptions};
use crate::soft::{integrate, SoftError, SoftProblem};

use super::config::ExperimentConfig;
use super::CliError;

pub const VALIDATION_GRID: usize = 10_000;

impl From<PotentialError> for CliError {
    fn from(e: PotentialError) -> Self {
        match e {
            PotentialError::Root(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SoftError> for CliError {
    fn from(e: SoftError) -> Self {
        match e {
            SoftError::InvalidProblem(_) | SoftError::Coincident => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<HardError> for CliError {
    fn from(e: HardError) -> Self {
        match e {
            HardError::Overlap(_) | HardError::NonFinite => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ScatterError> for CliError {
    fn from(e: ScatterError) -> Self {
        match e {
            ScatterError::NotOnContact(_)
            | ScatterError::NotIncoming(_)
            | ScatterError::NotCollisional(_)
            | ScatterError::BadGrid => CliError::Config(e.to_string()),
            ScatterError::Potential(p) => p.into(),
            ScatterError::Soft(s) => s.into(),
            ScatterError::Hard(h) => h.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<BvError> for CliError {
    fn from(e: BvError) -> Self {
        match e {
            BvError::EmptyInterval(..) => CliError::Config(e.to_string()),
            BvError::Soft(s) => s.into(),
            BvError::Hard(h) => h.into(),
            BvError::Potential(p) => p.into(),
            BvError::Scatter(s) => s.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Writes `body` under the config's output directory.
fn write_output(cfg: &ExperimentConfig, name: &str, body: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    let path = cfg.out.join(name);
    fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn csv_with_header<F>(cfg: &ExperimentConfig, name: &str, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    writeln!(buf, "{}", header_line(&cfg.content_hash())).expect("write to memory");
    body(&mut buf).expect("write to memory");
    write_output(cfg, name, &buf)
}

fn json_document<T: Serialize>(cfg: &ExperimentConfig, payload: &T) -> Vec<u8> {
    let mut doc = json!({
        "tool": format!("hardsphere {}", env!("CARGO_PKG_VERSION")),
        "config_sha256": cfg.content_hash(),
    });
    if let (Value::Object(m), Value::Object(p)) = (&mut doc, serde_json::to_value(payload).expect("serializable")) {
        m.extend(p);
    }
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
    text.push('\n');
    text.into_bytes()
}

fn base_potential(cfg: &ExperimentConfig) -> Result<ReferencePotential, CliError> {
    Ok(cfg.potential.build()?)
}

fn soft_settings(cfg: &ExperimentConfig) -> SoftSettings {
    SoftSettings {
        rel_tol: cfg.tolerances.rel_tol,
        abs_tol: cfg.tolerances.abs_tol,
    }
}

pub fn validate_potential(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut p = base_potential(cfg)?;
    let report = validate_hypotheses(&mut p, VALIDATION_GRID)?;
    println!("potential: {}", report.label);
    if let Some(c) = report.constants {
        println!("c1 = {}", fmt_f64(c.c1));
        println!("c2 = {}", fmt_f64(c.c2));
        println!("kappa1 = {}", fmt_f64(c.kappa1));
        println!("kappa2 = {}", fmt_f64(c.kappa2));
        println!("r0 = {}", fmt_f64(c.r0));
    }
    println!("convex_on_grid = {}", report.convex_on_grid);
    for f in &report.failures {
        println!("failure {} at r = {}: {}", f.hypothesis, fmt_f64(f.r), f.detail);
    }
    if report.passed {
        println!("hypotheses satisfied");
        Ok(())
    } else {
        Err(CliError::Hypothesis(format!(
            "{} hypothesis check(s) failed",
            report.failures.len()
        )))
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let pot = base_potential(cfg)?.harden(cfg.eps)?;
    let t = cfg.tolerances;
    let problem = SoftProblem::new(pot, cfg.datum.phase_point(), cfg.interval).with_tolerances(t.rel_tol, t.abs_tol);
    let tr = integrate(&problem)?;
    csv_with_header(cfg, "trajectory.csv", |buf| tr.write_csv(buf))?;
    println!("steps = {}", tr.times.len());
    println!("energy_drift = {}", fmt_f64(tr.energy_drift));
    Ok(())
}

pub fn surgery(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let hard = surgery_solve(&cfg.datum.phase_point())?;
    let (t0, t1) = cfg.interval;
    let n = cfg.samples;
    csv_with_header(cfg, "surgery.csv", |buf| {
        writeln!(buf, "t,x1,x2,x3,xbar1,xbar2,xbar3,v1,v2,v3,vbar1,vbar2,vbar3,dist")?;
        for j in 0..n {
            let t = t0 + (t1 - t0) * j as f64 / (n - 1) as f64;
            let z = hard.eval(t);
            let mut row = vec![fmt_f64(t)];
            row.extend(z.to_vector().iter().map(|c| fmt_f64(*c)));
            row.push(fmt_f64(z.separation()));
            writeln!(buf, "{}", row.join(","))?;
        }
        Ok(())
    })?;
    match hard.collision_time {
        Some(tau) if !hard.grazing => println!("collision at t = {}", fmt_f64(tau)),
        Some(tau) => println!("grazing contact at t = {}", fmt_f64(tau)),
        None => println!("no collision"),
    }
    Ok(())
}

pub fn scatter(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let pot = base_potential(cfg)?.harden(cfg.eps)?;
    let res = soft_scatter_with(
        &cfg.datum.phase_point(),
        &pot,
        &QuadOptions::abs(cfg.tolerances.quad_tol),
    )?;
    let err = scatter_error(&res)?;
    let payload = json!({
        "eps": cfg.eps,
        "result": res,
        "exit_time": res.exit_time(),
        "scatter_err": err,
    });
    write_output(cfg, "scatter.json", &json_document(cfg, &payload))?;
    println!("tau_star = {}", fmt_f64(res.analysis.tau_star));
    println!("scatter_err = {}", fmt_f64(err));
    Ok(())
}

fn with_pool<T: Send>(cfg: &ExperimentConfig, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn write_variation(cfg: &ExperimentConfig, rep: &ConvergenceReport) -> Result<(), CliError> {
    csv_with_header(cfg, "variation.csv", |buf| {
        writeln!(
            buf,
            "eps,p_var,converged,level,l1_distance,momentum_residual,energy_drift,tau_minus,tau_plus"
        )?;
        for r in &rep.bound.rows {
            writeln!(
                buf,
                "{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.eps),
                fmt_f64(r.p_var),
                r.converged,
                r.level,
                fmt_f64(r.l1_distance),
                fmt_f64(r.momentum_residual),
                fmt_f64(r.energy_drift),
                fmt_f64(r.tau_minus),
                fmt_f64(r.tau_plus),
            )?;
        }
        Ok(())
    })?;
    let payload = json!({
        "summary": rep.summary(),
        "var_ratio": rep.bound.ratio,
        "bounded": rep.bound.bounded,
        "lower_semicontinuous": rep.bound.lower_semicontinuous,
        "l1_strictly_decreasing": rep.l1_strictly_decreasing,
        "l1_fit": rep.l1_fit,
        "limit_residuals": rep.limit,
    });
    write_output(cfg, "variation_summary.json", &json_document(cfg, &payload))?;
    let s = rep.summary();
    println!("l1_slope = {}", fmt_f64(s.l1_slope));
    println!("var_max = {}", fmt_f64(s.var_max));
    println!("var_hard = {}", fmt_f64(s.var_hard));
    Ok(())
}

fn run_variation(cfg: &ExperimentConfig, base: &ReferencePotential) -> Result<ConvergenceReport, CliError> {
    let z0 = cfg.datum.phase_point();
    let grid = cfg.eps_grid.values();
    let settings = soft_settings(cfg);
    Ok(with_pool(cfg, || {
        weak_star_report(&z0, base, &grid, cfg.interval, &settings)
    })??)
}

pub fn variation(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let base = base_potential(cfg)?;
    let rep = run_variation(cfg, &base)?;
    write_variation(cfg, &rep)
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let base = base_potential(cfg)?;
    let z0 = cfg.datum.phase_point();
    let grid = cfg.eps_grid.values();
    let opts = SweepOptions {
        quad: QuadOptions::abs(cfg.tolerances.quad_tol),
        ..SweepOptions::default()
    };
    let table = with_pool(cfg, || hardening_sweep(&z0, &base, &grid, &opts))??;
    csv_with_header(cfg, "sweep.csv", |buf| table.write_csv(buf))?;
    let summary = table.summary();
    let payload = json!({
        "slope": summary.slope,
        "slope_ci": summary.slope_ci,
        "beta_inverse": summary.beta_inverse,
        "tau_fit": table.tau_fit,
        "scatter_fit": table.scatter_fit(opts.fit_skip),
    });
    write_output(cfg, "sweep_summary.json", &json_document(cfg, &payload))?;
    println!("slope = {}", fmt_f64(summary.slope));
    println!("beta_inverse = {}", fmt_f64(summary.beta_inverse));

    let rep = run_variation(cfg, &base)?;
    write_variation(cfg, &rep)
}
