//! Variation and L¹ diagnostics for velocity paths, comparing soft
//! trajectories against their hard-sphere limit.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{angular_momentum, kinetic_energy, linear_momentum, PhasePoint, Vec3, Vec6};
use crate::hard::{surgery_solve, HardError, HardTrajectory};
use crate::numerics::fit::{log_log_fit, LineFit};
use crate::numerics::quadrature::{integrate_with_breaks, QuadError, QuadOptions};
use crate::potentials::{PotentialError, ReferencePotential};
use crate::scattering::{check_grid, ScatterError};
use crate::soft::{detect_contact_window, integrate, ContactWindow, SampledTrajectory, SoftError, SoftProblem};

pub const MIN_LEVEL: u32 = 10;
pub const MAX_LEVEL: u32 = 20;
pub const REFINE_TOL: f64 = 1e-8;
pub const L1_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BvError {
    #[error("partition needs at least two strictly increasing points inside ({0}, {1})")]
    BadPartition(f64, f64),
    #[error("partition point {t} lies outside the path domain ({lo}, {hi})")]
    OutsideDomain { t: f64, lo: f64, hi: f64 },
    #[error("interval ({0}, {1}) is empty")]
    EmptyInterval(f64, f64),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Soft(#[from] SoftError),
    #[error(transparent)]
    Hard(#[from] HardError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
}

/// A 6-vector valued function of time.
pub trait Path: Sync {
    fn domain(&self) -> (f64, f64);
    fn eval(&self, t: f64) -> Vec6;
    /// Times where the path may fail to be smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl Path for HardTrajectory {
    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn eval(&self, t: f64) -> Vec6 {
        self.velocities_at(t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.collision_time.into_iter().collect()
    }
}

/// Velocities `(v^ε, v̄^ε)` of a soft trajectory.
pub struct SoftVelocityPath<'a> {
    pub trajectory: &'a SampledTrajectory,
    pub window: ContactWindow,
}

impl<'a> SoftVelocityPath<'a> {
    pub fn new(trajectory: &'a SampledTrajectory) -> Result<Self, BvError> {
        Ok(Self {
            trajectory,
            window: detect_contact_window(trajectory)?,
        })
    }
}

impl Path for SoftVelocityPath<'_> {
    fn domain(&self) -> (f64, f64) {
        self.trajectory.domain()
    }

    fn eval(&self, t: f64) -> Vec6 {
        self.trajectory.velocities_at(t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        if self.window.none_flag {
            Vec::new()
        } else {
            vec![self.window.tau_minus, self.window.tau_plus]
        }
    }
}

/// Closure-backed path.
pub struct FnPath<F> {
    pub f: F,
    pub domain: (f64, f64),
    pub breaks: Vec<f64>,
}

impl<F: Fn(f64) -> Vec6 + Sync> FnPath<F> {
    pub fn new(f: F, domain: (f64, f64)) -> Self {
        Self {
            f,
            domain,
            breaks: Vec::new(),
        }
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }
}

impl<F: Fn(f64) -> Vec6 + Sync> Path for FnPath<F> {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn eval(&self, t: f64) -> Vec6 {
        (self.f)(t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub points: Vec<f64>,
}

impl Partition {
    pub fn new(points: Vec<f64>, interval: (f64, f64)) -> Result<Self, BvError> {
        let (a, b) = interval;
        let ok = points.len() >= 2 && points.windows(2).all(|w| w[0] < w[1]) && points.iter().all(|&t| t > a && t < b);
        if ok {
            Ok(Self { points })
        } else {
            Err(BvError::BadPartition(a, b))
        }
    }

    /// Interior points `T₀ + j(T₁ - T₀)/n`, `j = 1..n-1`.
    pub fn uniform(interval: (f64, f64), n: usize) -> Result<Self, BvError> {
        let (a, b) = interval;
        let h = (b - a) / n as f64;
        Self::new((1..n).map(|j| a + j as f64 * h).collect(), interval)
    }
}

fn check_domain<P: Path + ?Sized>(u: &P, t: f64) -> Result<(), BvError> {
    let (lo, hi) = u.domain();
    if t < lo || t > hi {
        Err(BvError::OutsideDomain { t, lo, hi })
    } else {
        Ok(())
    }
}

fn increments(values: &[Vec6]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// `Σ |u(t_{j+1}) - u(t_j)|` over the partition.
pub fn pointwise_variation<P: Path + ?Sized>(u: &P, part: &Partition) -> Result<f64, BvError> {
    for &t in [part.points[0], *part.points.last().unwrap()].iter() {
        check_domain(u, t)?;
    }
    let values: Vec<Vec6> = part.points.iter().map(|&t| u.eval(t)).collect();
    Ok(increments(&values))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationReport {
    pub p_var: f64,
    /// Partition size `N = 2^level` of the reported value.
    pub level: u32,
    pub l1_norm: f64,
    pub bv_norm: f64,
    pub converged: bool,
    /// `pVar` at each visited level, coarsest first.
    pub history: Vec<f64>,
}

fn check_interval(interval: (f64, f64)) -> Result<(), BvError> {
    if interval.0 < interval.1 && interval.0.is_finite() && interval.1.is_finite() {
        Ok(())
    } else {
        Err(BvError::EmptyInterval(interval.0, interval.1))
    }
}

/// Doubling uniform partitions from `2^10` points; converged once two
/// successive doublings change `pVar` by less than `1e-8` relative.
pub fn variation_refined<P: Path + ?Sized>(u: &P, interval: (f64, f64)) -> Result<VariationReport, BvError> {
    check_interval(interval)?;
    let (a, b) = interval;
    let n0 = 1usize << MIN_LEVEL;
    let part = Partition::uniform(interval, n0)?;
    check_domain(u, part.points[0])?;
    check_domain(u, *part.points.last().unwrap())?;

    let mut values: Vec<Vec6> = part.points.iter().map(|&t| u.eval(t)).collect();
    let mut history = vec![increments(&values)];
    let mut level = MIN_LEVEL;
    let mut stable = 0;
    while level < MAX_LEVEL && stable < 2 {
        level += 1;
        let n = 1usize << level;
        let h = (b - a) / n as f64;
        // new points sit at odd indices of the refined partition
        let fresh: Vec<Vec6> = (0..(n / 2))
            .into_par_iter()
            .map(|i| u.eval(a + (2 * i + 1) as f64 * h))
            .collect();
        let mut merged = Vec::with_capacity(n - 1);
        for (i, f) in fresh.iter().enumerate() {
            merged.push(*f);
            if i < values.len() {
                merged.push(values[i]);
            }
        }
        values = merged;
        let p = increments(&values);
        let prev = *history.last().unwrap();
        let change = (p - prev).abs() / p.abs().max(f64::MIN_POSITIVE);
        stable = if change < REFINE_TOL || p == prev {
            stable + 1
        } else {
            0
        };
        history.push(p);
    }
    let p_var = *history.last().unwrap();
    let l1 = integrate_with_breaks(|t| u.eval(t).norm(), a, b, &u.breakpoints(), &QuadOptions::abs(L1_TOL))?;
    Ok(VariationReport {
        p_var,
        level,
        l1_norm: l1.value,
        bv_norm: l1.value + p_var,
        converged: stable >= 2,
        history,
    })
}

/// `∫ |u - w| dt`, split at the breakpoints of both paths.
pub fn l1_distance<P: Path + ?Sized, Q: Path + ?Sized>(u: &P, w: &Q, interval: (f64, f64)) -> Result<f64, BvError> {
    check_interval(interval)?;
    for t in [interval.0, interval.1] {
        check_domain(u, t)?;
        check_domain(w, t)?;
    }
    let mut breaks = u.breakpoints();
    breaks.extend(w.breakpoints());
    let est = integrate_with_breaks(
        |t| (u.eval(t) - w.eval(t)).norm(),
        interval.0,
        interval.1,
        &breaks,
        &QuadOptions::abs(L1_TOL),
    )?;
    Ok(est.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for SoftSettings {
    fn default() -> Self {
        Self {
            rel_tol: crate::soft::DEFAULT_REL_TOL,
            abs_tol: crate::soft::DEFAULT_ABS_TOL,
        }
    }
}

/// Per-ε diagnostics of the soft velocity path on the interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonRow {
    pub eps: f64,
    pub p_var: f64,
    pub converged: bool,
    pub level: u32,
    pub l1_distance: f64,
    /// Largest deviation of `v + v̄` from its initial value over the steps.
    pub momentum_residual: f64,
    pub energy_drift: f64,
    pub tau_minus: f64,
    pub tau_plus: f64,
}

fn epsilon_row(
    z0: &PhasePoint,
    base: &ReferencePotential,
    eps: f64,
    interval: (f64, f64),
    hard: &HardTrajectory,
    settings: &SoftSettings,
) -> Result<EpsilonRow, BvError> {
    let pot = base.harden(eps)?;
    let p = SoftProblem::new(pot, *z0, interval).with_tolerances(settings.rel_tol, settings.abs_tol);
    let tr = integrate(&p)?;
    let path = SoftVelocityPath::new(&tr)?;
    let var = variation_refined(&path, interval)?;
    let l1 = l1_distance(&path, hard, interval)?;
    let p0 = linear_momentum(z0);
    let momentum_residual = tr
        .states
        .iter()
        .map(|z| (linear_momentum(z) - p0).amax())
        .fold(0.0, f64::max);
    Ok(EpsilonRow {
        eps,
        p_var: var.p_var,
        converged: var.converged,
        level: var.level,
        l1_distance: l1,
        momentum_residual,
        energy_drift: tr.energy_drift,
        tau_minus: path.window.tau_minus,
        tau_plus: path.window.tau_plus,
    })
}

fn rows_for_grid(
    z0: &PhasePoint,
    base: &ReferencePotential,
    eps_grid: &[f64],
    interval: (f64, f64),
    settings: &SoftSettings,
) -> Result<(HardTrajectory, Vec<EpsilonRow>), BvError> {
    check_grid(eps_grid)?;
    check_interval(interval)?;
    let hard = surgery_solve(z0)?;
    let rows = eps_grid
        .par_iter()
        .map(|&eps| epsilon_row(z0, base, eps, interval, &hard, settings))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((hard, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub rows: Vec<EpsilonRow>,
    pub var_max: f64,
    pub var_hard: f64,
    /// `var_max / var_hard`; `None` when the hard path does not jump.
    pub ratio: Option<f64>,
    /// `var_max ≤ 1.5 pVar(largest ε) + var_hard`.
    pub bounded: bool,
    /// `var_hard ≤ pVar(V^ε) + 1e-6` at every ε.
    pub lower_semicontinuous: bool,
}

fn bound_report(rows: Vec<EpsilonRow>, hard: &HardTrajectory, interval: (f64, f64)) -> Result<BoundReport, BvError> {
    let var_hard = match hard.collision_time {
        Some(tau) if tau > interval.0 && tau < interval.1 => {
            let part = Partition::new(vec![0.5 * (interval.0 + tau), 0.5 * (tau + interval.1)], interval)?;
            pointwise_variation(hard, &part)?
        }
        _ => 0.0,
    };
    let var_max = rows.iter().map(|r| r.p_var).fold(0.0, f64::max);
    let first = rows.first().map(|r| r.p_var).unwrap_or(0.0);
    Ok(BoundReport {
        var_max,
        var_hard,
        ratio: (var_hard > 0.0).then(|| var_max / var_hard),
        bounded: var_max.is_finite() && var_max <= 1.5 * first + var_hard,
        lower_semicontinuous: rows.iter().all(|r| var_hard <= r.p_var + 1e-6),
        rows,
    })
}

/// Variation of the soft velocities across the grid against the hard limit.
pub fn uniform_bound_check(
    z0: &PhasePoint,
    base: &ReferencePotential,
    eps_grid: &[f64],
    interval: (f64, f64),
    settings: &SoftSettings,
) -> Result<BoundReport, BvError> {
    let (hard, rows) = rows_for_grid(z0, base, eps_grid, interval, settings)?;
    bound_report(rows, &hard, interval)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservationResiduals {
    pub linear_momentum: f64,
    pub angular_momentum: f64,
    pub kinetic_energy: f64,
    /// Smallest centre distance of the hard path over the samples.
    pub min_separation: f64,
}

impl ConservationResiduals {
    pub fn max(&self) -> f64 {
        self.linear_momentum.max(self.angular_momentum).max(self.kinetic_energy)
    }
}

/// Conservation laws and non-penetration of the hard path at `samples` times.
pub fn limit_residuals(hard: &HardTrajectory, interval: (f64, f64), samples: usize) -> ConservationResiduals {
    let z0 = hard.initial;
    let a = Vec3::new(0.25, -0.5, 1.0);
    let (p0, l0, k0) = (linear_momentum(&z0), angular_momentum(&z0, &a), kinetic_energy(&z0));
    let mut out = ConservationResiduals {
        linear_momentum: 0.0,
        angular_momentum: 0.0,
        kinetic_energy: 0.0,
        min_separation: f64::INFINITY,
    };
    let n = samples.max(2);
    for j in 0..n {
        let t = interval.0 + (interval.1 - interval.0) * j as f64 / (n - 1) as f64;
        let z = hard.eval(t);
        out.linear_momentum = out.linear_momentum.max((linear_momentum(&z) - p0).amax());
        out.angular_momentum = out.angular_momentum.max((angular_momentum(&z, &a) - l0).amax());
        out.kinetic_energy = out.kinetic_energy.max((kinetic_energy(&z) - k0).abs() / k0.max(1.0));
        out.min_separation = out.min_separation.min(z.separation());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub l1_slope: f64,
    pub var_max: f64,
    pub var_hard: f64,
    pub conservation_max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub bound: BoundReport,
    pub l1_fit: Option<LineFit>,
    pub l1_strictly_decreasing: bool,
    pub limit: ConservationResiduals,
    pub beta: f64,
}

/// Bounded variation plus L¹ convergence of `V^ε` to the hard velocities.
pub fn weak_star_report(
    z0: &PhasePoint,
    base: &ReferencePotential,
    eps_grid: &[f64],
    interval: (f64, f64),
    settings: &SoftSettings,
) -> Result<ConvergenceReport, BvError> {
    let (hard, rows) = rows_for_grid(z0, base, eps_grid, interval, settings)?;
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let l1: Vec<f64> = rows.iter().map(|r| r.l1_distance).collect();
    let l1_fit = log_log_fit(&eps, &l1);
    let l1_strictly_decreasing = l1.windows(2).all(|w| w[1] < w[0]);
    let limit = limit_residuals(&hard, interval, 10_000);
    Ok(ConvergenceReport {
        bound: bound_report(rows, &hard, interval)?,
        l1_fit,
        l1_strictly_decreasing,
        limit,
        beta: base.beta,
    })
}

impl ConvergenceReport {
    pub fn summary(&self) -> ConvergenceSummary {
        let soft_lm = self.bound.rows.iter().map(|r| r.momentum_residual).fold(0.0, f64::max);
        ConvergenceSummary {
            l1_slope: self.l1_fit.as_ref().map(|f| f.slope).unwrap_or(f64::NAN),
            var_max: self.bound.var_max,
            var_hard: self.bound.var_hard,
            conservation_max_residual: self.limit.max().max(soft_lm),
        }
    }
}
