//! Centre-of-mass collision analysis for one soft encounter: closest
//! approach, time of closest approach, deflection, apse line, and the
//! explicit soft scattering map together with its hardening sweep.

use std::io::{self, Write};

use nalgebra::{Matrix3, Rotation3, Unit};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{stack, CollisionInvariants, PhasePoint, Vec3, Vec6, TOL_GEOM};
use crate::hard::{boltzmann_matrix, HardError};
use crate::numerics::fit::{log_log_fit, LineFit};
use crate::numerics::quadrature::{integrate, QuadError, QuadEstimate, QuadOptions};
use crate::numerics::roots::{self, RootError};
use crate::output::fmt_f64;
use crate::potentials::{HardenedPotential, PotentialError, ReferencePotential};
use crate::soft::{detect_contact_window_reduced, integrate_reduced, SoftError, SoftProblem};

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
/// Below this `g'(ρ*)` the quadrature is replaced by an ODE measurement.
pub const MIN_ROOT_SLOPE: f64 = 1e-12;
/// Normal-energy threshold `2E₀ - A₀` under which a contact is grazing.
pub const GRAZING_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatterError {
    #[error("datum is not in contact: |x - x̄| = {0}")]
    NotOnContact(f64),
    #[error("relative velocity points outward (y·w = {0:e})")]
    NotIncoming(f64),
    #[error("datum does not reach closest approach: 2E0 - A0 = {0:e}")]
    NotCollisional(f64),
    #[error("polar frame needs y0 ∧ w0 ≠ 0")]
    DegenerateFrame,
    #[error("radicand negative at r = {0}")]
    NegativeRadicand(f64),
    #[error("epsilon grid must be strictly decreasing inside (0, 1)")]
    BadGrid,
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Soft(#[from] SoftError),
    #[error(transparent)]
    Hard(#[from] HardError),
}

/// Rotation `R₀` with `R₀e₃ = (y₀ ∧ w₀)/|y₀ ∧ w₀|` and the angle `ϑ₀` of `y₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarFrame {
    pub r0: Matrix3<f64>,
    pub theta0: f64,
}

/// Planar unit vector `(sin θ, cos θ)`.
pub fn e(theta: f64) -> (f64, f64) {
    theta.sin_cos()
}

impl PolarFrame {
    pub fn new(y0: &Vec3, w0: &Vec3) -> Result<Self, ScatterError> {
        let k = y0.cross(w0);
        if !(k.norm() > 0.0) {
            return Err(ScatterError::DegenerateFrame);
        }
        let k = k.normalize();
        let e3 = Vec3::z();
        let rot = Rotation3::rotation_between(&e3, &k)
            .unwrap_or_else(|| Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::x()), std::f64::consts::PI));
        let r0 = *rot.matrix();
        let local = r0.transpose() * y0;
        Ok(Self {
            r0,
            theta0: local[0].atan2(local[1]),
        })
    }

    /// `R₀ (e(θ), 0)`.
    pub fn direction(&self, theta: f64) -> Vec3 {
        let (s, c) = e(theta);
        self.r0 * Vec3::new(s, c, 0.0)
    }
}

fn radicand(inv: &CollisionInvariants, pot: &HardenedPotential, r: f64) -> f64 {
    2.0 * inv.e0 - inv.a0 / (r * r) - 4.0 * pot.eval(r)
}

fn is_grazing(inv: &CollisionInvariants) -> bool {
    inv.normal_energy() <= GRAZING_TOL * inv.e0.max(1.0)
}

/// Distance of closest approach: root of `2E₀ - A₀/ρ² - 4Φ^ε(ρ)` in `(0, 1)`.
pub fn rho_star(inv: &CollisionInvariants, pot: &HardenedPotential) -> Result<f64, ScatterError> {
    if !(inv.e0 > 0.0) {
        return Err(ScatterError::NotCollisional(inv.normal_energy()));
    }
    let head_on = pot.base.inverse_on_support(inv.e0 * pot.epsilon / 2.0)?;
    if inv.a0 == 0.0 {
        return Ok(head_on);
    }
    let g1 = inv.normal_energy();
    if !(g1 > 0.0) {
        return Err(ScatterError::NotCollisional(g1));
    }
    Ok(roots::brent(|r| radicand(inv, pot, r), head_on, 1.0, 1e-15, 500)?)
}

/// Radicand `g(r) - g(ρ*)` written without the cancelling constant terms.
struct Radial<'a> {
    inv: &'a CollisionInvariants,
    pot: &'a HardenedPotential,
    rho: f64,
    phi_rho: f64,
    slope: f64,
}

impl<'a> Radial<'a> {
    fn new(inv: &'a CollisionInvariants, pot: &'a HardenedPotential, rho: f64) -> Self {
        let slope = 2.0 * inv.a0 / rho.powi(3) - 4.0 * pot.deriv(rho);
        Self {
            inv,
            pot,
            rho,
            phi_rho: pot.eval(rho),
            slope,
        }
    }

    fn g(&self, r: f64) -> f64 {
        let d = r - self.rho;
        let lin = self.slope * d;
        if d <= 1e-8 * (1.0 - self.rho) {
            return lin;
        }
        let exact =
            self.inv.a0 * d * (r + self.rho) / (r * r * self.rho * self.rho) + 4.0 * (self.phi_rho - self.pot.eval(r));
        if exact > 0.0 {
            exact
        } else {
            lin
        }
    }

    /// `∫_{ρ*}^1 f(r)/√g(r) dr` after `r = ρ* + (1 - ρ*)u²`.
    fn integral<F: Fn(f64) -> f64>(&self, f: F, opts: &QuadOptions) -> Result<QuadEstimate, ScatterError> {
        let span = 1.0 - self.rho;
        let mut bad = None;
        let est = integrate(
            |u| {
                let r = self.rho + span * u * u;
                let g = self.g(r);
                if !(g > 0.0) {
                    bad.get_or_insert(r);
                    return 0.0;
                }
                2.0 * span * u * f(r) / g.sqrt()
            },
            0.0,
            1.0,
            opts,
        )?;
        match bad {
            Some(r) => Err(ScatterError::NegativeRadicand(r)),
            None => Ok(est),
        }
    }
}

/// Time of closest approach `τ* = ∫_{ρ*}^1 dr / √g(r)`.
pub fn tau_star(inv: &CollisionInvariants, pot: &HardenedPotential) -> Result<QuadEstimate, ScatterError> {
    tau_star_with(inv, pot, &QuadOptions::abs(DEFAULT_QUAD_TOL))
}

pub fn tau_star_with(
    inv: &CollisionInvariants,
    pot: &HardenedPotential,
    opts: &QuadOptions,
) -> Result<QuadEstimate, ScatterError> {
    if is_grazing(inv) {
        return Ok(QuadEstimate {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let rho = rho_star(inv, pot)?;
    let radial = Radial::new(inv, pot, rho);
    if !(radial.slope >= MIN_ROOT_SLOPE) {
        return tau_star_from_ode(inv, pot);
    }
    radial.integral(|_| 1.0, opts)
}

/// Half the contact duration of the reduced ODE from a canonical datum with
/// the same invariants.
pub fn tau_star_from_ode(inv: &CollisionInvariants, pot: &HardenedPotential) -> Result<QuadEstimate, ScatterError> {
    let y0 = Vec3::new(1.0, 0.0, 0.0);
    let w0 = Vec3::new(-inv.normal_energy().max(0.0).sqrt(), inv.a0.sqrt(), 0.0);
    let z0 = PhasePoint::new(y0, Vec3::zeros(), w0, Vec3::zeros());
    let mut horizon = 1.0;
    loop {
        let p = SoftProblem::new(pot.clone(), z0, (0.0, horizon));
        let tr = integrate_reduced(&p)?;
        match detect_contact_window_reduced(&tr) {
            Ok(win) => {
                return Ok(QuadEstimate {
                    value: 0.5 * win.duration,
                    error: 1e-12,
                    evaluations: tr.len(),
                })
            }
            Err(SoftError::TooShort { .. }) if horizon < 1e6 => horizon *= 4.0,
            Err(err) => return Err(err.into()),
        }
    }
}

fn contact_relative(z0: &PhasePoint) -> Result<(Vec3, Vec3), ScatterError> {
    let y0 = z0.relative_position();
    let w0 = z0.relative_velocity();
    let d = y0.norm();
    if (d - 1.0).abs() > TOL_GEOM {
        return Err(ScatterError::NotOnContact(d));
    }
    let radial = y0.dot(&w0);
    if radial > GRAZING_TOL {
        return Err(ScatterError::NotIncoming(radial));
    }
    Ok((y0, w0))
}

/// Angle `ϑ*` of the reduced trajectory at closest approach.
pub fn deflection_angle(z0: &PhasePoint, pot: &HardenedPotential) -> Result<f64, ScatterError> {
    deflection_angle_with(z0, pot, &QuadOptions::abs(DEFAULT_QUAD_TOL))
}

pub fn deflection_angle_with(
    z0: &PhasePoint,
    pot: &HardenedPotential,
    opts: &QuadOptions,
) -> Result<f64, ScatterError> {
    let (y0, w0) = contact_relative(z0)?;
    let frame = PolarFrame::new(&y0, &w0)?;
    let inv = CollisionInvariants::from_relative(&y0, &w0);
    if is_grazing(&inv) {
        return Ok(frame.theta0);
    }
    let rho = rho_star(&inv, pot)?;
    let radial = Radial::new(&inv, pot, rho);
    if !(radial.slope >= MIN_ROOT_SLOPE) {
        return Ok(frame.theta0);
    }
    // the angle decreases along the flow: y ∧ w = -ρ² ϑ' R₀e₃
    let sweep = radial.integral(|r| 1.0 / (r * r), opts)?;
    Ok(frame.theta0 - inv.a0.sqrt() * sweep.value)
}

/// Apse line `ω*`.
pub fn apse_line(z0: &PhasePoint, pot: &HardenedPotential) -> Result<Vec3, ScatterError> {
    Ok(analyze(z0, pot, &QuadOptions::abs(DEFAULT_QUAD_TOL))?.apse)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionAnalysis {
    pub rho_star: f64,
    pub tau_star: f64,
    pub tau_error: f64,
    /// `None` when the polar frame is degenerate (`A₀ = 0`).
    pub theta_star: Option<f64>,
    pub apse: Vec3,
    pub epsilon: f64,
    pub invariants_in: CollisionInvariants,
    pub grazing: bool,
}

impl CollisionAnalysis {
    pub fn exit_time(&self) -> f64 {
        2.0 * self.tau_star
    }

    /// Horizon `2(1 + Δτ)` that leaves both endpoints force-free.
    pub fn default_horizon(&self) -> f64 {
        2.0 * (1.0 + self.exit_time())
    }
}

pub fn analyze(
    z0: &PhasePoint,
    pot: &HardenedPotential,
    opts: &QuadOptions,
) -> Result<CollisionAnalysis, ScatterError> {
    let (y0, w0) = contact_relative(z0)?;
    let inv = CollisionInvariants::from_relative(&y0, &w0);
    let y_hat = y0.normalize();
    if is_grazing(&inv) {
        return Ok(CollisionAnalysis {
            rho_star: y0.norm(),
            tau_star: 0.0,
            tau_error: 0.0,
            theta_star: PolarFrame::new(&y0, &w0).ok().map(|f| f.theta0),
            apse: y_hat,
            epsilon: pot.epsilon,
            invariants_in: inv,
            grazing: true,
        });
    }
    let rho = rho_star(&inv, pot)?;
    let tau = tau_star_with(&inv, pot, opts)?;
    let (theta_star, apse) = match PolarFrame::new(&y0, &w0) {
        Ok(frame) if inv.a0 > 0.0 => {
            let theta = deflection_angle_with(z0, pot, opts)?;
            (Some(theta), frame.direction(theta))
        }
        _ => (None, y_hat),
    };
    Ok(CollisionAnalysis {
        rho_star: rho,
        tau_star: tau.value,
        tau_error: tau.error,
        theta_star,
        apse,
        epsilon: pot.epsilon,
        invariants_in: inv,
        grazing: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SoftScatteringResult {
    pub pre: PhasePoint,
    /// State at the exit time `2τ*`.
    pub post: PhasePoint,
    pub nu_hat_star: Vec6,
    pub analysis: CollisionAnalysis,
}

impl SoftScatteringResult {
    pub fn exit_time(&self) -> f64 {
        self.analysis.exit_time()
    }
}

/// Reflection about the apse line: `v' = v - (ω·w)ω`, `v̄' = v̄ + (ω·w)ω`,
/// with positions advanced to the exit time.
pub fn soft_scatter(z0: &PhasePoint, pot: &HardenedPotential) -> Result<SoftScatteringResult, ScatterError> {
    soft_scatter_with(z0, pot, &QuadOptions::abs(DEFAULT_QUAD_TOL))
}

pub fn soft_scatter_with(
    z0: &PhasePoint,
    pot: &HardenedPotential,
    opts: &QuadOptions,
) -> Result<SoftScatteringResult, ScatterError> {
    let an = analyze(z0, pot, opts)?;
    let om = an.apse;
    let k = om.dot(&z0.relative_velocity());
    let drift = an.tau_star * (z0.v + z0.v_bar);
    let proj = om * om.dot(&(z0.x - z0.x_bar));
    let post = PhasePoint {
        x: z0.x_bar + proj + drift,
        x_bar: z0.x - proj + drift,
        v: z0.v - k * om,
        v_bar: z0.v_bar + k * om,
    };
    Ok(SoftScatteringResult {
        pre: *z0,
        post,
        nu_hat_star: stack(&om, &-om) / 2f64.sqrt(),
        analysis: an,
    })
}

/// `|Π₂σ^εZ₀ - σ_nΠ₂Z₀|` with `n = x̄₀ - x₀`.
pub fn scatter_error(res: &SoftScatteringResult) -> Result<f64, ScatterError> {
    let n = (res.pre.x_bar - res.pre.x).normalize();
    let hard = boltzmann_matrix(&n)?.apply(&res.pre.velocities());
    Ok((res.post.velocities() - hard).norm())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub rho_star: f64,
    pub tau_star: f64,
    pub theta_star: f64,
    pub apse: Vec3,
    pub scatter_err: f64,
    /// `|ω* - y₀/|y₀||`.
    pub apse_err: f64,
    pub note: Option<String>,
}

impl SweepRow {
    fn failed(eps: f64, note: String) -> Self {
        Self {
            eps,
            rho_star: f64::NAN,
            tau_star: f64::NAN,
            theta_star: f64::NAN,
            apse: Vec3::from_element(f64::NAN),
            scatter_err: f64::NAN,
            apse_err: f64::NAN,
            note: Some(note),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSummary {
    pub slope: f64,
    pub slope_ci: (f64, f64),
    pub beta_inverse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub tau_fit: Option<LineFit>,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub quad: QuadOptions,
    /// Number of largest-ε rows left out of the slope fit.
    pub fit_skip: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            quad: QuadOptions::abs(DEFAULT_QUAD_TOL),
            fit_skip: 2,
        }
    }
}

pub fn check_grid(eps_grid: &[f64]) -> Result<(), ScatterError> {
    let inside = eps_grid.iter().all(|&e| e > 0.0 && e < 1.0);
    let decreasing = eps_grid.windows(2).all(|w| w[0] > w[1]);
    if inside && decreasing && !eps_grid.is_empty() {
        Ok(())
    } else {
        Err(ScatterError::BadGrid)
    }
}

/// `ε = 2^{-k}` for `k = k_min..=k_max`, largest first.
pub fn dyadic_grid(k_min: i32, k_max: i32) -> Vec<f64> {
    (k_min..=k_max).map(|k| 2f64.powi(-k)).collect()
}

fn sweep_row(z0: &PhasePoint, base: &ReferencePotential, eps: f64, opts: &SweepOptions) -> SweepRow {
    let run = || -> Result<SweepRow, ScatterError> {
        let pot = base.harden(eps)?;
        let res = soft_scatter_with(z0, &pot, &opts.quad)?;
        let an = &res.analysis;
        let y_hat = z0.relative_position().normalize();
        Ok(SweepRow {
            eps,
            rho_star: an.rho_star,
            tau_star: an.tau_star,
            theta_star: an.theta_star.unwrap_or(f64::NAN),
            apse: an.apse,
            scatter_err: scatter_error(&res)?,
            apse_err: (an.apse - y_hat).norm(),
            note: None,
        })
    };
    run().unwrap_or_else(|err| SweepRow::failed(eps, err.to_string()))
}

/// Per-ε collision analysis with a log-log fit of `τ*` against `ε`. Rows are
/// computed in parallel on the current rayon pool and returned in grid order.
pub fn hardening_sweep(
    z0: &PhasePoint,
    base: &ReferencePotential,
    eps_grid: &[f64],
    opts: &SweepOptions,
) -> Result<SweepTable, ScatterError> {
    check_grid(eps_grid)?;
    let rows: Vec<SweepRow> = eps_grid.par_iter().map(|&eps| sweep_row(z0, base, eps, opts)).collect();
    let fit_rows: Vec<&SweepRow> = rows.iter().skip(opts.fit_skip).filter(|r| r.note.is_none()).collect();
    let tau_fit = log_log_fit(
        &fit_rows.iter().map(|r| r.eps).collect::<Vec<_>>(),
        &fit_rows.iter().map(|r| r.tau_star).collect::<Vec<_>>(),
    );
    Ok(SweepTable {
        rows,
        tau_fit,
        beta: base.beta,
    })
}

impl SweepTable {
    pub fn summary(&self) -> SweepSummary {
        let (slope, slope_ci) = match &self.tau_fit {
            Some(f) => (f.slope, f.slope_ci),
            None => (f64::NAN, (f64::NAN, f64::NAN)),
        };
        SweepSummary {
            slope,
            slope_ci,
            beta_inverse: 1.0 / self.beta,
        }
    }

    /// Slope of `log scatter_err` against `log ε` over the rows used for the `τ*` fit.
    pub fn scatter_fit(&self, skip: usize) -> Option<LineFit> {
        let rows: Vec<&SweepRow> = self.rows.iter().skip(skip).filter(|r| r.note.is_none()).collect();
        log_log_fit(
            &rows.iter().map(|r| r.eps).collect::<Vec<_>>(),
            &rows.iter().map(|r| r.scatter_err).collect::<Vec<_>>(),
        )
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "eps,rho_star,tau_star,theta_star,apse_x,apse_y,apse_z,scatter_err,apse_err,note"
        )?;
        for r in &self.rows {
            let cells = [
                r.eps,
                r.rho_star,
                r.tau_star,
                r.theta_star,
                r.apse[0],
                r.apse[1],
                r.apse[2],
                r.scatter_err,
                r.apse_err,
            ]
            .map(fmt_f64);
            let note = r.note.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(out, "{},{}", cells.join(","), note)?;
        }
        Ok(())
    }
}
