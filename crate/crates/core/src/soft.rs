//! Soft-potential pair dynamics: full 12-dimensional and reduced
//! 6-dimensional integration, contact-window detection, trajectory export.

use std::io::{self, Write};

use nalgebra::{SVector, Vector6};
use thiserror::Error;

use crate::geometry::{PhasePoint, Vec12, Vec3, Vec6};
use crate::numerics::ode::{self, DenseSegment, Dopri5Options, OdeError, OdeSystem};
use crate::numerics::roots;
use crate::output::fmt_f64;
use crate::potentials::HardenedPotential;

pub const DEFAULT_REL_TOL: f64 = 1e-12;
pub const DEFAULT_ABS_TOL: f64 = 1e-14;
/// Largest relative Hamiltonian drift of an accepted run.
pub const MAX_ENERGY_DRIFT: f64 = 1e-8;
/// Contact-event time resolution.
pub const EVENT_TOL: f64 = 1e-12;
const EVENT_ITERATIONS: usize = 80;
const EVENT_SUBSAMPLES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoftError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("bodies coincide: x = x̄ is outside the soft phase space")]
    Coincident,
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("energy drift {0:e} exceeds the accepted bound")]
    EnergyDrift(f64),
    #[error("trajectory does not cover the interaction: |y|² - 1 = {value:e} at t = {t}")]
    TooShort { t: f64, value: f64 },
}

#[derive(Debug, Clone)]
pub struct SoftProblem {
    pub potential: HardenedPotential,
    pub z0: PhasePoint,
    /// Time at which `z0` is prescribed; must lie in `t_span`.
    pub t_initial: f64,
    pub t_span: (f64, f64),
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl SoftProblem {
    /// `z0` is prescribed at `t = 0` when `0 ∈ t_span`, otherwise at `T₀`.
    pub fn new(potential: HardenedPotential, z0: PhasePoint, t_span: (f64, f64)) -> Self {
        let t_initial = if t_span.0 <= 0.0 && 0.0 <= t_span.1 {
            0.0
        } else {
            t_span.0
        };
        Self {
            potential,
            z0,
            t_initial,
            t_span,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            max_steps: 2_000_000,
        }
    }

    pub fn with_initial_time(mut self, t: f64) -> Self {
        self.t_initial = t;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<(), SoftError> {
        let (t0, t1) = self.t_span;
        if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() {
            return Err(SoftError::InvalidProblem(format!("empty time span ({t0}, {t1})")));
        }
        if !(t0..=t1).contains(&self.t_initial) {
            return Err(SoftError::InvalidProblem(format!(
                "initial time {} outside ({t0}, {t1})",
                self.t_initial
            )));
        }
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(tol > 0.0 && tol <= 1e-4) {
                return Err(SoftError::InvalidProblem(format!("{name} = {tol} outside (0, 1e-4]")));
            }
        }
        if !self.z0.is_finite() {
            return Err(SoftError::InvalidProblem("initial state is not finite".into()));
        }
        if self.z0.relative_position().norm() == 0.0 {
            return Err(SoftError::Coincident);
        }
        Ok(())
    }

    fn options(&self) -> Dopri5Options {
        Dopri5Options {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_steps: self.max_steps,
            ..Dopri5Options::default()
        }
    }
}

/// Step cap for a relative state `(y, w)` moving in direction `dir`.
fn contact_step_cap(y: &Vec3, w: &Vec3, dir: f64, h_contact: f64) -> f64 {
    let c = y.norm_squared() - 1.0;
    if c <= 0.0 {
        return h_contact;
    }
    // free-flight entry time along dir·w
    let a = w.norm_squared();
    let half_b = dir * y.dot(w);
    if a == 0.0 || half_b >= 0.0 {
        return f64::INFINITY;
    }
    let disc = half_b * half_b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let t_hit = c / (-half_b + disc.sqrt());
    t_hit.max(h_contact)
}

struct FullSystem<'a> {
    pot: &'a HardenedPotential,
    dir: f64,
    h_contact: f64,
}

impl OdeSystem<12> for FullSystem<'_> {
    fn rhs(&self, _t: f64, z: &Vec12) -> Vec12 {
        let y = z.fixed_rows::<3>(0) - z.fixed_rows::<3>(3);
        let g = self.pot.grad(&y);
        let mut out = Vec12::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&z.fixed_rows::<3>(6));
        out.fixed_rows_mut::<3>(3).copy_from(&z.fixed_rows::<3>(9));
        out.fixed_rows_mut::<3>(6).copy_from(&(-g));
        out.fixed_rows_mut::<3>(9).copy_from(&g);
        out
    }

    fn step_limit(&self, _t: f64, z: &Vec12) -> f64 {
        let y = z.fixed_rows::<3>(0) - z.fixed_rows::<3>(3);
        let w = z.fixed_rows::<3>(6) - z.fixed_rows::<3>(9);
        contact_step_cap(&y, &w, self.dir, self.h_contact)
    }
}

struct ReducedSystem<'a> {
    pot: &'a HardenedPotential,
    dir: f64,
    h_contact: f64,
}

impl OdeSystem<6> for ReducedSystem<'_> {
    fn rhs(&self, _t: f64, s: &Vec6) -> Vec6 {
        let y: Vec3 = s.fixed_rows::<3>(0).into_owned();
        let g = self.pot.grad(&y);
        Vector6::new(s[3], s[4], s[5], -2.0 * g[0], -2.0 * g[1], -2.0 * g[2])
    }

    fn step_limit(&self, _t: f64, s: &Vec6) -> f64 {
        let y: Vec3 = s.fixed_rows::<3>(0).into_owned();
        let w: Vec3 = s.fixed_rows::<3>(3).into_owned();
        contact_step_cap(&y, &w, self.dir, self.h_contact)
    }
}

/// Accepted steps and their interpolants over a closed interval.
#[derive(Debug, Clone)]
pub struct DenseTrajectory<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<SVector<f64, N>>,
    segments: Vec<DenseSegment<N>>,
}

impl<const N: usize> DenseTrajectory<N> {
    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn segments(&self) -> &[DenseSegment<N>] {
        &self.segments
    }

    /// Interpolated state; clamps `t` to the covered interval.
    pub fn eval(&self, t: f64) -> SVector<f64, N> {
        if self.segments.is_empty() {
            return self.states[0];
        }
        let t = t.clamp(self.t_start(), self.t_end());
        let k = self
            .segments
            .partition_point(|s| s.t_end() < t)
            .min(self.segments.len() - 1);
        self.segments[k].eval(t)
    }
}

fn solve_both_ways<const N: usize, S, F>(
    make: F,
    t_initial: f64,
    y0: SVector<f64, N>,
    span: (f64, f64),
    opts: &Dopri5Options,
) -> Result<DenseTrajectory<N>, OdeError>
where
    S: OdeSystem<N>,
    F: Fn(f64) -> S,
{
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut segments = Vec::new();
    if span.0 < t_initial {
        let back = ode::solve(&make(-1.0), t_initial, y0, span.0, opts)?;
        times.extend(back.times.iter().rev());
        states.extend(back.states.iter().rev());
        segments.extend(back.segments.into_iter().rev());
        times.pop();
        states.pop();
    }
    if t_initial < span.1 {
        let fwd = ode::solve(&make(1.0), t_initial, y0, span.1, opts)?;
        times.extend(fwd.times);
        states.extend(fwd.states);
        segments.extend(fwd.segments);
    } else {
        times.push(t_initial);
        states.push(y0);
    }
    Ok(DenseTrajectory {
        times,
        states,
        segments,
    })
}

fn contact_scale(pot: &HardenedPotential) -> f64 {
    pot.epsilon.powf(1.0 / pot.base.beta) / 10.0
}

/// `H₂ = ½(|v|² + |v̄|²) + Φ^ε(x - x̄)`.
pub fn hamiltonian(z: &PhasePoint, pot: &HardenedPotential) -> f64 {
    0.5 * (z.v.norm_squared() + z.v_bar.norm_squared()) + pot.eval_vec(&z.relative_position())
}

/// `H₀ = ½|w|² + 2Φ^ε(y)`.
pub fn reduced_energy(y: &Vec3, w: &Vec3, pot: &HardenedPotential) -> f64 {
    0.5 * w.norm_squared() + 2.0 * pot.eval_vec(y)
}

fn relative_drift(values: impl Iterator<Item = f64>, reference: f64) -> f64 {
    let scale = if reference.abs() > 0.0 { reference.abs() } else { 1.0 };
    values.map(|h| (h - reference).abs() / scale).fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct SampledTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub energy_drift: f64,
    pub potential: HardenedPotential,
    dense: DenseTrajectory<12>,
}

impl SampledTrajectory {
    pub fn dense_eval(&self, t: f64) -> PhasePoint {
        PhasePoint::from_vector(&self.dense.eval(t))
    }

    pub fn velocities_at(&self, t: f64) -> Vec6 {
        let z = self.dense.eval(t);
        z.fixed_rows::<6>(6).into_owned()
    }

    pub fn relative_position_at(&self, t: f64) -> Vec3 {
        self.dense_eval(t).relative_position()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.dense.t_start(), self.dense.t_end())
    }

    pub fn initial_state(&self) -> PhasePoint {
        self.states[0]
    }

    pub fn final_state(&self) -> PhasePoint {
        *self.states.last().expect("trajectory has at least one sample")
    }

    /// Step boundaries, in increasing order.
    pub fn step_times(&self) -> &[f64] {
        &self.times
    }

    /// Columns `t, x(3), x̄(3), v(3), v̄(3), H, |y|` at the accepted steps.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "t,x1,x2,x3,xbar1,xbar2,xbar3,v1,v2,v3,vbar1,vbar2,vbar3,H,dist")?;
        for (t, z) in self.times.iter().zip(&self.states) {
            let mut row = vec![fmt_f64(*t)];
            row.extend(z.to_vector().iter().map(|c| fmt_f64(*c)));
            row.push(fmt_f64(hamiltonian(z, &self.potential)));
            row.push(fmt_f64(z.separation()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn integrate(p: &SoftProblem) -> Result<SampledTrajectory, SoftError> {
    p.validate()?;
    let pot = &p.potential;
    let h_contact = contact_scale(pot);
    let dense = solve_both_ways(
        |dir| FullSystem { pot, dir, h_contact },
        p.t_initial,
        p.z0.to_vector(),
        p.t_span,
        &p.options(),
    )?;
    let states: Vec<PhasePoint> = dense.states.iter().map(PhasePoint::from_vector).collect();
    let h0 = hamiltonian(&p.z0, pot);
    let energy_drift = relative_drift(states.iter().map(|z| hamiltonian(z, pot)), h0);
    if !(energy_drift <= MAX_ENERGY_DRIFT) {
        return Err(SoftError::EnergyDrift(energy_drift));
    }
    Ok(SampledTrajectory {
        times: dense.times.clone(),
        states,
        energy_drift,
        potential: pot.clone(),
        dense,
    })
}

/// Solution of the relative system `y' = w`, `w' = -2∇Φ^ε(y)`.
#[derive(Debug, Clone)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub energy_drift: f64,
    pub potential: HardenedPotential,
    dense: DenseTrajectory<6>,
}

impl ReducedTrajectory {
    pub fn eval(&self, t: f64) -> (Vec3, Vec3) {
        let s = self.dense.eval(t);
        (s.fixed_rows::<3>(0).into_owned(), s.fixed_rows::<3>(3).into_owned())
    }

    pub fn state(&self, k: usize) -> (Vec3, Vec3) {
        let s = &self.dense.states[k];
        (s.fixed_rows::<3>(0).into_owned(), s.fixed_rows::<3>(3).into_owned())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.dense.t_start(), self.dense.t_end())
    }

    /// Maximum deviation of `y ∧ w` from its initial value over the steps.
    pub fn angular_momentum_drift(&self) -> f64 {
        let (y0, w0) = self.state(0);
        let a0 = y0.cross(&w0);
        (0..self.len())
            .map(|k| {
                let (y, w) = self.state(k);
                (y.cross(&w) - a0).amax()
            })
            .fold(0.0, f64::max)
    }
}

pub fn integrate_reduced(p: &SoftProblem) -> Result<ReducedTrajectory, SoftError> {
    p.validate()?;
    let pot = &p.potential;
    let h_contact = contact_scale(pot);
    let y0 = p.z0.relative_position();
    let w0 = p.z0.relative_velocity();
    let s0 = Vector6::new(y0[0], y0[1], y0[2], w0[0], w0[1], w0[2]);
    let dense = solve_both_ways(
        |dir| ReducedSystem { pot, dir, h_contact },
        p.t_initial,
        s0,
        p.t_span,
        &p.options(),
    )?;
    let e0 = reduced_energy(&y0, &w0, pot);
    let energy_drift = relative_drift(
        dense.states.iter().map(|s| {
            let y: Vec3 = s.fixed_rows::<3>(0).into_owned();
            let w: Vec3 = s.fixed_rows::<3>(3).into_owned();
            reduced_energy(&y, &w, pot)
        }),
        e0,
    );
    if !(energy_drift <= MAX_ENERGY_DRIFT) {
        return Err(SoftError::EnergyDrift(energy_drift));
    }
    Ok(ReducedTrajectory {
        times: dense.times.clone(),
        energy_drift,
        potential: pot.clone(),
        dense,
    })
}

/// Entrance and exit times of the supports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactWindow {
    pub tau_minus: f64,
    pub tau_plus: f64,
    pub duration: f64,
    pub none_flag: bool,
}

impl ContactWindow {
    fn none() -> Self {
        Self {
            tau_minus: f64::NAN,
            tau_plus: f64::NAN,
            duration: 0.0,
            none_flag: true,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.tau_minus + self.tau_plus)
    }
}

/// Locate the sign changes of `F(t) = |y(t)|² - 1` on the dense output.
pub fn detect_contact_window(tr: &SampledTrajectory) -> Result<ContactWindow, SoftError> {
    let f = |t: f64| tr.relative_position_at(t).norm_squared() - 1.0;
    contact_window_of(f, &tr.times)
}

pub fn detect_contact_window_reduced(tr: &ReducedTrajectory) -> Result<ContactWindow, SoftError> {
    let f = |t: f64| tr.eval(t).0.norm_squared() - 1.0;
    contact_window_of(f, &tr.times)
}

fn contact_window_of<F: Fn(f64) -> f64>(f: F, steps: &[f64]) -> Result<ContactWindow, SoftError> {
    let t0 = steps[0];
    let t1 = *steps.last().expect("nonempty step list");
    let (f0, f1) = (f(t0), f(t1));
    if f0 < -EVENT_TOL {
        return Err(SoftError::TooShort { t: t0, value: f0 });
    }
    if f1 < -EVENT_TOL {
        return Err(SoftError::TooShort { t: t1, value: f1 });
    }

    let mut ts = Vec::with_capacity(steps.len() * EVENT_SUBSAMPLES);
    for w in steps.windows(2) {
        for j in 0..EVENT_SUBSAMPLES {
            ts.push(w[0] + (w[1] - w[0]) * j as f64 / EVENT_SUBSAMPLES as f64);
        }
    }
    ts.push(t1);
    let vals: Vec<f64> = ts.iter().map(|&t| f(t)).collect();

    let crossing = |a: f64, b: f64| -> f64 {
        roots::bisect(&f, a, b, EVENT_ITERATIONS)
            .map(|t| if (b - a).abs() <= EVENT_TOL { 0.5 * (a + b) } else { t })
            .unwrap_or(0.5 * (a + b))
    };

    let n = ts.len();
    let first_inside = vals.iter().position(|&v| v < 0.0);
    let Some(first_inside) = first_inside else {
        return Ok(ContactWindow::none());
    };
    let tau_minus = if first_inside == 0 || (vals[0].abs() <= EVENT_TOL && first_inside == 1) {
        t0
    } else {
        crossing(ts[first_inside - 1], ts[first_inside])
    };
    let last_inside = vals.iter().rposition(|&v| v < 0.0).expect("found above");
    let tau_plus = if last_inside == n - 1 {
        t1
    } else {
        crossing(ts[last_inside], ts[last_inside + 1])
    };
    Ok(ContactWindow {
        tau_minus,
        tau_plus,
        duration: tau_plus - tau_minus,
        none_flag: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angular_momentum, linear_momentum, to_reduced};
    use crate::potentials::standard_family;

    fn pot(eps: f64) -> HardenedPotential {
        standard_family(1.0, 3.0).unwrap().harden(eps).unwrap()
    }

    fn v3(a: f64, b: f64, c: f64) -> Vec3 {
        Vec3::new(a, b, c)
    }

    fn head_on() -> PhasePoint {
        PhasePoint::new(Vec3::zeros(), v3(1., 0., 0.), v3(0.5, 0., 0.), v3(-0.5, 0., 0.))
    }

    fn oblique() -> PhasePoint {
        PhasePoint::new(Vec3::zeros(), v3(1., 0., 0.), v3(0.2, 0.04, 0.), v3(-0.2, -0.04, 0.))
    }

    #[test]
    fn free_flight_outside_support() {
        let z = PhasePoint::new(Vec3::zeros(), v3(3., 0., 0.), v3(0., 1., 0.), v3(0., 1., 0.));
        let tr = integrate(&SoftProblem::new(pot(0.1), z, (0.0, 5.0))).unwrap();
        for s in &tr.states {
            assert!((s.velocities() - z.velocities()).amax() < 1e-12);
        }
        let end = tr.final_state();
        assert!((end.x - v3(0., 5., 0.)).amax() < 1e-12);
        assert!(detect_contact_window(&tr).unwrap().none_flag);
    }

    #[test]
    fn grazing_never_feels_force() {
        let z = PhasePoint::new(Vec3::zeros(), v3(1., 0., 0.), v3(0., 0.2, 0.), v3(0., -0.2, 0.));
        let tr = integrate(&SoftProblem::new(pot(1e-3), z, (0.0, 3.0))).unwrap();
        let worst = tr
            .states
            .iter()
            .map(|s| (s.velocities() - z.velocities()).amax())
            .fold(0.0, f64::max);
        assert_eq!(worst, 0.0);
        assert!(detect_contact_window(&tr).unwrap().none_flag);
    }

    #[test]
    fn head_on_centre_of_mass_is_free() {
        let z = head_on();
        let tr = integrate(&SoftProblem::new(pot(1e-2), z, (0.0, 3.0))).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let com = s.x + s.x_bar;
            let line = z.x + z.x_bar + *t * (z.v + z.v_bar);
            assert!((com - line).amax() < 1e-10);
            assert!(linear_momentum(s).amax() < 1e-12);
            let a = v3(0.3, -1., 2.);
            assert!((angular_momentum(s, &a) - angular_momentum(&z, &a)).amax() < 1e-10);
        }
        assert!(tr.energy_drift < 1e-8);
        let end = tr.final_state();
        assert!((end.v - v3(-0.5, 0., 0.)).amax() < 1e-8);
        let win = detect_contact_window(&tr).unwrap();
        assert_eq!(win.tau_minus, 0.0);
        assert!(win.duration > 0.0);
    }

    #[test]
    fn reduced_matches_full() {
        let z = oblique();
        let p = SoftProblem::new(pot(1e-3), z, (0.0, 2.0));
        let full = integrate(&p).unwrap();
        let red = integrate_reduced(&p).unwrap();
        for k in 0..=400 {
            let t = 2.0 * k as f64 / 400.0;
            let r = to_reduced(&full.dense_eval(t));
            let (y, w) = red.eval(t);
            assert!((r.y - y).amax() < 1e-9 && (r.w - w).amax() < 1e-9, "t = {t}");
        }
        assert!(red.angular_momentum_drift() < 1e-10);
        assert!(red.energy_drift < 1e-10);
        let full_win = detect_contact_window(&full).unwrap();
        let red_win = detect_contact_window_reduced(&red).unwrap();
        assert!((full_win.tau_plus - red_win.tau_plus).abs() < 1e-9);
    }

    #[test]
    fn backward_and_forward_agree() {
        let z = oblique();
        let p = SoftProblem::new(pot(1e-2), z, (0.0, 2.0));
        let fwd = integrate(&p).unwrap();
        let zt = fwd.final_state();
        let back = integrate(&SoftProblem::new(pot(1e-2), zt, (0.0, 2.0)).with_initial_time(2.0)).unwrap();
        assert!((back.initial_state().to_vector() - z.to_vector()).amax() < 1e-8);
        assert_eq!(back.times[0], 0.0);
        assert!(back.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn problem_validation() {
        let z = head_on();
        assert!(integrate(&SoftProblem::new(pot(0.1), z, (1.0, 0.0))).is_err());
        assert!(integrate(&SoftProblem::new(pot(0.1), z, (0.0, 1.0)).with_tolerances(1e-3, 1e-12)).is_err());
        let same = PhasePoint::new(Vec3::zeros(), Vec3::zeros(), Vec3::zeros(), Vec3::zeros());
        assert_eq!(
            integrate(&SoftProblem::new(pot(0.1), same, (0.0, 1.0))).unwrap_err(),
            SoftError::Coincident
        );
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let tr = integrate(&SoftProblem::new(pot(0.1), head_on(), (0.0, 0.2))).unwrap();
        assert!(matches!(detect_contact_window(&tr), Err(SoftError::TooShort { .. })));
    }

    #[test]
    fn csv_export_columns() {
        let tr = integrate(&SoftProblem::new(pot(0.5), head_on(), (0.0, 3.0))).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 15);
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(row.len(), 15);
        assert_eq!(row[0], 0.0);
        assert_eq!(row[14], 1.0);
    }
}
