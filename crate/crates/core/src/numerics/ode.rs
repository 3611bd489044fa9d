//! Dormand–Prince 5(4) integrator with step-size control and the
//! continuous extension of Hairer, Nørsett and Wanner (dopri5).

use nalgebra::SVector;
use thiserror::Error;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const PI_BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("invalid integrator settings: {0}")]
    Settings(String),
}

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &SVector<f64, N>) -> SVector<f64, N>;

    /// Largest step magnitude the system allows from state `y`.
    fn step_limit(&self, _t: f64, _y: &SVector<f64, N>) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_max: f64,
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            h_max: f64::INFINITY,
            h_init: None,
            max_steps: 2_000_000,
        }
    }
}

/// Interpolant over one accepted step `[t0, t0 + h]` (either sign of `h`).
#[derive(Debug, Clone)]
pub struct DenseSegment<const N: usize> {
    pub t0: f64,
    pub h: f64,
    rcont: [SVector<f64, N>; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn t_start(&self) -> f64 {
        self.t0.min(self.t0 + self.h)
    }

    pub fn t_end(&self) -> f64 {
        self.t0.max(self.t0 + self.h)
    }

    pub fn eval(&self, t: f64) -> SVector<f64, N> {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        r1 + (r2 + (r3 + (r4 + r5 * theta1) * theta) * theta1) * theta
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<SVector<f64, N>>,
    pub segments: Vec<DenseSegment<N>>,
    pub accepted: usize,
    pub rejected: usize,
}

fn err_norm<const N: usize>(
    err: &SVector<f64, N>,
    y0: &SVector<f64, N>,
    y1: &SVector<f64, N>,
    opts: &Dopri5Options,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sk = opts.abs_tol + opts.rel_tol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sk).powi(2);
    }
    (acc / N as f64).sqrt()
}

fn scaled_norm<const N: usize>(v: &SVector<f64, N>, y: &SVector<f64, N>, opts: &Dopri5Options) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sk = opts.abs_tol + opts.rel_tol * y[i].abs();
        acc += (v[i] / sk).powi(2);
    }
    (acc / N as f64).sqrt()
}

fn initial_step<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: &SVector<f64, N>,
    f0: &SVector<f64, N>,
    dir: f64,
    h_cap: f64,
    opts: &Dopri5Options,
) -> f64 {
    let d0 = scaled_norm(y0, y0, opts);
    let d1 = scaled_norm(f0, y0, opts);
    let mut h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(h_cap);
    let y1 = y0 + f0 * (dir * h);
    let f1 = sys.rhs(t0 + dir * h, &y1);
    let d2 = scaled_norm(&(f1 - f0), y0, opts) / h;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h).min(h1).min(h_cap)
}

/// Integrate from `(t0, y0)` to `t_end`; backward integration when `t_end < t0`.
pub fn solve<S, const N: usize>(
    sys: &S,
    t0: f64,
    y0: SVector<f64, N>,
    t_end: f64,
    opts: &Dopri5Options,
) -> Result<OdeSolution<N>, OdeError>
where
    S: OdeSystem<N>,
{
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(OdeError::Settings("tolerances must be positive".into()));
    }
    let mut sol = OdeSolution {
        times: vec![t0],
        states: vec![y0],
        segments: Vec::new(),
        accepted: 0,
        rejected: 0,
    };
    if t_end == t0 {
        return Ok(sol);
    }
    let dir = (t_end - t0).signum();
    let span = (t_end - t0).abs();
    let h_max = opts.h_max.min(span);

    let mut t = t0;
    let mut y = y0;
    let mut k1 = sys.rhs(t, &y);
    let mut h = match opts.h_init {
        Some(h) => h.abs().min(h_max),
        None => initial_step(sys, t, &y, &k1, dir, h_max.min(sys.step_limit(t, &y)), opts),
    };
    let mut fac_old = 1e-4_f64;
    let mut last_rejected = false;
    let mut steps = 0usize;

    while (t_end - t) * dir > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(OdeError::TooManySteps(opts.max_steps));
        }
        h = h.min(h_max).min(sys.step_limit(t, &y));
        let remaining = (t_end - t).abs();
        let last = h >= remaining * (1.0 - 1e-13);
        if last {
            h = remaining;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { t, h });
        }
        let hs = dir * h;

        let k2 = sys.rhs(t + C2 * hs, &(y + k1 * (hs * A21)));
        let k3 = sys.rhs(t + C3 * hs, &(y + (k1 * A31 + k2 * A32) * hs));
        let k4 = sys.rhs(t + C4 * hs, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * hs));
        let k5 = sys.rhs(t + C5 * hs, &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * hs));
        let k6 = sys.rhs(
            t + hs,
            &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * hs),
        );
        let y_new = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * hs;
        let t_new = if last { t_end } else { t + hs };
        let k7 = sys.rhs(t_new, &y_new);

        let err_vec = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * hs;
        let err = err_norm(&err_vec, &y, &y_new, opts);
        if !err.is_finite() || !y_new.iter().all(|c| c.is_finite()) {
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(OdeError::NonFinite(t));
            }
            h *= FAC_MIN;
            sol.rejected += 1;
            last_rejected = true;
            continue;
        }

        let fac11 = err.powf(0.2 - PI_BETA * 0.75);
        if err <= 1.0 {
            let mut fac = fac11 / fac_old.powf(PI_BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);

            let ydiff = y_new - y;
            let bspl = k1 * hs - ydiff;
            let rcont = [
                y,
                ydiff,
                bspl,
                ydiff - k7 * hs - bspl,
                (k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + k7 * D7) * hs,
            ];
            sol.segments.push(DenseSegment { t0: t, h: hs, rcont });
            t = t_new;
            y = y_new;
            k1 = k7;
            sol.times.push(t);
            sol.states.push(y);
            sol.accepted += 1;
            last_rejected = false;
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            sol.rejected += 1;
            last_rejected = true;
        }
    }
    Ok(sol)
}
