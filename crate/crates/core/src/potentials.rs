//! Reference potentials `Φ₀`, the hardening family `Φ₀/ε`, and a grid
//! validator for the structural hypotheses.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::numerics::roots::{self, RootError};

pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("origin blow-up violated: s = {0} (the standard family needs s > 0)")]
    OriginBlowUp(f64),
    #[error("boundary exponent beta = {0} must exceed 2")]
    InvalidBeta(f64),
    #[error("inverse is only defined for positive values, got {0}")]
    NonPositiveValue(f64),
    #[error("validation grid needs at least 100 points, got {0}")]
    GridTooSmall(usize),
    #[error("epsilon = {0} is outside (0, 1)")]
    InvalidEpsilon(f64),
    #[error("unknown potential family '{0}'")]
    UnknownFamily(String),
    #[error(transparent)]
    Root(#[from] RootError),
}

/// Envelope constants near the support boundary, valid on `[r0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedConstants {
    pub c1: f64,
    pub c2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub r0: f64,
}

/// Radial profile `Φ₀` together with its derivative.
#[derive(Clone)]
pub struct ReferencePotential {
    eval: RadialFn,
    deriv: RadialFn,
    /// Origin exponent; `None` for user-supplied profiles.
    pub s: Option<f64>,
    pub beta: f64,
    pub r0: f64,
    pub certified: Option<CertifiedConstants>,
    pub label: String,
}

impl fmt::Debug for ReferencePotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferencePotential")
            .field("label", &self.label)
            .field("s", &self.s)
            .field("beta", &self.beta)
            .field("r0", &self.r0)
            .field("certified", &self.certified)
            .finish()
    }
}

/// `Φ₀(r) = r^{-s} (1 - r)^β` on `(0, 1]`, zero beyond.
pub fn standard_family(s: f64, beta: f64) -> Result<ReferencePotential, PotentialError> {
    if !(s > 0.0) {
        return Err(PotentialError::OriginBlowUp(s));
    }
    if !(beta > 2.0) {
        return Err(PotentialError::InvalidBeta(beta));
    }
    let eval = move |r: f64| {
        if r >= 1.0 {
            0.0
        } else if r <= 0.0 {
            f64::INFINITY
        } else {
            r.powf(-s) * (1.0 - r).powf(beta)
        }
    };
    let deriv = move |r: f64| {
        if r >= 1.0 {
            0.0
        } else if r <= 0.0 {
            f64::NEG_INFINITY
        } else {
            let q = 1.0 - r;
            r.powf(-s - 1.0) * q.powf(beta - 1.0) * (-s * q - beta * r)
        }
    };
    Ok(ReferencePotential {
        eval: Arc::new(eval),
        deriv: Arc::new(deriv),
        s: Some(s),
        beta,
        r0: 0.5,
        certified: None,
        label: format!("standard(s={s}, beta={beta})"),
    })
}

impl ReferencePotential {
    /// Wrap a user-supplied profile. Hypotheses are not checked here; run
    /// [`validate_hypotheses`] before relying on it.
    pub fn custom<F, D>(eval: F, deriv: D, beta: f64, label: impl Into<String>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            s: None,
            beta,
            r0: 0.5,
            certified: None,
            label: label.into(),
        }
    }

    pub fn with_r0(mut self, r0: f64) -> Self {
        self.r0 = r0;
        self
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        (self.eval)(r)
    }

    #[inline]
    pub fn deriv(&self, r: f64) -> f64 {
        (self.deriv)(r)
    }

    /// Unique `r ∈ (0, 1)` with `Φ₀(r) = value`.
    pub fn inverse_on_support(&self, value: f64) -> Result<f64, PotentialError> {
        inverse_on_support(self, value)
    }

    pub fn harden(&self, epsilon: f64) -> Result<HardenedPotential, PotentialError> {
        HardenedPotential::new(self.clone(), epsilon)
    }
}

pub fn inverse_on_support(p: &ReferencePotential, value: f64) -> Result<f64, PotentialError> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(PotentialError::NonPositiveValue(value));
    }
    let mut lo = 0.5;
    let mut guard = 0;
    while p.eval(lo) <= value {
        lo *= 0.5;
        guard += 1;
        if guard > 1000 || lo == 0.0 {
            return Err(RootError::NotBracketed {
                a: lo,
                b: 1.0,
                fa: p.eval(lo) - value,
                fb: -value,
            }
            .into());
        }
    }
    let r = roots::brent(|r| p.eval(r) - value, lo, 1.0, 1e-16, 400)?;
    Ok(r)
}

/// `Φ^ε(r) = Φ₀(r)/ε`.
#[derive(Debug, Clone)]
pub struct HardenedPotential {
    pub base: ReferencePotential,
    pub epsilon: f64,
}

impl HardenedPotential {
    pub fn new(base: ReferencePotential, epsilon: f64) -> Result<Self, PotentialError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(PotentialError::InvalidEpsilon(epsilon));
        }
        Ok(Self { base, epsilon })
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.base.eval(r) / self.epsilon
    }

    #[inline]
    pub fn deriv(&self, r: f64) -> f64 {
        self.base.deriv(r) / self.epsilon
    }

    /// `∇Φ^ε(y)`; zero outside the unit ball.
    pub fn grad(&self, y: &Vec3) -> Vec3 {
        let r = y.norm();
        if r >= 1.0 || r == 0.0 {
            return Vec3::zeros();
        }
        y * (self.deriv(r) / r)
    }

    pub fn eval_vec(&self, y: &Vec3) -> f64 {
        self.eval(y.norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFailure {
    pub hypothesis: String,
    pub r: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub label: String,
    pub passed: bool,
    pub grid_size: usize,
    pub constants: Option<CertifiedConstants>,
    /// Whether the second differences were nonnegative over the whole grid.
    pub convex_on_grid: bool,
    pub failures: Vec<HypothesisFailure>,
}

/// Check sign, monotonicity, convexity, support and blow-up on a uniform
/// grid, then estimate the envelope constants on `[r0, 1 - 1/grid_size]`.
/// On success the constants are stored in `p.certified`.
pub fn validate_hypotheses(p: &mut ReferencePotential, grid_size: usize) -> Result<ValidationReport, PotentialError> {
    if grid_size < 100 {
        return Err(PotentialError::GridTooSmall(grid_size));
    }
    let mut failures = Vec::new();
    let mut fail = |hyp: &str, r: f64, detail: String| {
        failures.push(HypothesisFailure {
            hypothesis: hyp.to_string(),
            r,
            detail,
        })
    };
    let n = grid_size as f64;
    let h = 1.0 / n;

    for i in 1..grid_size {
        let r = i as f64 * h;
        let f = p.eval(r);
        let d = p.deriv(r);
        if !(f > 0.0 && f.is_finite()) {
            fail("P1", r, format!("potential not positive: {f:e}"));
        }
        if !(d < 0.0) {
            fail("P1", r, format!("derivative not negative: {d:e}"));
        }
    }

    let mut convex = true;
    for i in 2..grid_size - 1 {
        let r = i as f64 * h;
        let (a, b, c) = (p.eval(r - h), p.eval(r), p.eval(r + h));
        let d2 = a - 2.0 * b + c;
        let slack = 64.0 * f64::EPSILON * (a.abs() + 2.0 * b.abs() + c.abs());
        if d2 < -slack {
            convex = false;
            fail("P1", r, format!("second difference negative: {d2:e}"));
        }
    }

    for r in [1.0, 1.0 + h, 1.5, 2.0, 10.0] {
        let f = p.eval(r);
        if f != 0.0 {
            fail("P1", r, format!("potential nonzero outside support: {f:e}"));
        }
    }

    let near_origin = p.eval(1e-8);
    if !(near_origin > 1e6) {
        fail("P1", 1e-8, format!("no blow-up at the origin: {near_origin:e}"));
    }

    let r_hi = 1.0 - h;
    let mut constants = None;
    if p.r0 < r_hi {
        let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
        let (mut k1, mut k2) = (f64::INFINITY, 0.0f64);
        for i in 0..=grid_size {
            let r = p.r0 + (r_hi - p.r0) * i as f64 / n;
            let q = 1.0 - r;
            let phi = p.eval(r) / q.powf(p.beta);
            let dphi = p.deriv(r).abs() / q.powf(p.beta - 1.0);
            c1 = c1.min(phi);
            c2 = c2.max(phi);
            k1 = k1.min(dphi);
            k2 = k2.max(dphi);
        }
        if !(c1 > 0.0 && c2.is_finite()) {
            fail(
                "P2",
                p.r0,
                format!("envelope constants degenerate: c1 = {c1:e}, c2 = {c2:e}"),
            );
        }
        if !(k1 > 0.0 && k2.is_finite()) {
            fail(
                "P3",
                p.r0,
                format!("derivative envelope degenerate: k1 = {k1:e}, k2 = {k2:e}"),
            );
        }
        constants = Some(CertifiedConstants {
            c1,
            c2,
            kappa1: k1,
            kappa2: k2,
            r0: p.r0,
        });
    } else {
        fail("P2", p.r0, "r0 leaves no room below the boundary".into());
    }

    let passed = failures.is_empty();
    if passed {
        p.certified = constants;
    }
    Ok(ValidationReport {
        label: p.label.clone(),
        passed,
        grid_size,
        constants,
        convex_on_grid: convex,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Standard,
}

/// Config-file form, e.g. `{"family": "standard", "s": 1.0, "beta": 3.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub family: Family,
    pub s: f64,
    pub beta: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            family: Family::Standard,
            s: 1.0,
            beta: 3.0,
        }
    }
}

impl PotentialSpec {
    pub fn build(&self) -> Result<ReferencePotential, PotentialError> {
        match self.family {
            Family::Standard => standard_family(self.s, self.beta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn std13() -> ReferencePotential {
        standard_family(1.0, 3.0).unwrap()
    }

    #[test]
    fn standard_values() {
        let p = std13();
        assert!((p.eval(0.5) - 0.25).abs() < 1e-15);
        assert_eq!(p.eval(1.0), 0.0);
        assert_eq!(p.eval(2.0), 0.0);
        assert!((p.deriv(0.5) + 2.0).abs() < 1e-14);
        let fd = (p.eval(0.5 + 1e-6) - p.eval(0.5 - 1e-6)) / 2e-6;
        assert!((fd + 2.0).abs() < 1e-6);
    }

    #[test]
    fn parameter_rejection() {
        assert_eq!(
            standard_family(-1.0, 3.0).unwrap_err(),
            PotentialError::OriginBlowUp(-1.0)
        );
        assert_eq!(
            standard_family(0.0, 3.0).unwrap_err(),
            PotentialError::OriginBlowUp(0.0)
        );
        assert_eq!(standard_family(1.0, 2.0).unwrap_err(), PotentialError::InvalidBeta(2.0));
        assert!(standard_family(1.0, 1.5).is_err());
        assert!(std13().harden(1.0).is_err());
        assert!(std13().harden(0.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        let p = std13();
        assert!((p.inverse_on_support(0.25).unwrap() - 0.5).abs() < 1e-14);
        assert!(p.inverse_on_support(0.0).is_err());
        assert!(p.inverse_on_support(-1.0).is_err());

        let oracle = roots::bisect(|r| p.eval(r) - 1e-3, 1e-6, 1.0, 200).unwrap();
        assert!((p.inverse_on_support(1e-3).unwrap() - oracle).abs() < 1e-14);

        let mut last = 1.0;
        for k in 0..12 {
            let r = p.inverse_on_support(10f64.powi(k - 4)).unwrap();
            assert!(r < last);
            last = r;
        }
        assert!(last < 1e-7);
    }

    #[test]
    fn hardened_is_exact_scaling() {
        let p = std13();
        for eps in [0.5, 1e-3, 2f64.powi(-20)] {
            let h = p.harden(eps).unwrap();
            for r in [0.1, 0.5, 0.9, 0.999] {
                assert_eq!(h.eval(r) * eps, p.eval(r));
            }
        }
        let h = p.harden(0.1).unwrap();
        assert_eq!(h.grad(&Vec3::new(1.5, 0.0, 0.0)), Vec3::zeros());
        let g = h.grad(&Vec3::new(0.0, 0.5, 0.0));
        assert!((g - Vec3::new(0.0, -20.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn validator_standard_family() {
        let mut p = std13();
        let rep = validate_hypotheses(&mut p, 1000).unwrap();
        assert!(rep.passed, "{:?}", rep.failures);
        let c = p.certified.unwrap();
        assert!(c.c1 <= 1.0 + 1e-2 && c.c1 >= 1.0);
        assert!((c.c2 - 2.0).abs() < 1e-12);
        assert!(c.c1 <= c.c2 && c.kappa1 <= c.kappa2 && c.kappa1 > 0.0);
        // |Φ₀'|/(1-r)² = (1 + 2r)/r² for s = 1, β = 3
        assert!((c.kappa2 - 8.0).abs() < 1e-12);
        assert!((c.kappa1 - 3.0).abs() < 0.02);

        let mut q = standard_family(1.0, 2.5).unwrap();
        assert!(validate_hypotheses(&mut q, 500).unwrap().passed);
        assert!(validate_hypotheses(&mut q, 99).is_err());
    }

    #[test]
    fn validator_flags_sign_violation() {
        // bump that makes the profile increase on (0.6, 0.7)
        let bump = |r: f64| if (0.6..0.7).contains(&r) { 2.0 * (r - 0.6) } else { 0.0 };
        let eval = move |r: f64| std13().eval(r) + bump(r);
        let deriv = move |r: f64| {
            let base = standard_family(1.0, 3.0).unwrap().deriv(r);
            if (0.6..0.7).contains(&r) {
                base + 2.0
            } else {
                base
            }
        };
        let mut p = ReferencePotential::custom(eval, deriv, 3.0, "bumped");
        let rep = validate_hypotheses(&mut p, 1000).unwrap();
        assert!(!rep.passed);
        assert!(p.certified.is_none());
        let f = rep.failures.iter().find(|f| f.detail.contains("derivative")).unwrap();
        assert_eq!(f.hypothesis, "P1");
        assert!((0.6..0.7).contains(&f.r));
    }

    #[test]
    fn config_form_round_trip() {
        let spec: PotentialSpec = serde_json::from_str(r#"{"family":"standard","s":1.0,"beta":3.0}"#).unwrap();
        assert_eq!(spec, PotentialSpec::default());
        assert!(serde_json::from_str::<PotentialSpec>(r#"{"family":"lj","s":1.0,"beta":3.0}"#).is_err());
    }

    proptest! {
        #[test]
        fn derivative_matches_finite_difference(r in 0.01f64..0.999, s in 0.5f64..3.0, beta in 2.1f64..6.0) {
            let p = standard_family(s, beta).unwrap();
            let h = 1e-6;
            let fd = (p.eval(r + h) - p.eval(r - h)) / (2.0 * h);
            let d = p.deriv(r);
            prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1e-3), "r={r} fd={fd} d={d}");
        }

        #[test]
        fn inverse_round_trip(r in 0.05f64..0.95) {
            let p = std13();
            let back = p.inverse_on_support(p.eval(r)).unwrap();
            prop_assert!((back - r).abs() < 1e-12);
        }
    }
}
