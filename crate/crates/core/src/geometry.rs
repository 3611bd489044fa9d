//! Phase-space types for a pair of unit-diameter spheres, the centre-of-mass
//! change of variables, and the conserved functionals.

use nalgebra::{SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Vec12 = SVector<f64, 12>;

/// Mass of each body. The dynamics modules assume unit mass throughout.
pub const MASS: f64 = 1.0;

/// Admissibility tolerance on the centre distance `|x - x̄| >= 1 - TOL_GEOM`.
pub const TOL_GEOM: f64 = 1e-9;

/// Default tolerance for [`classify`].
pub const TOL_CLASSIFY: f64 = 1e-12;

/// State of both bodies: positions `x`, `x̄` and velocities `v`, `v̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec3,
    pub x_bar: Vec3,
    pub v: Vec3,
    pub v_bar: Vec3,
}

impl PhasePoint {
    pub fn new(x: Vec3, x_bar: Vec3, v: Vec3, v_bar: Vec3) -> Self {
        Self { x, x_bar, v, v_bar }
    }

    pub fn from_arrays(x: [f64; 3], x_bar: [f64; 3], v: [f64; 3], v_bar: [f64; 3]) -> Self {
        Self::new(x.into(), x_bar.into(), v.into(), v_bar.into())
    }

    /// Flattened `[x, x̄, v, v̄]`.
    pub fn to_vector(&self) -> Vec12 {
        let mut z = Vec12::zeros();
        z.fixed_rows_mut::<3>(0).copy_from(&self.x);
        z.fixed_rows_mut::<3>(3).copy_from(&self.x_bar);
        z.fixed_rows_mut::<3>(6).copy_from(&self.v);
        z.fixed_rows_mut::<3>(9).copy_from(&self.v_bar);
        z
    }

    pub fn from_vector(z: &Vec12) -> Self {
        Self {
            x: z.fixed_rows::<3>(0).into_owned(),
            x_bar: z.fixed_rows::<3>(3).into_owned(),
            v: z.fixed_rows::<3>(6).into_owned(),
            v_bar: z.fixed_rows::<3>(9).into_owned(),
        }
    }

    /// Positions `X = [x, x̄]`.
    pub fn positions(&self) -> Vec6 {
        stack(&self.x, &self.x_bar)
    }

    /// Velocities `V = [v, v̄]`.
    pub fn velocities(&self) -> Vec6 {
        stack(&self.v, &self.v_bar)
    }

    pub fn from_blocks(positions: &Vec6, velocities: &Vec6) -> Self {
        let (x, x_bar) = split(positions);
        let (v, v_bar) = split(velocities);
        Self { x, x_bar, v, v_bar }
    }

    pub fn relative_position(&self) -> Vec3 {
        self.x - self.x_bar
    }

    pub fn relative_velocity(&self) -> Vec3 {
        self.v - self.v_bar
    }

    pub fn separation(&self) -> f64 {
        self.relative_position().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }

    /// Hard-sphere admissibility: finite and not overlapping beyond `tol`.
    pub fn is_admissible(&self, tol: f64) -> bool {
        self.is_finite() && self.separation() >= 1.0 - tol
    }

    /// Free flight for a time `t`.
    pub fn drift(&self, t: f64) -> Self {
        Self {
            x: self.x + t * self.v,
            x_bar: self.x_bar + t * self.v_bar,
            ..*self
        }
    }
}

pub fn stack(a: &Vec3, b: &Vec3) -> Vec6 {
    Vec6::new(a[0], a[1], a[2], b[0], b[1], b[2])
}

pub fn split(u: &Vec6) -> (Vec3, Vec3) {
    (u.fixed_rows::<3>(0).into_owned(), u.fixed_rows::<3>(3).into_owned())
}

/// Centre-of-mass coordinates: relative pair `(y, w)` and barycentric pair `(ȳ, w̄)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub y: Vec3,
    pub w: Vec3,
    pub y_bar: Vec3,
    pub w_bar: Vec3,
}

pub fn to_reduced(z: &PhasePoint) -> ReducedState {
    ReducedState {
        y: z.x - z.x_bar,
        w: z.v - z.v_bar,
        y_bar: 0.5 * (z.x + z.x_bar),
        w_bar: 0.5 * (z.v + z.v_bar),
    }
}

pub fn from_reduced(r: &ReducedState) -> PhasePoint {
    PhasePoint {
        x: r.y_bar + 0.5 * r.y,
        x_bar: r.y_bar - 0.5 * r.y,
        v: r.w_bar + 0.5 * r.w,
        v_bar: r.w_bar - 0.5 * r.w,
    }
}

/// Invariants of the relative motion: `E0 = |w0|²/2` and `A0 = |y0 ∧ w0|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionInvariants {
    pub e0: f64,
    pub a0: f64,
}

impl CollisionInvariants {
    pub fn from_relative(y: &Vec3, w: &Vec3) -> Self {
        Self {
            e0: 0.5 * w.norm_squared(),
            a0: y.cross(w).norm_squared(),
        }
    }

    pub fn from_phase(z: &PhasePoint) -> Self {
        Self::from_relative(&z.relative_position(), &z.relative_velocity())
    }

    /// Squared normal speed at contact, `2E0 - A0`, for data with `|y0| = 1`.
    pub fn normal_energy(&self) -> f64 {
        2.0 * self.e0 - self.a0
    }
}

/// Total linear momentum `m v + m v̄`.
pub fn linear_momentum(z: &PhasePoint) -> Vec3 {
    MASS * z.v + MASS * z.v_bar
}

/// Total angular momentum about the point `a`.
pub fn angular_momentum(z: &PhasePoint, a: &Vec3) -> Vec3 {
    -MASS * (a - z.x).cross(&z.v) - MASS * (a - z.x_bar).cross(&z.v_bar)
}

/// Kinetic energy functional `m|v|² + m|v̄|²` (no factor one half).
pub fn kinetic_energy(z: &PhasePoint) -> f64 {
    MASS * z.v.norm_squared() + MASS * z.v_bar.norm_squared()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigClass {
    PreCollisional,
    PostCollisional,
    Grazing,
    NonContact,
}

pub fn classify(z: &PhasePoint, tol: f64) -> ConfigClass {
    let y = z.relative_position();
    if (y.norm() - 1.0).abs() > tol {
        return ConfigClass::NonContact;
    }
    let radial = y.dot(&z.relative_velocity());
    if radial.abs() <= tol {
        ConfigClass::Grazing
    } else if radial < 0.0 {
        ConfigClass::PreCollisional
    } else {
        ConfigClass::PostCollisional
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v3(a: f64, b: f64, c: f64) -> Vec3 {
        Vec3::new(a, b, c)
    }

    #[test]
    fn reduced_coordinates_by_hand() {
        let z = PhasePoint::new(v3(1., 0., 0.), Vec3::zeros(), v3(0., 1., 0.), v3(0., -1., 0.));
        let r = to_reduced(&z);
        assert_eq!(r.y, v3(1., 0., 0.));
        assert_eq!(r.w, v3(0., 2., 0.));
        assert_eq!(r.y_bar, v3(0.5, 0., 0.));
        assert_eq!(r.w_bar, Vec3::zeros());

        let same = PhasePoint::new(v3(3., 1., 0.), v3(0., 0., 2.), v3(1., 2., 3.), v3(1., 2., 3.));
        assert_eq!(to_reduced(&same).w, Vec3::zeros());
    }

    #[test]
    fn from_reduced_by_hand() {
        let z = from_reduced(&ReducedState {
            y: v3(1., 0., 0.),
            w: Vec3::zeros(),
            y_bar: Vec3::zeros(),
            w_bar: Vec3::zeros(),
        });
        assert_eq!(z.x, v3(0.5, 0., 0.));
        assert_eq!(z.x_bar, v3(-0.5, 0., 0.));
        assert_eq!(z.v, Vec3::zeros());
        assert_eq!(z.v_bar, Vec3::zeros());

        let z = from_reduced(&ReducedState {
            y: v3(0., 0., 1.),
            w: v3(0., 0., -2.),
            y_bar: v3(1., 1., 1.),
            w_bar: v3(1., 0., 0.),
        });
        assert_eq!(z.x, v3(1., 1., 1.5));
        assert_eq!(z.v, v3(1., 0., -1.));
    }

    #[test]
    fn momentum_and_energy_by_hand() {
        let z = PhasePoint::new(Vec3::zeros(), Vec3::zeros(), v3(1., 0., 0.), v3(-1., 0., 0.));
        assert_eq!(linear_momentum(&z), Vec3::zeros());
        let z = PhasePoint::new(Vec3::zeros(), Vec3::zeros(), v3(1., 2., 3.), v3(4., 5., 6.));
        assert_eq!(linear_momentum(&z), v3(5., 7., 9.));

        assert_eq!(angular_momentum(&z, &Vec3::zeros()), Vec3::zeros());
        let z = PhasePoint::new(v3(1., 0., 0.), v3(-1., 0., 0.), v3(0., 1., 0.), v3(0., -1., 0.));
        assert_eq!(angular_momentum(&z, &Vec3::zeros()), v3(0., 0., 2.));

        let still = PhasePoint::new(Vec3::zeros(), v3(2., 0., 0.), Vec3::zeros(), Vec3::zeros());
        assert_eq!(kinetic_energy(&still), 0.0);
        let z = PhasePoint::new(Vec3::zeros(), v3(2., 0., 0.), v3(1., 0., 0.), v3(0., 2., 0.));
        assert_eq!(kinetic_energy(&z), 5.0);
    }

    #[test]
    fn classification_cases() {
        let pre = PhasePoint::new(Vec3::zeros(), v3(1., 0., 0.), v3(1., 0., 0.), Vec3::zeros());
        assert_eq!(classify(&pre, TOL_CLASSIFY), ConfigClass::PreCollisional);
        let graze = PhasePoint::new(Vec3::zeros(), v3(1., 0., 0.), v3(0., 1., 0.), Vec3::zeros());
        assert_eq!(classify(&graze, TOL_CLASSIFY), ConfigClass::Grazing);
        let post = PhasePoint::new(Vec3::zeros(), v3(1., 0., 0.), v3(-1., 0., 0.), Vec3::zeros());
        assert_eq!(classify(&post, TOL_CLASSIFY), ConfigClass::PostCollisional);
        let far = PhasePoint::new(Vec3::zeros(), v3(2., 0., 0.), v3(1., 0., 0.), Vec3::zeros());
        assert_eq!(classify(&far, TOL_CLASSIFY), ConfigClass::NonContact);
    }

    fn arb_vec3() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-10.0f64..10.0).prop_map(Vec3::from)
    }

    fn arb_phase() -> impl Strategy<Value = PhasePoint> {
        (arb_vec3(), arb_vec3(), arb_vec3(), arb_vec3()).prop_map(|(x, xb, v, vb)| PhasePoint::new(x, xb, v, vb))
    }

    proptest! {
        #[test]
        fn reduced_round_trip(z in arb_phase()) {
            let back = from_reduced(&to_reduced(&z));
            let diff = back.to_vector() - z.to_vector();
            prop_assert!(diff.amax() <= 1e-15 * z.to_vector().amax().max(1.0));
        }

        #[test]
        fn angular_momentum_change_of_origin(z in arb_phase(), a in arb_vec3(), b in arb_vec3()) {
            let lhs = angular_momentum(&z, &a) - angular_momentum(&z, &b);
            let rhs = -MASS * (a - b).cross(&(z.v + z.v_bar));
            prop_assert!((lhs - rhs).amax() <= 1e-12 * (1.0 + rhs.amax()) * 100.0);
        }

        #[test]
        fn classification_is_stable(
            dir in arb_vec3().prop_filter("nonzero", |d| d.norm() > 1e-3),
            w in arb_vec3(),
            bump in prop::array::uniform12(-1.0f64..1.0),
        ) {
            let tol = 1e-6;
            let n = dir.normalize();
            let z = PhasePoint::new(n, Vec3::zeros(), w, Vec3::zeros());
            let mut p = z.to_vector();
            for (c, b) in p.iter_mut().zip(bump.iter()) {
                *c += b * tol / 10.0;
            }
            let before = classify(&z, tol);
            let after = classify(&PhasePoint::from_vector(&p), tol);
            let flipped = matches!(
                (before, after),
                (ConfigClass::PreCollisional, ConfigClass::PostCollisional)
                    | (ConfigClass::PostCollisional, ConfigClass::PreCollisional)
            );
            prop_assert!(!flipped);
        }
    }
}
