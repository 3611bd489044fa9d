//! Exact hard-sphere pair dynamics: Boltzmann scattering, collision times,
//! trajectory surgery, and the mass-inertia quasi-reflection.

use nalgebra::{Matrix3, Matrix6, SMatrix, SVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{
    angular_momentum, kinetic_energy, linear_momentum, split, stack, PhasePoint, Vec3, Vec6, TOL_GEOM,
};

pub type Matrix12 = SMatrix<f64, 12, 12>;
pub type Vec12 = SVector<f64, 12>;

/// Tolerance on `|n| = 1` for collision normals.
pub const TOL_UNIT: f64 = 1e-12;
/// Normalised discriminant band classified as a grazing touch.
pub const TOL_DISC: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HardError {
    #[error("collision normal is not a unit vector (|n| = {0})")]
    NotUnit(f64),
    #[error("initial data overlap: |x - x̄| = {0}")]
    Overlap(f64),
    #[error("initial data are not finite")]
    NonFinite,
    #[error("inertia tensor is not symmetric")]
    NotSymmetric,
    #[error("mass and inertia must be positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("weighted normal vanishes")]
    DegenerateNormal,
}

/// `σ_n = I - 2 ν̂ ⊗ ν̂` with `ν̂ = (n, -n)/√2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringMatrix {
    pub matrix: Matrix6<f64>,
    pub normal: Vec3,
    pub nu_hat: Vec6,
}

impl ScatteringMatrix {
    pub fn apply(&self, velocities: &Vec6) -> Vec6 {
        self.matrix * velocities
    }
}

fn check_unit(n: &Vec3) -> Result<(), HardError> {
    let len = n.norm();
    if (len - 1.0).abs() > TOL_UNIT || !len.is_finite() {
        Err(HardError::NotUnit(len))
    } else {
        Ok(())
    }
}

pub fn boltzmann_matrix(n: &Vec3) -> Result<ScatteringMatrix, HardError> {
    check_unit(n)?;
    let nu_hat = stack(n, &-n) / 2f64.sqrt();
    let matrix = Matrix6::identity() - 2.0 * nu_hat * nu_hat.transpose();
    Ok(ScatteringMatrix {
        matrix,
        normal: *n,
        nu_hat,
    })
}

/// Closed form `v' = v - ((v - v̄)·n) n`, `v̄' = v̄ + ((v - v̄)·n) n`.
pub fn scatter_velocities(v: &Vec3, v_bar: &Vec3, n: &Vec3) -> (Vec3, Vec3) {
    let k = (v - v_bar).dot(n);
    (v - k * n, v_bar + k * n)
}

fn cross_matrix(n: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -n[2], n[1], n[2], 0.0, -n[0], -n[1], n[0], 0.0)
}

/// Linear system `E_n V = E_n V'` encoding linear and angular momentum
/// balance at a contact with `x = 0`, `x̄ = n` about the midpoint `n/2`.
pub fn conservation_system(n: &Vec3) -> Matrix6<f64> {
    let c = cross_matrix(n);
    let mut e = Matrix6::zeros();
    e.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    e.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    e.fixed_view_mut::<3, 3>(3, 0).copy_from(&c);
    e.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-c));
    e
}

/// Residuals of the collision laws for a pre/post pair sharing positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionResiduals {
    pub linear_momentum: f64,
    pub angular_momentum: f64,
    /// Relative to the incoming kinetic energy (absolute when it is zero).
    pub kinetic_energy: f64,
    pub restitution: f64,
}

impl CollisionResiduals {
    pub fn max(&self) -> f64 {
        self.linear_momentum
            .max(self.angular_momentum)
            .max(self.kinetic_energy)
            .max(self.restitution)
    }
}

pub fn collision_residuals(pre: &PhasePoint, post: &PhasePoint, n: &Vec3) -> CollisionResiduals {
    let a = 0.5 * (pre.x + pre.x_bar);
    let ke = kinetic_energy(pre);
    let rel_pre = pre.relative_velocity().dot(n);
    let rel_post = post.relative_velocity().dot(n);
    CollisionResiduals {
        linear_momentum: (linear_momentum(post) - linear_momentum(pre)).amax(),
        angular_momentum: (angular_momentum(post, &a) - angular_momentum(pre, &a)).amax(),
        kinetic_energy: (kinetic_energy(post) - ke).abs() / if ke > 0.0 { ke } else { 1.0 },
        restitution: (rel_post + rel_pre).abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Contact {
    None,
    Grazing(f64),
    Transversal(f64),
    /// In contact at `t = 0` with zero relative velocity.
    Resting,
}

fn find_contact(z0: &PhasePoint) -> Result<Contact, HardError> {
    if !z0.is_finite() {
        return Err(HardError::NonFinite);
    }
    let y = z0.relative_position();
    let w = z0.relative_velocity();
    let dist = y.norm();
    if dist < 1.0 - TOL_GEOM {
        return Err(HardError::Overlap(dist));
    }
    let mut c = y.norm_squared() - 1.0;
    if c.abs() <= 2.0 * TOL_GEOM {
        c = 0.0;
    }
    let a = w.norm_squared();
    if a == 0.0 {
        return Ok(if c == 0.0 { Contact::Resting } else { Contact::None });
    }
    let half_b = y.dot(&w);
    let speed = a.sqrt();
    // discriminant scaled by |w|², i.e. 1 - (impact parameter)²
    let disc = (half_b / speed).powi(2) - c;
    if disc < -TOL_DISC {
        return Ok(Contact::None);
    }
    if disc <= TOL_DISC {
        let t = -half_b / a;
        return Ok(if t >= 0.0 { Contact::Grazing(t) } else { Contact::None });
    }
    let root = speed * disc.sqrt();
    let (t1, t2) = if c == 0.0 {
        (0.0, -2.0 * half_b / a)
    } else {
        let q = -(half_b + root.copysign(half_b));
        let (r1, r2) = (q / a, c / q);
        (r1.min(r2), r1.max(r2))
    };
    if t1 >= 0.0 {
        Ok(Contact::Transversal(t1))
    } else if t2 >= 0.0 {
        // only reachable with c == 0: in contact and separating
        Ok(Contact::Transversal(0.0))
    } else {
        Ok(Contact::None)
    }
}

/// Least `t ≥ 0` with `|y₀ + t w₀| = 1`.
pub fn collision_time(z0: &PhasePoint) -> Result<Option<f64>, HardError> {
    Ok(match find_contact(z0)? {
        Contact::Grazing(t) | Contact::Transversal(t) => Some(t),
        Contact::Resting => Some(0.0),
        Contact::None => None,
    })
}

/// Piecewise-linear hard-sphere solution with at most one velocity jump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardTrajectory {
    pub initial: PhasePoint,
    pub collision_time: Option<f64>,
    pub pre_velocities: Vec6,
    pub post_velocities: Vec6,
    pub grazing: bool,
    /// Unit normal `x̄(τ) - x(τ)` for a transversal collision.
    pub normal: Option<Vec3>,
    /// Positions at the collision time.
    pub contact_positions: Vec6,
}

pub fn surgery_solve(z0: &PhasePoint) -> Result<HardTrajectory, HardError> {
    let contact = find_contact(z0)?;
    let v0 = z0.velocities();
    let x0 = z0.positions();
    let linear = |collision_time, grazing| HardTrajectory {
        initial: *z0,
        collision_time,
        pre_velocities: v0,
        post_velocities: v0,
        grazing,
        normal: None,
        contact_positions: x0 + collision_time.unwrap_or(0.0) * v0,
    };
    match contact {
        Contact::None => Ok(linear(None, false)),
        Contact::Resting => Ok(linear(None, true)),
        Contact::Grazing(t) => Ok(linear(Some(t), true)),
        Contact::Transversal(tau) => {
            let xc = x0 + tau * v0;
            let (x, x_bar) = split(&xc);
            let n = (x_bar - x).normalize();
            let sigma = boltzmann_matrix(&n)?;
            let separating = z0.relative_position().dot(&z0.relative_velocity()) > 0.0;
            let (pre, post) = if tau == 0.0 && separating {
                (sigma.apply(&v0), v0)
            } else {
                (v0, sigma.apply(&v0))
            };
            Ok(HardTrajectory {
                initial: *z0,
                collision_time: Some(tau),
                pre_velocities: pre,
                post_velocities: post,
                grazing: false,
                normal: Some(n),
                contact_positions: xc,
            })
        }
    }
}

impl HardTrajectory {
    /// Velocities at time `t`, left-continuous at the collision time.
    pub fn velocities_at(&self, t: f64) -> Vec6 {
        match self.collision_time {
            Some(tau) if t > tau => self.post_velocities,
            _ => self.pre_velocities,
        }
    }

    pub fn eval(&self, t: f64) -> PhasePoint {
        eval_hard(self, t)
    }

    /// Size of the velocity jump, `√2 |w₀·n|` for a transversal collision.
    pub fn jump(&self) -> f64 {
        (self.post_velocities - self.pre_velocities).norm()
    }
}

pub fn eval_hard(tr: &HardTrajectory, t: f64) -> PhasePoint {
    match tr.collision_time {
        Some(tau) => {
            let v = tr.velocities_at(t);
            let x = tr.contact_positions + (t - tau) * v;
            PhasePoint::from_blocks(&x, &v)
        }
        None => {
            let v = tr.pre_velocities;
            PhasePoint::from_blocks(&(tr.initial.positions() + t * v), &v)
        }
    }
}

/// Mass and inertia of a rigid body, with `M = diag(√m I, √m I, √J, √J)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassInertia {
    pub m: f64,
    pub j: Matrix3<f64>,
    pub m_matrix: Matrix12,
    m_inverse: Matrix12,
}

impl MassInertia {
    pub fn new(m: f64, j: Matrix3<f64>) -> Result<Self, HardError> {
        if !(m > 0.0) {
            return Err(HardError::NotPositiveDefinite(m));
        }
        if (j - j.transpose()).amax() > 1e-12 * j.amax().max(1.0) {
            return Err(HardError::NotSymmetric);
        }
        let sym = 0.5 * (j + j.transpose());
        let eig = SymmetricEigen::new(sym);
        let lmin = eig.eigenvalues.min();
        if !(lmin > 0.0) {
            return Err(HardError::NotPositiveDefinite(lmin));
        }
        let q = eig.eigenvectors;
        let root = q * Matrix3::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * q.transpose();
        let root_inv = q * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * q.transpose();

        let mut mm = Matrix12::zeros();
        let mut mi = Matrix12::zeros();
        let sm = m.sqrt();
        for k in 0..6 {
            mm[(k, k)] = sm;
            mi[(k, k)] = 1.0 / sm;
        }
        for off in [6, 9] {
            mm.fixed_view_mut::<3, 3>(off, off).copy_from(&root);
            mi.fixed_view_mut::<3, 3>(off, off).copy_from(&root_inv);
        }
        Ok(Self {
            m,
            j: sym,
            m_matrix: mm,
            m_inverse: mi,
        })
    }

    pub fn m_inverse(&self) -> &Matrix12 {
        &self.m_inverse
    }
}

/// `σ_β = M⁻¹ (I - 2 ν̂ ⊗ ν̂) M` with `ν̂ = M⁻¹ν / |M⁻¹ν|`.
pub fn quasi_reflection(mi: &MassInertia, nu: &Vec12) -> Result<Matrix12, HardError> {
    let len = nu.norm();
    if (len - 1.0).abs() > TOL_UNIT {
        return Err(HardError::NotUnit(len));
    }
    let weighted = mi.m_inverse * nu;
    let wn = weighted.norm();
    if !(wn > 0.0) {
        return Err(HardError::DegenerateNormal);
    }
    let nu_hat = weighted / wn;
    let reflect = Matrix12::identity() - 2.0 * nu_hat * nu_hat.transpose();
    Ok(mi.m_inverse * reflect * mi.m_matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v3(a: f64, b: f64, c: f64) -> Vec3 {
        Vec3::new(a, b, c)
    }

    #[test]
    fn boltzmann_examples() {
        let s = boltzmann_matrix(&v3(1., 0., 0.)).unwrap();
        let out = s.apply(&stack(&v3(1., 0., 0.), &Vec3::zeros()));
        assert!((out - stack(&Vec3::zeros(), &v3(1., 0., 0.))).amax() < 1e-15);

        let v = stack(&v3(0., 1., 0.), &v3(0., -2., 5.));
        assert!((s.apply(&v) - v).amax() < 1e-15);

        let n = v3(0., 0., 1.);
        let s = boltzmann_matrix(&n).unwrap();
        let v = stack(&v3(1., 2., 3.), &v3(-1., 0., 1.));
        let out = s.apply(&v);
        assert!((out - stack(&v3(1., 2., 1.), &v3(-1., 0., 3.))).amax() < 1e-14);
        let pre = PhasePoint::from_blocks(&stack(&Vec3::zeros(), &n), &v);
        let post = PhasePoint::from_blocks(&pre.positions(), &out);
        assert!(collision_residuals(&pre, &post, &n).max() < 1e-14);

        assert!(matches!(boltzmann_matrix(&v3(1., 1., 0.)), Err(HardError::NotUnit(_))));
    }

    #[test]
    fn conservation_system_is_singular() {
        let e = conservation_system(&v3(1., 0., 0.));
        assert!(e.determinant().abs() < 1e-12);
        let sv = e.singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        assert!(s[5] < 1e-10 && s[4] > 1e-3);
    }

    #[test]
    fn collision_time_examples() {
        let z = PhasePoint::new(v3(-2., 0., 0.), Vec3::zeros(), v3(1., 0., 0.), Vec3::zeros());
        assert!((collision_time(&z).unwrap().unwrap() - 1.0).abs() < 1e-15);

        let z = PhasePoint::new(v3(-2., 0., 0.), Vec3::zeros(), Vec3::zeros(), Vec3::zeros());
        assert_eq!(collision_time(&z).unwrap(), None);

        let z = PhasePoint::new(v3(-2., 0.5, 0.), Vec3::zeros(), v3(1., 0., 0.), Vec3::zeros());
        let t = collision_time(&z).unwrap().unwrap();
        assert!((t - (2.0 - 3f64.sqrt() / 2.0)).abs() < 1e-14);
        let oracle = crate::numerics::roots::bisect(
            |s| (z.relative_position() + s * z.relative_velocity()).norm() - 1.0,
            0.0,
            1.5,
            200,
        )
        .unwrap();
        assert!((t - oracle).abs() < 1e-14);

        let z = PhasePoint::new(v3(0.5, 0., 0.), Vec3::zeros(), Vec3::zeros(), Vec3::zeros());
        assert!(matches!(collision_time(&z), Err(HardError::Overlap(_))));
    }

    #[test]
    fn surgery_head_on() {
        let z = PhasePoint::new(Vec3::zeros(), v3(2., 0., 0.), v3(1., 0., 0.), Vec3::zeros());
        let tr = surgery_solve(&z).unwrap();
        assert_eq!(tr.collision_time, Some(1.0));
        assert!(!tr.grazing);
        let (v, vb) = split(&tr.post_velocities);
        assert!(v.norm() < 1e-15 && (vb - v3(1., 0., 0.)).norm() < 1e-15);
        assert_eq!(eval_hard(&tr, 1.0).velocities(), z.velocities());
        let later = eval_hard(&tr, 3.0);
        assert!((later.x - v3(1., 0., 0.)).norm() < 1e-15);
        assert!((later.x_bar - v3(4., 0., 0.)).norm() < 1e-15);
        assert!((eval_hard(&tr, 0.5).x - v3(0.5, 0., 0.)).norm() < 1e-15);
        assert!((tr.jump() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn surgery_grazing_and_separating() {
        let z = PhasePoint::new(Vec3::zeros(), v3(1., 0., 0.), v3(0., 0.2, 0.), v3(0., -0.2, 0.));
        let tr = surgery_solve(&z).unwrap();
        assert!(tr.grazing);
        assert_eq!(tr.pre_velocities, tr.post_velocities);
        assert_eq!(eval_hard(&tr, 5.0).velocities(), z.velocities());

        let z = PhasePoint::new(Vec3::zeros(), v3(3., 0., 0.), v3(-1., 0., 0.), Vec3::zeros());
        let tr = surgery_solve(&z).unwrap();
        assert_eq!(tr.collision_time, None);
        assert!(!tr.grazing);
        assert!((eval_hard(&tr, -4.0).x - v3(4., 0., 0.)).norm() < 1e-15);

        let z = PhasePoint::new(Vec3::zeros(), v3(1., 0., 0.), Vec3::zeros(), Vec3::zeros());
        let tr = surgery_solve(&z).unwrap();
        assert!(tr.grazing && tr.collision_time.is_none());
    }

    #[test]
    fn surgery_from_post_collisional_contact() {
        let z = PhasePoint::new(Vec3::zeros(), v3(1., 0., 0.), v3(-1., 0.3, 0.), Vec3::zeros());
        let tr = surgery_solve(&z).unwrap();
        assert_eq!(tr.collision_time, Some(0.0));
        assert_eq!(tr.post_velocities, z.velocities());
        let before = eval_hard(&tr, -1.0);
        assert!(before.separation() >= 1.0 - 1e-12);
        assert!(before.relative_position().dot(&before.relative_velocity()) < 0.0);
    }

    #[test]
    fn quasi_reflection_identity_inertia() {
        let mi = MassInertia::new(1.0, Matrix3::identity()).unwrap();
        let nu = Vec12::from_fn(|i, _| (i as f64 + 1.0).sin()).normalize();
        let s = quasi_reflection(&mi, &nu).unwrap();
        let expect = Matrix12::identity() - 2.0 * nu * nu.transpose();
        assert!((s - expect).amax() < 1e-14);
        assert!(MassInertia::new(1.0, Matrix3::new(1., 2., 0., 0., 1., 0., 0., 0., 1.)).is_err());
        assert!(MassInertia::new(1.0, -Matrix3::identity()).is_err());
        assert!(quasi_reflection(&mi, &(nu * 2.0)).is_err());
    }

    fn arb_unit() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-1.0f64..1.0)
            .prop_filter("nonzero", |a| Vec3::from(*a).norm() > 1e-2)
            .prop_map(|a| Vec3::from(a).normalize())
    }

    fn arb_vec6() -> impl Strategy<Value = Vec6> {
        prop::array::uniform6(-5.0f64..5.0).prop_map(|a| Vec6::from_column_slice(&a))
    }

    proptest! {
        #[test]
        fn scattering_algebra(n in arb_unit(), v in arb_vec6()) {
            let s = boltzmann_matrix(&n).unwrap();
            prop_assert!((s.matrix * s.matrix - Matrix6::identity()).amax() < 1e-14);
            prop_assert!((s.matrix.transpose() * s.matrix - Matrix6::identity()).amax() < 1e-14);
            prop_assert!((s.matrix.determinant() + 1.0).abs() < 1e-12);
            let out = s.apply(&v);
            let (a, b) = split(&v);
            let (ca, cb) = scatter_velocities(&a, &b, &n);
            prop_assert!((out - stack(&ca, &cb)).amax() < 1e-13);
            let e = conservation_system(&n);
            prop_assert!((e * out - e * v).amax() < 1e-12);
        }

        #[test]
        fn maps_incoming_to_outgoing(n in arb_unit(), v in arb_vec6()) {
            let s = boltzmann_matrix(&n).unwrap();
            let proj = v.dot(&s.nu_hat);
            prop_assert!((s.apply(&v).dot(&s.nu_hat) + proj).abs() < 1e-12);
        }

        #[test]
        fn surgery_never_penetrates(
            dir in arb_unit(),
            w in prop::array::uniform3(-2.0f64..2.0),
            gap in 0.0f64..3.0,
        ) {
            let z = PhasePoint::new(dir * (1.0 + gap), Vec3::zeros(), Vec3::from(w), Vec3::zeros());
            let tr = surgery_solve(&z).unwrap();
            for k in 0..200 {
                let t = 10.0 * k as f64 / 199.0;
                prop_assert!(eval_hard(&tr, t).separation() >= 1.0 - 1e-12);
            }
        }
    }
}
