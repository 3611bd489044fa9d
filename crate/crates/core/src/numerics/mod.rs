//! Numerical building blocks: root finding, quadrature, line fits and an
//! adaptive Runge–Kutta integrator with dense output.

pub mod fit;
pub mod ode;
pub mod quadrature;
pub mod roots;
