//! Two-body dynamics under hardening soft potentials and their hard-sphere
//! limit: scattering maps, collision-time scaling, and BV/L¹ diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bv;
pub mod cli;
pub mod geometry;
pub mod hard;
pub mod numerics;
pub mod output;
pub mod potentials;
pub mod presets;
pub mod scattering;
pub mod soft;
