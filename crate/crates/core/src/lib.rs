//! Closed fluid membranes carrying a floating elastic filament.
//!
//! The membrane is a Loop subdivision surface with Helfrich bending energy,
//! a pressure-volume term and soft area and centering constraints. Its
//! parametrization is fixed with a harmonic-map penalty. The filament is an
//! inextensible-frame Cosserat rod whose center line lives on the membrane
//! through spherical Lagrangian coordinates, discretized with Hermite cubics.
//! Equilibria are found with L-BFGS on the combined objective.

#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod coupling;
pub mod error;
pub mod jet;
pub mod lbfgs;
pub mod measure;
pub mod membrane;
pub mod mesh;
pub mod rod;
pub mod solver;
pub mod subdivision;
pub mod surface;
pub mod vec3;

pub use error::{Error, Result};
pub use mesh::ControlMesh;
pub use vec3::{Mat3, Sym2, Vec3};
