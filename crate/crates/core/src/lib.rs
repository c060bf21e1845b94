//! Numerical topological-shape derivatives for level-set design on P1
//! triangle meshes.
//!
//! The design domain is the negative region of a piecewise-linear level
//! set. The crate evaluates the exact per-node sensitivity of a tracking
//! objective under a reaction–diffusion constraint, checks it against
//! finite-difference, complex-step and hyper-dual differentiation of the
//! same discrete pipeline, and drives a spherical level-set update with it.

pub mod error;
pub mod experiment;
pub mod fem;
pub mod levelset;
pub mod mesh;
pub mod optimize;
pub mod scalar;
pub mod sensitivity;
pub mod verify;
pub mod vtk;

pub use error::{Error, Result};
pub use fem::{Problem, ProblemParams};
pub use levelset::{NodeClass, PerturbationKind};
pub use mesh::{generate_crossed_mesh, BoundaryData, Mesh};
pub use scalar::{ComplexScalar, HyperDual, Scalar};
