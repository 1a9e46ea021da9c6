//! Discontinuous Galerkin solver for steady electroneutral multi-ion transport.

pub mod assembly;
pub mod fespace;
pub mod linalg;
pub mod mesh;
pub mod nonlinear;
pub mod par;
pub mod physics;
pub mod vtk;
