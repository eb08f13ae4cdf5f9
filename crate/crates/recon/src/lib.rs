//! Reconstruction of Radon-type integrals of a Schrödinger potential from
//! partial Dirichlet-to-Neumann data on a ball in `R³`.
//!
//! The crate is organized bottom-up: [`geometry`] builds the mesh and the
//! boundary masks, [`discretization`] the P1 operators, [`dtn`] the data
//! and its guarded view, [`carleman`] the weighted Green's operators,
//! [`cgo`] the incident solutions, [`transform`] the scattering solve and
//! the transform, [`boundary_integral`] the single layer and the boundary
//! integral equation, and [`pipeline`] ties them into reports.

pub mod carleman;
pub mod cgo;
pub mod discretization;
pub mod dtn;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod pipeline;
pub mod boundary_integral;
pub mod transform;

pub use error::{ReconError, Result};
