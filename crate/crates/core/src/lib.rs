//! Target-measure diffusion maps on point clouds.
//!
//! The pipeline builds a Gaussian kernel on a sampled point cloud, renormalizes
//! it by a kernel density estimate and the square root of a target measure,
//! and turns the result into a Markov matrix `P` and generator `L = (P − I)/ε`.
//! The generator approximates the backward Kolmogorov operator of overdamped
//! Langevin dynamics, so Dirichlet problems on the cloud (the committor in
//! particular) can be solved without a mesh.

pub mod bvp;
pub mod cloud;
pub mod error;
pub mod experiments;
pub mod generator;
pub mod kernel;
pub mod linsolve;
pub mod potentials;
pub mod quadrature;
pub mod reference;
pub mod sampling;
pub mod sparse;
pub mod spatial;
pub mod tpt;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use potentials::{CircleSystem, Potential, PotentialSystem};
