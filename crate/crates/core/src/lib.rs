//! Distributed camera model and generalized pose-and-scale estimation.
//!
//! A distributed camera is a set of observed rays (origins and directions)
//! sharing one unknown scale. [`solver::gdls_solve`] recovers the 7-DoF
//! similarity relating it to known 3D points; [`robust`] wraps the solver in
//! RANSAC/PROSAC; [`pipeline`] merges reconstructions hierarchically by
//! treating each one as a distributed camera.
//!
//! The geometry and the solver are generic over [`Real`] (`f32` or `f64`).
//! The aliases below fix the scalar to `f64`, which the robust estimation,
//! pipeline, harness and I/O layers use.

pub mod bench;
pub mod error;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod robust;
pub mod scalar;
pub mod solver;
pub mod umeyama;

#[cfg(test)]
pub(crate) mod testing;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Quat = geometry::Quaternion<f64>;
pub type Similarity = geometry::SimilarityTransform<f64>;
pub type Ray = geometry::Ray<f64>;
pub type Correspondence = geometry::Correspondence<f64>;
pub type DistributedCamera = geometry::DistributedCamera<f64>;
pub type SolveReport = solver::SolveReport<f64>;
pub type SolverCandidate = solver::SolverCandidate<f64>;

pub type Quatf = geometry::Quaternion<f32>;
pub type Similarityf = geometry::SimilarityTransform<f32>;
pub type Rayf = geometry::Ray<f32>;
pub type Correspondencef = geometry::Correspondence<f32>;
