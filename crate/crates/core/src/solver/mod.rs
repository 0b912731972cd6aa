//! Generalized pose-and-scale solver (gDLS+++).
//!
//! Depths, scale and translation are eliminated linearly, leaving a
//! homogeneous quartic cost in the rotation quaternion. Its stationary points
//! on the unit sphere are found, and each is lifted back to a full similarity
//! through the elimination matrices.

pub mod cost;
pub mod elimination;
pub mod stationary;

use std::time::{Duration, Instant};

pub use cost::{build_quartic_cost, cost_gradient, QuarticCost};
pub use elimination::{build_elimination, EliminationMatrices, ScaleMode};
pub use stationary::{solve_stationary, solve_stationary_with, StationaryPoint, Starts, MAX_SOLUTIONS, SEED_COUNT};

use crate::error::{Error, Result};
use crate::geometry::{Correspondence, SimilarityTransform};
use crate::scalar::Real;

/// A full similarity recovered from one stationary point.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverCandidate<T> {
    /// World-to-local pose.
    pub transform: SimilarityTransform<T>,
    /// Reduced cost `C'` at this rotation.
    pub cost: T,
    /// Depth of every correspondence along its ray, in world units.
    pub depths: Vec<T>,
    pub stationarity_residual: T,
    /// Some depth is not positive (point behind its ray). Kept, ranked last.
    pub cheirality_violation: bool,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    /// Ranked: cheirality-consistent first, then by cost ascending.
    pub candidates: Vec<SolverCandidate<T>>,
    pub elapsed: Duration,
}

impl<T: Real> SolveReport<T> {
    pub fn best(&self) -> &SolverCandidate<T> {
        &self.candidates[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    pub scale: ScaleMode<T>,
}

impl<T> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            scale: ScaleMode::Free,
        }
    }
}

/// Lifts stationary rotations to similarities. Candidates with non-positive
/// scale are discarded.
pub fn recover_candidates<T: Real>(
    points: &[StationaryPoint<T>],
    elim: &EliminationMatrices<T>,
) -> Result<Vec<SolverCandidate<T>>> {
    let mut out: Vec<SolverCandidate<T>> = points
        .iter()
        .filter_map(|p| {
            let r = p.quaternion.to_rotation_matrix();
            let (depths, s, t) = elim.solve_for_rotation(&r);
            if !(s > T::zero()) || !t.iter().all(|c| c.is_finite()) {
                return None;
            }
            let transform = SimilarityTransform::from_constraint_parameters(p.quaternion, t, s).ok()?;
            let cheirality_violation = depths.iter().any(|&a| a <= T::zero());
            Some(SolverCandidate {
                transform,
                cost: p.cost,
                depths,
                stationarity_residual: p.stationarity,
                cheirality_violation,
            })
        })
        .collect();
    if out.is_empty() {
        return Err(Error::NoSolution("every candidate has non-positive scale".into()));
    }
    out.sort_by(|a, b| {
        a.cheirality_violation
            .cmp(&b.cheirality_violation)
            .then(a.cost.partial_cmp(&b.cost).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(out)
}

/// Estimates the world-to-local similarity of a distributed camera from
/// `n >= 4` ray/point correspondences.
pub fn gdls_solve<T: Real>(correspondences: &[Correspondence<T>]) -> Result<SolveReport<T>> {
    gdls_solve_with(correspondences, &SolverOptions::default())
}

pub fn gdls_solve_with<T: Real>(
    correspondences: &[Correspondence<T>],
    options: &SolverOptions<T>,
) -> Result<SolveReport<T>> {
    let start = Instant::now();
    let elim = build_elimination(correspondences, options.scale)?;
    let cost = build_quartic_cost(correspondences, &elim);
    let points = solve_stationary(&cost)?;
    let candidates = recover_candidates(&points, &elim)?;
    Ok(SolveReport {
        candidates,
        elapsed: start.elapsed(),
    })
}

/// Depth of each correspondence under `pose`, `|R X + t - s c|` in world units.
pub fn constraint_depths<T: Real>(
    pose: &SimilarityTransform<T>,
    correspondences: &[Correspondence<T>],
) -> Vec<T> {
    correspondences
        .iter()
        .map(|c| (pose.apply(&c.point) - c.ray.origin).norm() / pose.scale)
        .collect()
}
