//! Stationary points of the reduced cost on the unit sphere.
//!
//! Multi-start Riemannian Newton from a deterministic 512-point covering of
//! S³. Each start is damped until the Riemannian Hessian is positive definite
//! and the cost decreases, then polished with undamped Newton steps. Starts
//! that run into an already converged point are abandoned early.
//!
//! By default only screened seeds are descended: those whose cost is no
//! larger than at any of their nearest covering neighbours, plus the lowest
//! few overall. [`Starts::Exhaustive`] descends from every seed.

use std::sync::OnceLock;

use nalgebra::{Matrix3, Matrix4x3, SymmetricEigen, Vector3, Vector4};

use super::cost::QuarticCost;
use crate::error::{Error, Result};
use crate::geometry::Quaternion;
use crate::scalar::Real;

/// Number of seeds in the default S³ covering.
pub const SEED_COUNT: usize = 512;

/// At most this many stationary points are reported (action-matrix size of
/// the algebraic formulation).
pub const MAX_SOLUTIONS: usize = 8;

const MAX_ITERATIONS: usize = 100;

const NEIGHBOURS: usize = 16;

/// Lowest-cost seeds that are always descended, screened or not.
const ALWAYS_DESCEND: usize = 4;

/// Which covering seeds are descended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Starts {
    /// Discrete local minima of the cost over the covering's neighbour graph.
    #[default]
    Screened,
    /// Every seed.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryPoint<T> {
    pub quaternion: Quaternion<T>,
    /// `C'(q)` in the units of the input cost.
    pub cost: T,
    /// `|∇C' - (q^T ∇C') q|` of the cost normalized to unit Frobenius norm.
    pub stationarity: T,
}

/// Deterministic, near-uniform covering of S³ (super-Fibonacci spiral).
pub fn sphere_covering<T: Real>(count: usize) -> Vec<Vector4<T>> {
    let phi = 2.0f64.sqrt();
    let psi = 1.533_751_168_755_204_3_f64;
    let tau = std::f64::consts::TAU;
    (0..count)
        .map(|i| {
            let s = i as f64 + 0.5;
            let r = (s / count as f64).sqrt();
            let big_r = (1.0 - s / count as f64).sqrt();
            let alpha = tau * s / phi;
            let beta = tau * s / psi;
            Vector4::new(
                T::lit(r * alpha.sin()),
                T::lit(r * alpha.cos()),
                T::lit(big_r * beta.sin()),
                T::lit(big_r * beta.cos()),
            )
        })
        .collect()
}

/// The default covering in `f64` with each seed's nearest neighbours
/// (antipodes identified).
fn default_covering() -> &'static (Vec<Vector4<f64>>, Vec<[u16; NEIGHBOURS]>) {
    static COVERING: OnceLock<(Vec<Vector4<f64>>, Vec<[u16; NEIGHBOURS]>)> = OnceLock::new();
    COVERING.get_or_init(|| {
        let seeds = sphere_covering::<f64>(SEED_COUNT);
        let neighbours = seeds
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut by_dist: Vec<(f64, usize)> = seeds
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, o)| (-s.dot(o).abs(), j))
                    .collect();
                by_dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut out = [0u16; NEIGHBOURS];
                for (slot, (_, j)) in out.iter_mut().zip(by_dist) {
                    *slot = j as u16;
                }
                out
            })
            .collect();
        (seeds, neighbours)
    })
}

/// Orthonormal basis of the tangent space of S³ at unit `q` (columns 2-4 of
/// the left-multiplication matrix of `q`).
fn tangent_basis<T: Real>(q: &Vector4<T>) -> Matrix4x3<T> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix4x3::new(-x, -y, -z, w, -z, y, z, w, -x, -y, x, w)
}

fn sphere_gradient<T: Real>(cost: &QuarticCost<T>, q: &Vector4<T>) -> Vector3<T> {
    tangent_basis(q).transpose() * cost.gradient(q)
}

/// Runs damped-then-pure Riemannian Newton from `start`. Returns `None` if
/// the iterate reaches one of `known` first or fails to converge.
fn descend<T: Real>(
    cost: &QuarticCost<T>,
    start: &Vector4<T>,
    known: &[Vector4<T>],
    tolerance: T,
) -> Option<Vector4<T>> {
    let near_known = T::one() - T::lit(1e-9);
    let tight = T::default_epsilon() * T::lit(16.0);
    let mut q = start.normalize();
    let mut f = cost.evaluate(&q);
    let mut best_gnorm = T::max_value().unwrap();
    let mut stalled = 0;
    for _ in 0..MAX_ITERATIONS {
        if known.iter().any(|k| k.dot(&q).abs() > near_known) {
            return None;
        }
        let basis = tangent_basis(&q);
        let g = cost.gradient(&q);
        let gb = basis.transpose() * g;
        let gnorm = gb.norm();
        if gnorm <= tight {
            break;
        }
        if gnorm < best_gnorm {
            best_gnorm = gnorm;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 3 && gnorm <= tolerance {
                break;
            }
        }
        let hr = basis.transpose() * cost.hessian(&q) * basis - Matrix3::identity() * q.dot(&g);
        let eig = SymmetricEigen::new(hr);
        let min_eig = eig.eigenvalues.min();
        let polish = min_eig > T::zero() && gnorm < T::lit(1e-6);
        let mut mu = if min_eig > T::zero() {
            T::zero()
        } else {
            -min_eig * T::lit(1.5) + T::lit(1e-8)
        };
        let mut accepted = false;
        for _ in 0..40 {
            let shifted = hr + Matrix3::identity() * mu;
            let Some(step) = shifted.cholesky().map(|c| c.solve(&(-gb))) else {
                mu = mu * T::lit(4.0) + T::lit(1e-8);
                continue;
            };
            let candidate = (q + basis * step).normalize();
            let fc = cost.evaluate(&candidate);
            if polish || fc < f {
                q = candidate;
                f = fc;
                accepted = true;
                break;
            }
            mu = mu * T::lit(4.0) + T::lit(1e-8);
        }
        if !accepted {
            break;
        }
    }
    let residual = sphere_gradient(cost, &q).norm();
    (residual <= tolerance).then_some(q)
}

/// Stationary points of `C'` on the unit sphere, sign-canonical and
/// deduplicated, ranked by cost ascending, at most [`MAX_SOLUTIONS`].
pub fn solve_stationary<T: Real>(cost: &QuarticCost<T>) -> Result<Vec<StationaryPoint<T>>> {
    solve_stationary_with(cost, Starts::Screened)
}

pub fn solve_stationary_with<T: Real>(
    cost: &QuarticCost<T>,
    starts: Starts,
) -> Result<Vec<StationaryPoint<T>>> {
    let (seeds64, neighbours) = default_covering();
    let seeds: Vec<Vector4<T>> = seeds64.iter().map(|s| s.map(T::lit)).collect();
    let unit = normalized(cost)?;
    let values: Vec<T> = seeds.iter().map(|s| unit.evaluate(s)).collect();
    let mut order = ranked(&values);
    if starts == Starts::Screened {
        order = order
            .into_iter()
            .enumerate()
            .filter(|&(rank, i)| {
                rank < ALWAYS_DESCEND || neighbours[i].iter().all(|&j| values[i] <= values[j as usize])
            })
            .map(|(_, i)| i)
            .collect();
    }
    descend_all(cost, &unit, &seeds, &order)
}

/// Descends from every seed in `seeds`.
pub fn solve_stationary_from<T: Real>(
    cost: &QuarticCost<T>,
    seeds: &[Vector4<T>],
) -> Result<Vec<StationaryPoint<T>>> {
    let unit = normalized(cost)?;
    let values: Vec<T> = seeds.iter().map(|s| unit.evaluate(&s.normalize())).collect();
    descend_all(cost, &unit, seeds, &ranked(&values))
}

fn normalized<T: Real>(cost: &QuarticCost<T>) -> Result<QuarticCost<T>> {
    let norm = cost.frobenius_norm();
    if !norm.is_finite() {
        return Err(Error::InvalidInput("non-finite cost matrix".into()));
    }
    if norm == T::zero() {
        return Err(Error::NoSolution("cost is identically zero; rotation is unconstrained".into()));
    }
    Ok(cost.scaled(T::one() / norm))
}

/// Seed indices by ascending cost, ties by index.
fn ranked<T: Real>(values: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

fn descend_all<T: Real>(
    cost: &QuarticCost<T>,
    unit: &QuarticCost<T>,
    seeds: &[Vector4<T>],
    order: &[usize],
) -> Result<Vec<StationaryPoint<T>>> {
    let tolerance = T::stationarity_tolerance();
    let mut found: Vec<Vector4<T>> = Vec::new();
    for &i in order {
        if let Some(q) = descend(unit, &seeds[i], &found, tolerance) {
            if !found.iter().any(|k| k.dot(&q).abs() > T::one() - T::lit(1e-9)) {
                found.push(q);
            }
        }
    }
    if found.is_empty() {
        return Err(Error::NoSolution("no start converged to a stationary point".into()));
    }
    let mut points: Vec<StationaryPoint<T>> = found
        .into_iter()
        .map(|q| StationaryPoint {
            quaternion: Quaternion::new(q[0], q[1], q[2], q[3]).expect("unit"),
            cost: cost.evaluate(&q),
            stationarity: sphere_gradient(unit, &q).norm(),
        })
        .collect();
    points.sort_by(|a, b| a.cost.partial_cmp(&b.cost).unwrap_or(std::cmp::Ordering::Equal));
    points.truncate(MAX_SOLUTIONS);
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::cost::{build_quartic_cost, sphere_stationarity};
    use crate::solver::elimination::{build_elimination, ScaleMode};
    use crate::testing::random_instance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn covering_is_unit_and_spread() {
        let seeds = sphere_covering::<f64>(SEED_COUNT);
        assert_eq!(seeds.len(), SEED_COUNT);
        for s in &seeds {
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
        // Every point of a probe set has a seed within 40 degrees (up to sign).
        let probes = sphere_covering::<f64>(997);
        for p in probes {
            let best = seeds.iter().map(|s| s.dot(&p).abs()).fold(0.0, f64::max);
            assert!(2.0 * best.min(1.0).acos() < 40f64.to_radians());
        }
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let q = Vector4::new(0.3, -0.5, 0.1, 0.8).normalize();
        let b = tangent_basis(&q);
        assert!((b.transpose() * b - Matrix3::identity()).amax() < 1e-15);
        assert!((b.transpose() * q).amax() < 1e-15);
    }

    #[test]
    fn noise_free_contains_zero_cost_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let (cs, truth) = random_instance(&mut rng, 4, 0.0);
            let e = build_elimination(&cs, ScaleMode::Free).unwrap();
            let cost = build_quartic_cost(&cs, &e);
            let sols = solve_stationary(&cost).unwrap();
            assert!(!sols.is_empty() && sols.len() <= MAX_SOLUTIONS);
            let norm = cost.frobenius_norm();
            assert!(sols[0].cost / norm <= 1e-16);
            assert!(sols[0].quaternion.angle_to(&truth.rotation) < 1e-7);
        }
    }

    #[test]
    fn returned_points_are_canonical_stationary_and_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..10 {
            let (cs, _) = random_instance(&mut rng, 6, 3.0);
            let e = build_elimination(&cs, ScaleMode::Free).unwrap();
            let cost = build_quartic_cost(&cs, &e);
            let unit = cost.scaled(1.0 / cost.frobenius_norm());
            let sols = solve_stationary(&cost).unwrap();
            for (i, s) in sols.iter().enumerate() {
                let q = Vector4::from(s.quaternion.coords());
                assert!((q.norm() - 1.0).abs() < 1e-12);
                assert_eq!(s.quaternion, s.quaternion.canonical());
                assert!(sphere_stationarity(&unit, &q) <= 1e-8);
                for other in &sols[i + 1..] {
                    assert!(s.quaternion.angle_to(&other.quaternion) > 1e-6);
                }
            }
            assert!(sols.windows(2).all(|w| w[0].cost <= w[1].cost));
        }
    }

    #[test]
    fn screened_starts_match_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..50 {
            let (cs, _) = random_instance(&mut rng, 6, 2.0);
            let e = build_elimination(&cs, ScaleMode::Free).unwrap();
            let cost = build_quartic_cost(&cs, &e);
            let screened = solve_stationary_with(&cost, Starts::Screened).unwrap();
            let full = solve_stationary_with(&cost, Starts::Exhaustive).unwrap();
            let scale = cost.frobenius_norm();
            assert!((screened[0].cost - full[0].cost).abs() <= 1e-12 * scale);
            assert!(screened[0].quaternion.angle_to(&full[0].quaternion) < 1e-6);
        }
    }

    #[test]
    fn neighbour_graph_is_local() {
        let (seeds, neighbours) = default_covering();
        for (i, ns) in neighbours.iter().enumerate() {
            assert!(!ns.contains(&(i as u16)));
            for &j in ns {
                assert!(seeds[i].dot(&seeds[j as usize]).abs() > 0.8);
            }
        }
    }

    #[test]
    fn zero_cost_is_rejected() {
        let cost = QuarticCost::<f64>::from_matrix(Default::default());
        assert!(matches!(solve_stationary(&cost), Err(Error::NoSolution(_))));
    }
}
