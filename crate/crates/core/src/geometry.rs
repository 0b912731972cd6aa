//! Domain types of the distributed camera model and exact geometric
//! primitives: rotations, similarity transforms, ray residuals and merging of
//! distributed cameras.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rotation quaternion `w + xi + yj + zk`, kept at unit norm with a canonical
/// sign (first non-negligible component positive), so `q` and `-q` compare
/// equal after construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

/// Norms within a few ulps of one are treated as exactly one, so normalizing
/// is idempotent and serialized unit vectors load back bit for bit.
fn unit_or_norm<T: Real>(n: T) -> T {
    if (n - T::one()).abs() <= T::default_epsilon() * T::lit(4.0) {
        T::one()
    } else {
        n
    }
}

impl<T: Real> Quaternion<T> {
    /// Normalizes and canonicalizes. Fails on an all-zero or non-finite input.
    pub fn new(w: T, x: T, y: T, z: T) -> Result<Self> {
        let raw = Self { w, x, y, z };
        if !raw.coords().iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("non-finite quaternion".into()));
        }
        let n = unit_or_norm(raw.norm());
        if n == T::zero() {
            return Err(Error::InvalidInput("zero quaternion".into()));
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
        .canonical())
    }

    pub fn from_array(c: [T; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn identity() -> Self {
        Self {
            w: T::one(),
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    /// Rotation by `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Result<Self> {
        let n = axis.norm();
        if n == T::zero() {
            return Err(Error::InvalidInput("zero rotation axis".into()));
        }
        let half = angle * T::lit(0.5);
        let s = half.sin() / n;
        Self::new(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    /// Inverse of [`quat_to_rotation`] for a proper rotation matrix.
    pub fn from_rotation_matrix(r: &Matrix3<T>) -> Result<Self> {
        let one = T::one();
        let quarter = T::lit(0.25);
        let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
        // Shepperd: branch on the largest diagonal term of the 4x4 symmetric form.
        let (w, x, y, z) = if trace > r[(0, 0)] && trace > r[(1, 1)] && trace > r[(2, 2)] {
            let s = (one + trace).sqrt() * T::lit(2.0);
            (
                quarter * s,
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            )
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (one + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * T::lit(2.0);
            (
                (r[(2, 1)] - r[(1, 2)]) / s,
                quarter * s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
            )
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (one + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * T::lit(2.0);
            (
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                quarter * s,
                (r[(1, 2)] + r[(2, 1)]) / s,
            )
        } else {
            let s = (one + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * T::lit(2.0);
            (
                (r[(1, 0)] - r[(0, 1)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
                (r[(1, 2)] + r[(2, 1)]) / s,
                quarter * s,
            )
        };
        Self::new(w, x, y, z)
    }

    pub fn coords(&self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Flips the sign so the first component with magnitude above the sign
    /// threshold is positive.
    pub fn canonical(self) -> Self {
        let thr = T::sign_threshold();
        for c in self.coords() {
            if c.abs() > thr {
                return if c < T::zero() { self.negated() } else { self };
            }
        }
        self
    }

    fn negated(self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
        .canonical()
    }

    /// Hamilton product `self * rhs` (apply `rhs` first, then `self`).
    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (self, rhs);
        let q = Self {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        };
        // Renormalize to stop drift over long composition chains.
        let n = q.norm();
        Self {
            w: q.w / n,
            x: q.x / n,
            y: q.y / n,
            z: q.z / n,
        }
        .canonical()
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<T> {
        quat_to_rotation(self).expect("unit quaternion")
    }

    pub fn rotate(&self, v: &Vector3<T>) -> Vector3<T> {
        self.to_rotation_matrix() * v
    }

    /// Angle in radians of the relative rotation between `self` and `other`.
    pub fn angle_to(&self, other: &Self) -> T {
        // Relative rotation other^-1 * self; atan2 keeps precision near zero.
        let (a, b) = (other, self);
        let w = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
        let x = a.w * b.x - a.x * b.w - a.y * b.z + a.z * b.y;
        let y = a.w * b.y + a.x * b.z - a.y * b.w - a.z * b.x;
        let z = a.w * b.z - a.x * b.y + a.y * b.x - a.z * b.w;
        let v = (x * x + y * y + z * z).sqrt();
        T::lit(2.0) * v.atan2(w.abs())
    }
}

/// Rotation matrix of `q`. The quadratic form is divided by `|q|^2`, so any
/// nonzero scaling of `q` (including `-q`) maps to the same matrix.
pub fn quat_to_rotation<T: Real>(q: &Quaternion<T>) -> Result<Matrix3<T>> {
    let n2 = q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z;
    if !n2.is_finite() {
        return Err(Error::InvalidInput("non-finite quaternion".into()));
    }
    if n2 == T::zero() {
        return Err(Error::InvalidInput("zero quaternion".into()));
    }
    Ok(rotation_numerator(q.w, q.x, q.y, q.z) / n2)
}

/// The homogeneous degree-2 matrix `|q|^2 R(q)`.
pub fn rotation_numerator<T: Real>(w: T, x: T, y: T, z: T) -> Matrix3<T> {
    let two = T::lit(2.0);
    Matrix3::new(
        w * w + x * x - y * y - z * z,
        two * (x * y - w * z),
        two * (x * z + w * y),
        two * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        two * (y * z - w * x),
        two * (x * z - w * y),
        two * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    )
}

/// A 7-DoF similarity acting on points as `p -> scale * R p + translation`.
///
/// Pose estimates map WORLD points into the local frame of a distributed
/// camera; [`SimilarityTransform::inverse`] places a distributed camera into
/// the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform<T> {
    pub rotation: Quaternion<T>,
    pub translation: Vector3<T>,
    pub scale: T,
}

impl<T: Real> SimilarityTransform<T> {
    pub fn new(rotation: Quaternion<T>, translation: Vector3<T>, scale: T) -> Result<Self> {
        if !(scale.is_finite() && scale > T::zero()) {
            return Err(Error::InvalidInput("scale must be positive and finite".into()));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
            scale,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Quaternion::identity(),
            translation: Vector3::zeros(),
            scale: T::one(),
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        self.rotation.to_rotation_matrix()
    }

    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation_matrix() * p * self.scale + self.translation
    }

    /// Rotates a direction; scale and translation do not act on directions.
    pub fn apply_direction(&self, d: &Vector3<T>) -> Vector3<T> {
        self.rotation_matrix() * d
    }

    pub fn inverse(&self) -> Self {
        let r_t = self.rotation_matrix().transpose();
        let inv_scale = T::one() / self.scale;
        Self {
            rotation: self.rotation.conjugate(),
            translation: -(r_t * self.translation) * inv_scale,
            scale: inv_scale,
        }
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &Self) -> Self {
        Self {
            rotation: self.rotation.mul(&first.rotation),
            translation: self.rotation_matrix() * first.translation * self.scale
                + self.translation,
            scale: self.scale * first.scale,
        }
    }

    /// Builds the world-to-local map from the parameters of the constraint
    /// `s c + alpha x = R X + t` (rotation `R`, translation `t`, scale `s`).
    pub fn from_constraint_parameters(
        rotation: Quaternion<T>,
        translation: Vector3<T>,
        scale: T,
    ) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(Error::InvalidInput("constraint scale must be positive".into()));
        }
        Self::new(rotation, translation / scale, T::one() / scale)
    }

    /// Inverse of [`Self::from_constraint_parameters`]: `(t, s)` such that
    /// `s * self.apply(X) = R X + t`.
    pub fn constraint_parameters(&self) -> (Vector3<T>, T) {
        let s = T::one() / self.scale;
        (self.translation * s, s)
    }
}

pub fn apply_similarity<T: Real>(t: &SimilarityTransform<T>, p: &Vector3<T>) -> Vector3<T> {
    t.apply(p)
}

/// `t2 ∘ t1`.
pub fn compose_similarity<T: Real>(
    t2: &SimilarityTransform<T>,
    t1: &SimilarityTransform<T>,
) -> SimilarityTransform<T> {
    t2.compose(t1)
}

/// An observed light ray in a distributed camera's local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    pub origin: Vector3<T>,
    pub direction: Vector3<T>,
}

impl<T: Real> Ray<T> {
    /// Normalizes `direction`.
    pub fn new(origin: Vector3<T>, direction: Vector3<T>) -> Result<Self> {
        if !origin.iter().chain(direction.iter()).all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("non-finite ray".into()));
        }
        let n = unit_or_norm(direction.norm());
        if n == T::zero() {
            return Err(Error::InvalidInput("zero ray direction".into()));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    /// Ray from `origin` through `target`.
    pub fn through(origin: Vector3<T>, target: &Vector3<T>) -> Result<Self> {
        Self::new(origin, target - origin)
    }
}

/// A ray paired with the known world point it observes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<T> {
    pub ray: Ray<T>,
    pub point: Vector3<T>,
    /// Match quality in `[0, 1]`, used for PROSAC ordering.
    pub score: Option<T>,
    pub point_id: Option<u64>,
}

impl<T: Real> Correspondence<T> {
    pub fn new(ray: Ray<T>, point: Vector3<T>) -> Result<Self> {
        if !point.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("non-finite world point".into()));
        }
        Ok(Self {
            ray,
            point,
            score: None,
            point_id: None,
        })
    }

    pub fn with_score(mut self, score: T) -> Result<Self> {
        if !(score >= T::zero() && score <= T::one()) {
            return Err(Error::InvalidInput("score outside [0, 1]".into()));
        }
        self.score = Some(score);
        Ok(self)
    }

    pub fn with_point_id(mut self, id: u64) -> Self {
        self.point_id = Some(id);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual<T> {
    /// Angle between the observed direction and the predicted one, in `[0, pi]`.
    pub angle: T,
    /// Depth along the ray in world units, `|R X + t - s c|`.
    pub depth: T,
    /// Point coincides with the scaled ray origin; `angle` is reported as pi.
    pub degenerate: bool,
}

/// Angular error of a correspondence under a world-to-local pose.
pub fn reprojection_residual<T: Real>(
    pose: &SimilarityTransform<T>,
    c: &Correspondence<T>,
) -> Residual<T> {
    let local = pose.apply(&c.point);
    let v = local - c.ray.origin;
    let len = v.norm();
    let ref_len = T::one().max(local.norm()).max(c.ray.origin.norm());
    if len <= T::default_epsilon() * ref_len {
        return Residual {
            angle: T::pi(),
            depth: T::zero(),
            degenerate: true,
        };
    }
    let d = c.ray.direction;
    let angle = d.cross(&v).norm().atan2(d.dot(&v));
    Residual {
        angle,
        depth: len / pose.scale,
        degenerate: false,
    }
}

/// Pose of one physical camera inside a distributed camera's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose<T> {
    pub id: u64,
    pub center: Vector3<T>,
    pub orientation: Quaternion<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint<T> {
    pub id: u64,
    pub position: Vector3<T>,
}

/// Unit direction from a camera center towards a point, in the local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub camera_id: u64,
    pub point_id: u64,
    pub direction: Vector3<T>,
}

/// A collection of rays (camera centers + observation directions) and the 3D
/// points they observe, all expressed in one local frame. A reconstruction is
/// a distributed camera.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedCamera<T> {
    cameras: Vec<CameraPose<T>>,
    points: Vec<ScenePoint<T>>,
    observations: Vec<Observation<T>>,
}

impl<T: Real> Default for DistributedCamera<T> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<T: Real> DistributedCamera<T> {
    pub fn empty() -> Self {
        Self {
            cameras: Vec::new(),
            points: Vec::new(),
            observations: Vec::new(),
        }
    }

    /// Validates id uniqueness and referential integrity.
    pub fn new(
        cameras: Vec<CameraPose<T>>,
        points: Vec<ScenePoint<T>>,
        observations: Vec<Observation<T>>,
    ) -> Result<Self> {
        let mut cam_ids = BTreeSet::new();
        for c in &cameras {
            if !cam_ids.insert(c.id) {
                return Err(Error::Integrity {
                    what: "duplicate camera id".into(),
                    id: c.id,
                });
            }
        }
        let mut point_ids = BTreeSet::new();
        for p in &points {
            if !point_ids.insert(p.id) {
                return Err(Error::Integrity {
                    what: "duplicate point id".into(),
                    id: p.id,
                });
            }
            if !p.position.iter().all(|c| c.is_finite()) {
                return Err(Error::Integrity {
                    what: "non-finite point".into(),
                    id: p.id,
                });
            }
        }
        for o in &observations {
            if !cam_ids.contains(&o.camera_id) {
                return Err(Error::Integrity {
                    what: "observation references unknown camera".into(),
                    id: o.camera_id,
                });
            }
            if !point_ids.contains(&o.point_id) {
                return Err(Error::Integrity {
                    what: "observation references unknown point".into(),
                    id: o.point_id,
                });
            }
        }
        Ok(Self {
            cameras,
            points,
            observations,
        })
    }

    pub fn cameras(&self) -> &[CameraPose<T>] {
        &self.cameras
    }

    pub fn points(&self) -> &[ScenePoint<T>] {
        &self.points
    }

    pub fn observations(&self) -> &[Observation<T>] {
        &self.observations
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty() && self.points.is_empty()
    }

    pub fn point_map(&self) -> BTreeMap<u64, Vector3<T>> {
        self.points.iter().map(|p| (p.id, p.position)).collect()
    }

    pub fn camera_map(&self) -> BTreeMap<u64, CameraPose<T>> {
        self.cameras.iter().map(|c| (c.id, *c)).collect()
    }

    pub fn point_ids(&self) -> BTreeSet<u64> {
        self.points.iter().map(|p| p.id).collect()
    }

    /// Every observation as a ray from its camera center.
    pub fn rays(&self) -> Vec<(u64, Ray<T>)> {
        let cams = self.camera_map();
        self.observations
            .iter()
            .map(|o| {
                let origin = cams[&o.camera_id].center;
                (
                    o.point_id,
                    Ray {
                        origin,
                        direction: o.direction,
                    },
                )
            })
            .collect()
    }

    /// Applies `t` to every camera, point and observation direction.
    pub fn transformed(&self, t: &SimilarityTransform<T>) -> Self {
        let cameras = self
            .cameras
            .iter()
            .map(|c| CameraPose {
                id: c.id,
                center: t.apply(&c.center),
                orientation: t.rotation.mul(&c.orientation),
            })
            .collect();
        let points = self
            .points
            .iter()
            .map(|p| ScenePoint {
                id: p.id,
                position: t.apply(&p.position),
            })
            .collect();
        let observations = self
            .observations
            .iter()
            .map(|o| Observation {
                direction: t.apply_direction(&o.direction),
                ..*o
            })
            .collect();
        Self {
            cameras,
            points,
            observations,
        }
    }
}

/// Merges `other` into `base`'s frame using `other_to_base`. Points present
/// in both keep `base`'s coordinates.
pub fn merge_distributed_cameras<T: Real>(
    base: &DistributedCamera<T>,
    other: &DistributedCamera<T>,
    other_to_base: &SimilarityTransform<T>,
) -> Result<DistributedCamera<T>> {
    let base_cams: BTreeSet<u64> = base.cameras.iter().map(|c| c.id).collect();
    if let Some(c) = other.cameras.iter().find(|c| base_cams.contains(&c.id)) {
        return Err(Error::IdCollision(c.id));
    }
    let moved = other.transformed(other_to_base);
    let base_points = base.point_ids();

    let mut merged = base.clone();
    merged.cameras.extend(moved.cameras);
    merged
        .points
        .extend(moved.points.into_iter().filter(|p| !base_points.contains(&p.id)));
    merged.observations.extend(moved.observations);
    Ok(merged)
}
