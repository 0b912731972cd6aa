//! Random instances for unit tests.

use nalgebra::{Matrix3, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::{Correspondence, Quaternion, Ray, SimilarityTransform};

pub fn random_unit_quaternion<R: Rng>(rng: &mut R) -> Vector4<f64> {
    loop {
        let v = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let q = random_unit_quaternion(rng);
    Quaternion::new(q[0], q[1], q[2], q[3]).unwrap().to_rotation_matrix()
}

pub fn random_similarity<R: Rng>(rng: &mut R) -> SimilarityTransform<f64> {
    let q = random_unit_quaternion(rng);
    let dir = random_unit_quaternion(rng).xyz().normalize();
    let t = dir * rng.random_range(0.5..10.0);
    let s = rng.random_range(0.1..10.0);
    SimilarityTransform::new(Quaternion::new(q[0], q[1], q[2], q[3]).unwrap(), t, s).unwrap()
}

/// Origins in the unit cube, local points in `[-1,1]² x [2,4]`, world points
/// mapped through the inverse of a random world-to-local similarity.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    n: usize,
    noise_px: f64,
) -> (Vec<Correspondence<f64>>, SimilarityTransform<f64>) {
    let truth = random_similarity(rng);
    instance_with(rng, n, &truth, noise_px)
}

pub fn instance_with<R: Rng>(
    rng: &mut R,
    n: usize,
    truth: &SimilarityTransform<f64>,
    noise_px: f64,
) -> (Vec<Correspondence<f64>>, SimilarityTransform<f64>) {
    let to_world = truth.inverse();
    let cs = (0..n)
        .map(|_| {
            let origin = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let local = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(2.0..4.0),
            );
            let mut d = (local - origin).normalize();
            if noise_px > 0.0 {
                let a = d.cross(&Vector3::x());
                let a = if a.norm() < 0.1 { d.cross(&Vector3::y()) } else { a }.normalize();
                let b = d.cross(&a);
                let sigma = noise_px / 800.0;
                let ea: f64 = StandardNormal.sample(rng);
                let eb: f64 = StandardNormal.sample(rng);
                d = (d + a * (ea * sigma) + b * (eb * sigma)).normalize();
            }
            Correspondence::new(Ray::new(origin, d).unwrap(), to_world.apply(&local)).unwrap()
        })
        .collect();
    (cs, *truth)
}
