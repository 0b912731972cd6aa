//! Closed-form least-squares similarity between two 3D point sets (Umeyama).

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Quaternion, SimilarityTransform};
use crate::scalar::Real;

/// Similarity `T` minimizing `sum |b_i - T(a_i)|²`, with a proper rotation.
pub fn umeyama_align<T: Real>(a: &[Vector3<T>], b: &[Vector3<T>]) -> Result<SimilarityTransform<T>> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "point sets differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 point pairs".into()));
    }
    if a.iter().chain(b).any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidInput("non-finite point".into()));
    }
    let n = T::lit(a.len() as f64);
    let mean_a = a.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mean_b = b.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;

    let mut cov = Matrix3::zeros();
    let mut var_a = T::zero();
    for (pa, pb) in a.iter().zip(b) {
        let da = pa - mean_a;
        cov += (pb - mean_b) * da.transpose();
        var_a += da.norm_squared();
    }
    cov /= n;
    var_a /= n;

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let sv = svd.singular_values;
    let eps = T::default_epsilon().sqrt();
    if !(var_a > T::zero()) || sv[order[1]] <= eps * sv[order[0]] {
        return Err(Error::RankDeficient {
            reason: "point configuration is collinear or degenerate".into(),
            fix_scale: false,
        });
    }

    let mut signs = Vector3::repeat(T::one());
    if u.determinant() * v_t.determinant() < T::zero() {
        signs[order[2]] = -T::one();
    }
    let r = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = sv.component_mul(&signs).sum() / var_a;
    let translation = mean_b - r * mean_a * scale;
    SimilarityTransform::new(Quaternion::from_rotation_matrix(&r)?, translation, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::random_similarity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)))
            .collect()
    }

    #[test]
    fn identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = cloud(&mut rng, 10);
        let t = umeyama_align(&a, &a).unwrap();
        assert!(t.rotation.angle_to(&Quaternion::identity()) <= 1e-12);
        assert!(t.translation.norm() <= 1e-12);
        assert!((t.scale - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn scaled_and_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = cloud(&mut rng, 10);
        let b: Vec<_> = a.iter().map(|p| p * 2.0 + Vector3::repeat(1.0)).collect();
        let t = umeyama_align(&a, &b).unwrap();
        assert!((t.scale - 2.0).abs() <= 1e-10);
        assert!((t.translation - Vector3::repeat(1.0)).norm() <= 1e-10);
        assert!((t.rotation_matrix() - Matrix3::identity()).norm() <= 1e-10);
    }

    #[test]
    fn random_exact_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let truth = random_similarity(&mut rng);
            let a = cloud(&mut rng, 50);
            let b: Vec<_> = a.iter().map(|p| truth.apply(p)).collect();
            let t = umeyama_align(&a, &b).unwrap();
            assert!(t.rotation.angle_to(&truth.rotation) <= 1e-9);
            assert!((t.translation - truth.translation).norm() <= 1e-9 * truth.translation.norm());
            assert!((t.scale - truth.scale).abs() <= 1e-9 * truth.scale);
        }
    }

    #[test]
    fn reflection_is_corrected() {
        // Mirror image of a cloud: the best proper rotation is not a reflection.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = cloud(&mut rng, 20);
        let b: Vec<_> = a.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let t = umeyama_align(&a, &b).unwrap();
        assert!((t.rotation_matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_is_rank_deficient() {
        let a: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.5)).collect();
        let b = a.clone();
        assert!(matches!(umeyama_align(&a, &b), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn length_mismatch() {
        let a = vec![Vector3::<f64>::zeros(); 4];
        assert!(matches!(umeyama_align(&a, &a[..3]), Err(Error::InvalidInput(_))));
    }
}
