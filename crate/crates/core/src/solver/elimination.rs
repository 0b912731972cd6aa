//! Linear elimination of the depths, scale and translation.
//!
//! Stacking `s c_i + alpha_i z_i - t = R X_i` gives `A x = W b` with
//! `x = (alpha_1..alpha_n, s, t)`. The pseudo-inverse `(A^T A)^-1 A^T` is
//! assembled in closed form: eliminating each depth leaves a 4x4 system in
//! `(s, t)` whose matrix `M = sum_i B_i^T B_i` only involves the projectors
//! `P_i = I - z_i z_i^T`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Matrix4x3, SymmetricEigen, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::geometry::Correspondence;
use crate::scalar::Real;

/// How the scale unknown is treated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleMode<T> {
    /// Scale is estimated (generalized pose-and-scale).
    Free,
    /// Scale frozen at the given value (generalized absolute pose).
    Fixed(T),
}

impl<T> Default for ScaleMode<T> {
    fn default() -> Self {
        ScaleMode::Free
    }
}

/// Constant matrices expressing depths, scale and translation as linear
/// functions of `W b` (the rotated world points).
///
/// Stored per correspondence: block `i` of `[S; V]` is a 4x3 matrix, so the
/// solve stays O(n). Dense `U`, `S`, `V` are available on request.
#[derive(Debug, Clone)]
pub struct EliminationMatrices<T: Real> {
    mode: ScaleMode<T>,
    directions: Vec<Vector3<T>>,
    origins: Vec<Vector3<T>>,
    points: Vec<Vector3<T>>,
    /// Block `i` of `[S; V]`, mapping `R X_i` to its `(s, t)` contribution.
    blocks: Vec<Matrix4x3<T>>,
    /// Affine part of `(s, t)`; nonzero only with a fixed scale.
    offset: Vector4<T>,
}

/// Relative eigenvalue floor of `M` below which the system is rank-deficient.
const RANK_TOLERANCE: f64 = 1e-12;

impl<T: Real> EliminationMatrices<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mode(&self) -> ScaleMode<T> {
        self.mode
    }

    pub(crate) fn directions(&self) -> &[Vector3<T>] {
        &self.directions
    }

    pub(crate) fn origins(&self) -> &[Vector3<T>] {
        &self.origins
    }

    pub(crate) fn points(&self) -> &[Vector3<T>] {
        &self.points
    }

    pub(crate) fn blocks(&self) -> &[Matrix4x3<T>] {
        &self.blocks
    }

    pub(crate) fn offset(&self) -> Vector4<T> {
        self.offset
    }

    /// `(s, t)` for rotation `r`, in the units of the stacked constraint.
    pub fn scale_translation(&self, r: &Matrix3<T>) -> (T, Vector3<T>) {
        let mut st = self.offset;
        for (blk, x) in self.blocks.iter().zip(&self.points) {
            st += blk * (r * x);
        }
        (st[0], Vector3::new(st[1], st[2], st[3]))
    }

    /// Least-squares `x = (alpha_1..alpha_n, s, t)` for rotation `r`.
    pub fn solve_for_rotation(&self, r: &Matrix3<T>) -> (Vec<T>, T, Vector3<T>) {
        let (s, t) = self.scale_translation(r);
        let depths = self
            .directions
            .iter()
            .zip(&self.origins)
            .zip(&self.points)
            .map(|((z, c), x)| z.dot(&(r * x + t - c * s)))
            .collect();
        (depths, s, t)
    }

    /// Stacked world points `b` (length 3n).
    pub fn b(&self) -> DVector<T> {
        DVector::from_iterator(3 * self.len(), self.points.iter().flat_map(|p| p.iter().copied()))
    }

    /// `S` as a 1x3n row.
    pub fn s_row(&self) -> DMatrix<T> {
        let n = self.len();
        DMatrix::from_fn(1, 3 * n, |_, j| self.blocks[j / 3][(0, j % 3)])
    }

    /// `V` as a 3x3n block.
    pub fn v_block(&self) -> DMatrix<T> {
        let n = self.len();
        DMatrix::from_fn(3, 3 * n, |r, j| self.blocks[j / 3][(r + 1, j % 3)])
    }

    /// `U` as an n x 3n matrix: `alpha_i = u_i^T W b` (plus the fixed-scale
    /// offset, when present). Quadratic in n; the solver never forms it.
    pub fn u_matrix(&self) -> DMatrix<T> {
        let n = self.len();
        let s = self.s_row();
        let v = self.v_block();
        let mut u = DMatrix::zeros(n, 3 * n);
        for i in 0..n {
            let z = self.directions[i];
            let zc = z.dot(&self.origins[i]);
            for j in 0..3 * n {
                u[(i, j)] = z[0] * v[(0, j)] + z[1] * v[(1, j)] + z[2] * v[(2, j)] - zc * s[(0, j)];
            }
            for k in 0..3 {
                u[(i, 3 * i + k)] += z[k];
            }
        }
        u
    }
}

/// Builds the elimination matrices for `n >= 4` correspondences.
pub fn build_elimination<T: Real>(
    correspondences: &[Correspondence<T>],
    mode: ScaleMode<T>,
) -> Result<EliminationMatrices<T>> {
    let n = correspondences.len();
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "at least 4 correspondences required, got {n}"
        )));
    }
    let directions: Vec<_> = correspondences.iter().map(|c| c.ray.direction).collect();
    let origins: Vec<_> = correspondences.iter().map(|c| c.ray.origin).collect();
    let points: Vec<_> = correspondences.iter().map(|c| c.point).collect();
    let projectors: Vec<Matrix3<T>> = directions
        .iter()
        .map(|z| Matrix3::identity() - z * z.transpose())
        .collect();

    match mode {
        ScaleMode::Free => {
            let mut m = Matrix4::zeros();
            for (p, c) in projectors.iter().zip(&origins) {
                let pc = p * c;
                m[(0, 0)] += c.dot(&pc);
                for k in 0..3 {
                    m[(0, k + 1)] -= pc[k];
                    m[(k + 1, 0)] -= pc[k];
                }
                let mut block = m.fixed_view_mut::<3, 3>(1, 1);
                block += p;
            }
            check_rank(&m, &projectors)?;
            let m_inv = m
                .try_inverse()
                .ok_or_else(|| Error::RankDeficient {
                    reason: "normal matrix is singular".into(),
                    fix_scale: false,
                })?;
            let blocks = projectors
                .iter()
                .zip(&origins)
                .map(|(p, c)| {
                    let mut rhs = Matrix4x3::zeros();
                    rhs.row_mut(0).copy_from(&(c.transpose() * p));
                    rhs.fixed_view_mut::<3, 3>(1, 0).copy_from(&(-p));
                    m_inv * rhs
                })
                .collect();
            Ok(EliminationMatrices {
                mode,
                directions,
                origins,
                points,
                blocks,
                offset: Vector4::zeros(),
            })
        }
        ScaleMode::Fixed(s0) => {
            let sum_p = projectors.iter().fold(Matrix3::zeros(), |acc, p| acc + p);
            let eig = SymmetricEigen::new(sum_p);
            let max = eig.eigenvalues.max();
            if eig.eigenvalues.min() <= T::lit(RANK_TOLERANCE) * max {
                return Err(Error::RankDeficient {
                    reason: "all rays are parallel; translation is unobservable".into(),
                    fix_scale: false,
                });
            }
            let inv = sum_p.try_inverse().ok_or_else(|| Error::RankDeficient {
                reason: "translation normal matrix is singular".into(),
                fix_scale: false,
            })?;
            let mut blocks = Vec::with_capacity(n);
            let mut t0 = Vector3::zeros();
            for (p, c) in projectors.iter().zip(&origins) {
                let v = -(inv * p);
                t0 -= v * c * s0;
                let mut blk = Matrix4x3::zeros();
                blk.fixed_view_mut::<3, 3>(1, 0).copy_from(&v);
                blocks.push(blk);
            }
            Ok(EliminationMatrices {
                mode,
                directions,
                origins,
                points,
                blocks,
                offset: Vector4::new(s0, t0[0], t0[1], t0[2]),
            })
        }
    }
}

fn check_rank<T: Real>(m: &Matrix4<T>, projectors: &[Matrix3<T>]) -> Result<()> {
    let eig = SymmetricEigen::new(*m);
    let max = eig.eigenvalues.max();
    if max <= T::zero() || eig.eigenvalues.min() <= T::lit(RANK_TOLERANCE) * max {
        // If translation alone is observable, freezing the scale repairs the system.
        let sum_p = projectors.iter().fold(Matrix3::zeros(), |acc, p| acc + p);
        let e = SymmetricEigen::new(sum_p).eigenvalues;
        let fix_scale = e.min() > T::lit(RANK_TOLERANCE) * e.max();
        return Err(Error::RankDeficient {
            reason: "scale column is dependent (ray origins coincide)".into(),
            fix_scale,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Ray;
    use crate::testing::{random_instance, random_rotation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Dense `A` from the stacked constraint `s c_i + alpha_i z_i - t = R X_i`.
    fn dense_a(cs: &[Correspondence<f64>]) -> DMatrix<f64> {
        let n = cs.len();
        let mut a = DMatrix::zeros(3 * n, n + 4);
        for (i, c) in cs.iter().enumerate() {
            for k in 0..3 {
                a[(3 * i + k, i)] = c.ray.direction[k];
                a[(3 * i + k, n)] = c.ray.origin[k];
                a[(3 * i + k, n + 1 + k)] = -1.0;
            }
        }
        a
    }

    fn w_b(r: &Matrix3<f64>, cs: &[Correspondence<f64>]) -> DVector<f64> {
        DVector::from_iterator(3 * cs.len(), cs.iter().flat_map(|c| (r * c.point).iter().copied().collect::<Vec<_>>()))
    }

    #[test]
    fn normal_equations_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (cs, _) = random_instance(&mut rng, 6, 0.5);
            let e = build_elimination(&cs, ScaleMode::Free).unwrap();
            let a = dense_a(&cs);
            for _ in 0..100 {
                let r = random_rotation(&mut rng);
                let (depths, s, t) = e.solve_for_rotation(&r);
                let mut x = DVector::from_vec(depths);
                x = x.push(s);
                let x = DVector::from_iterator(x.len() + 3, x.iter().copied().chain(t.iter().copied()));
                let wb = w_b(&r, &cs);
                let g = a.transpose() * (&a * &x - &wb);
                let scale = (a.transpose() * &wb).amax().max(1.0);
                assert!(g.amax() <= 1e-8 * scale, "{}", g.amax());
            }
        }
    }

    #[test]
    fn closed_form_matches_dense_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in [4, 5, 9, 20] {
            let (cs, _) = random_instance(&mut rng, n, 0.0);
            let e = build_elimination(&cs, ScaleMode::Free).unwrap();
            let a = dense_a(&cs);
            let pinv = (a.transpose() * &a).try_inverse().unwrap() * a.transpose();
            let u = e.u_matrix();
            let s = e.s_row();
            let v = e.v_block();
            let scale = pinv.amax();
            assert!((pinv.rows(0, n) - u).amax() <= 1e-8 * scale);
            assert!((pinv.rows(n, 1) - s).amax() <= 1e-8 * scale);
            assert!((pinv.rows(n + 1, 3) - v).amax() <= 1e-8 * scale);
        }
    }

    #[test]
    fn minimal_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (cs, _) = random_instance(&mut rng, 4, 0.0);
        let e = build_elimination(&cs, ScaleMode::Free).unwrap();
        let (u, s, v) = (e.u_matrix(), e.s_row(), e.v_block());
        assert_eq!(u.shape(), (4, 12));
        assert_eq!(s.shape(), (1, 12));
        assert_eq!(v.shape(), (3, 12));
        assert!(u.iter().chain(s.iter()).chain(v.iter()).all(|x| x.is_finite()));
        assert_eq!(e.b().len(), 12);
    }

    #[test]
    fn central_rays_are_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (cs, _) = random_instance(&mut rng, 6, 0.0);
        let central: Vec<_> = cs
            .iter()
            .map(|c| Correspondence {
                ray: Ray::new(Vector3::zeros(), c.ray.direction).unwrap(),
                ..*c
            })
            .collect();
        match build_elimination(&central, ScaleMode::Free) {
            Err(Error::RankDeficient { fix_scale, .. }) => assert!(fix_scale),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        assert!(build_elimination(&central, ScaleMode::Fixed(1.0)).is_ok());
    }

    #[test]
    fn too_few_correspondences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (cs, _) = random_instance(&mut rng, 3, 0.0);
        assert!(matches!(
            build_elimination(&cs, ScaleMode::Free),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn fixed_scale_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let (cs, _) = random_instance(&mut rng, 7, 0.3);
        let e = build_elimination(&cs, ScaleMode::Fixed(1.0)).unwrap();
        // Unknowns (alpha, t); right-hand side R X_i - c_i.
        let n = cs.len();
        let mut a = DMatrix::zeros(3 * n, n + 3);
        for (i, c) in cs.iter().enumerate() {
            for k in 0..3 {
                a[(3 * i + k, i)] = c.ray.direction[k];
                a[(3 * i + k, n + k)] = -1.0;
            }
        }
        for _ in 0..20 {
            let r = random_rotation(&mut rng);
            let (depths, s, t) = e.solve_for_rotation(&r);
            assert_eq!(s, 1.0);
            let x = DVector::from_iterator(n + 3, depths.into_iter().chain(t.iter().copied()));
            let rhs = DVector::from_iterator(
                3 * n,
                cs.iter()
                    .flat_map(|c| (r * c.point - c.ray.origin).iter().copied().collect::<Vec<_>>()),
            );
            let g = a.transpose() * (&a * &x - &rhs);
            assert!(g.amax() <= 1e-9 * (a.transpose() * &rhs).amax().max(1.0));
        }
    }
}
