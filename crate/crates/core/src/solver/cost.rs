//! The reduced least-squares cost in the four quaternion unknowns.
//!
//! With depths, scale and translation eliminated, each constraint error
//! `eta_i = (z_i z_i^T - I)(R X_i - s c_i + t)` is linear in the rotation
//! entries, which are quadratic forms in `q`. Writing
//! `m(q) = (q0², q0q1, q0q2, q0q3, q1², q1q2, q1q3, q2², q2q3, q3²)` gives
//! `eta_i = L_i m(q)` and `C'(q) = m(q)^T Q m(q)` with `Q = sum_i L_i^T L_i`.

use nalgebra::{DMatrix, Matrix3, Matrix4, SMatrix, SVector, Vector3, Vector4};

use super::elimination::EliminationMatrices;
use crate::geometry::{rotation_numerator, Correspondence};
use crate::scalar::Real;

pub type Monomials<T> = SVector<T, 10>;
pub type CostMatrix<T> = SMatrix<T, 10, 10>;

/// Index of monomial `q_a q_b` (a <= b) in `m(q)`.
const MONOMIAL_INDEX: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 4, 5, 6], [2, 5, 7, 8], [3, 6, 8, 9]];

/// `q^T q` expressed over `m(q)`; multiplies constant terms to keep the cost
/// homogeneous.
const SQUARED_NORM: [usize; 4] = [0, 4, 7, 9];

/// `C'(q) = m(q)^T Q m(q)`, a homogeneous quartic in `q`.
///
/// Also keeps an upper-triangular square root `F` with `Q = F^T F`, so the
/// cost is evaluated as `|F m|^2` and stays accurate near zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarticCost<T: Real> {
    pub q: CostMatrix<T>,
    factor: CostMatrix<T>,
}

pub fn monomials<T: Real>(q: &Vector4<T>) -> Monomials<T> {
    let mut m = Monomials::zeros();
    for a in 0..4 {
        for b in a..4 {
            m[MONOMIAL_INDEX[a][b]] = q[a] * q[b];
        }
    }
    m
}

/// `d m / d q` (10x4).
fn monomial_jacobian<T: Real>(q: &Vector4<T>) -> SMatrix<T, 10, 4> {
    let mut j = SMatrix::<T, 10, 4>::zeros();
    for a in 0..4 {
        for b in a..4 {
            let k = MONOMIAL_INDEX[a][b];
            j[(k, a)] += q[b];
            j[(k, b)] += q[a];
        }
    }
    j
}

/// `J(X)` with `R(q) X = J(X) m(q)` for unit `q`.
fn rotation_action<T: Real>(x: &Vector3<T>) -> SMatrix<T, 3, 10> {
    let mut j = SMatrix::<T, 3, 10>::zeros();
    // R(q) = sum_k m_k E_k; recover each E_k by evaluating the numerator on
    // the monomial basis.
    for a in 0..4 {
        for b in a..4 {
            let k = MONOMIAL_INDEX[a][b];
            let e = basis_matrix::<T>(a, b);
            j.set_column(k, &(e * x));
        }
    }
    j
}

/// Coefficient matrix of the monomial `q_a q_b` in `|q|^2 R(q)`.
fn basis_matrix<T: Real>(a: usize, b: usize) -> Matrix3<T> {
    let eval = |v: [T; 4]| rotation_numerator(v[0], v[1], v[2], v[3]);
    let unit = |i: usize| {
        let mut v = [T::zero(); 4];
        v[i] = T::one();
        v
    };
    if a == b {
        eval(unit(a))
    } else {
        // N(e_a + e_b) = N(e_a) + N(e_b) + E_ab for a quadratic form.
        let mut v = unit(a);
        v[b] = T::one();
        eval(v) - eval(unit(a)) - eval(unit(b))
    }
}

fn homogenizer<T: Real>() -> Monomials<T> {
    let mut h = Monomials::zeros();
    for k in SQUARED_NORM {
        h[k] = T::one();
    }
    h
}

/// Assembles `Q` in O(n).
pub fn build_quartic_cost<T: Real>(
    correspondences: &[Correspondence<T>],
    elim: &EliminationMatrices<T>,
) -> QuarticCost<T> {
    debug_assert_eq!(correspondences.len(), elim.len());
    let h = homogenizer::<T>();
    let offset = elim.offset();

    // (s, t) as linear maps of m(q): rows 0 (scale) and 1..4 (translation).
    let mut st = SMatrix::<T, 4, 10>::zeros();
    let actions: Vec<_> = elim.points().iter().map(rotation_action).collect();
    for (blk, act) in elim.blocks().iter().zip(&actions) {
        st += blk * act;
    }
    st += offset * h.transpose();
    let scale_row = st.fixed_rows::<1>(0).into_owned();
    let trans = st.fixed_rows::<3>(1).into_owned();

    let n = elim.len();
    let mut stacked = DMatrix::<T>::zeros(3 * n, 10);
    for (i, ((z, c), act)) in elim.directions().iter().zip(elim.origins()).zip(&actions).enumerate() {
        let proj = z * z.transpose() - Matrix3::identity();
        let l = proj * (act - c * scale_row + trans);
        stacked.fixed_view_mut::<3, 10>(3 * i, 0).copy_from(&l);
    }
    QuarticCost::from_factor(triangular_factor(stacked))
}

/// Upper-triangular `F` (10x10) with `F^T F = L^T L` for a tall `L`.
fn triangular_factor<T: Real>(stacked: DMatrix<T>) -> CostMatrix<T> {
    let r = stacked.qr().r();
    let mut f = CostMatrix::zeros();
    f.view_mut((0, 0), (r.nrows(), 10)).copy_from(&r);
    f
}

impl<T: Real> QuarticCost<T> {
    pub fn from_factor(factor: CostMatrix<T>) -> Self {
        Self {
            q: factor.transpose() * factor,
            factor,
        }
    }

    /// From a symmetric positive-semidefinite `Q`.
    pub fn from_matrix(q: CostMatrix<T>) -> Self {
        let sym = (q + q.transpose()) * T::lit(0.5);
        let eig = nalgebra::SymmetricEigen::new(sym);
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(T::zero()).sqrt());
        let factor = CostMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
        Self { q: sym, factor }
    }

    fn weighted(&self, m: &Monomials<T>) -> Monomials<T> {
        self.factor.transpose() * (self.factor * m)
    }

    pub fn evaluate(&self, q: &Vector4<T>) -> T {
        (self.factor * monomials(q)).norm_squared()
    }

    pub fn gradient(&self, q: &Vector4<T>) -> Vector4<T> {
        let m = monomials(q);
        monomial_jacobian(q).transpose() * self.weighted(&m) * T::lit(2.0)
    }

    /// Euclidean Hessian (4x4).
    pub fn hessian(&self, q: &Vector4<T>) -> Matrix4<T> {
        let m = monomials(q);
        let qm = self.weighted(&m);
        let j = monomial_jacobian(q);
        let mut h = j.transpose() * self.q * j;
        // Curvature of the monomials themselves.
        for a in 0..4 {
            for b in a..4 {
                let g = qm[MONOMIAL_INDEX[a][b]];
                if a == b {
                    h[(a, a)] += g * T::lit(2.0);
                } else {
                    h[(a, b)] += g;
                    h[(b, a)] += g;
                }
            }
        }
        h * T::lit(2.0)
    }

    pub fn frobenius_norm(&self) -> T {
        self.q.norm()
    }

    /// Cost multiplied by a positive `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            q: self.q * factor,
            factor: self.factor * factor.sqrt(),
        }
    }
}

/// `∇C'(q)`; each component is a cubic in `q`.
pub fn cost_gradient<T: Real>(cost: &QuarticCost<T>, q: &Vector4<T>) -> Vector4<T> {
    cost.gradient(q)
}

/// Component of the gradient tangent to the sphere at `q`:
/// `∇C' - (q^T ∇C') q` for unit `q`.
pub fn sphere_stationarity<T: Real>(cost: &QuarticCost<T>, q: &Vector4<T>) -> T {
    let g = cost.gradient(q);
    (g - q * q.dot(&g)).norm()
}

/// `sum_i |eta_i|^2` evaluated term by term from the elimination matrices.
/// Independent of `Q`; used to check its assembly.
pub fn direct_cost<T: Real>(elim: &EliminationMatrices<T>, q: &Vector4<T>) -> T {
    let n2 = q.norm_squared();
    let r = rotation_numerator(q[0], q[1], q[2], q[3]) / n2;
    let (s, t) = elim.scale_translation(&r);
    let total = elim
        .directions()
        .iter()
        .zip(elim.origins())
        .zip(elim.points())
        .map(|((z, c), x)| {
            let v = r * x - c * s + t;
            ((z * z.transpose() - Matrix3::identity()) * v).norm_squared()
        })
        .fold(T::zero(), |a, b| a + b);
    // C' is a quartic; the normalized evaluation is rescaled by |q|^4.
    total * n2 * n2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::elimination::{build_elimination, ScaleMode};
    use crate::testing::{random_instance, random_unit_quaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let (cs, _) = random_instance(&mut rng, 8, 2.0);
            let e = build_elimination(&cs, ScaleMode::Free).unwrap();
            let cost = build_quartic_cost(&cs, &e);
            for _ in 0..100 {
                let q = random_unit_quaternion(&mut rng);
                let a = cost.evaluate(&q);
                let b = direct_cost(&e, &q);
                assert!((a - b).abs() <= 1e-9 * b.max(1e-300) + 1e-18, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn fixed_scale_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (cs, _) = random_instance(&mut rng, 8, 1.0);
        let e = build_elimination(&cs, ScaleMode::Fixed(1.0)).unwrap();
        let cost = build_quartic_cost(&cs, &e);
        for _ in 0..100 {
            let q = random_unit_quaternion(&mut rng);
            let a = cost.evaluate(&q);
            let b = direct_cost(&e, &q);
            assert!((a - b).abs() <= 1e-9 * b.max(1e-300) + 1e-18);
        }
    }

    #[test]
    fn noise_free_cost_vanishes_at_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let (cs, truth) = random_instance(&mut rng, 6, 0.0);
            let e = build_elimination(&cs, ScaleMode::Free).unwrap();
            let cost = build_quartic_cost(&cs, &e);
            let q = Vector4::from(truth.rotation.coords());
            assert!(cost.evaluate(&q) <= 1e-18);
            let normalized = cost.scaled(1.0 / cost.frobenius_norm());
            assert!(normalized.evaluate(&q) <= 1e-18);
            assert!(normalized.gradient(&q).norm() <= 1e-12);
        }
    }

    #[test]
    fn even_and_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let (cs, _) = random_instance(&mut rng, 6, 1.0);
        let e = build_elimination(&cs, ScaleMode::Free).unwrap();
        let cost = build_quartic_cost(&cs, &e);
        for _ in 0..100 {
            let q = random_unit_quaternion(&mut rng);
            assert_eq!(cost.evaluate(&q), cost.evaluate(&-q));
            let lambda: f64 = rng.random_range(0.2..3.0);
            let c = cost.evaluate(&q);
            assert!((cost.evaluate(&(q * lambda)) - lambda.powi(4) * c).abs() <= 1e-9 * lambda.powi(4) * c);
            // Euler: q . grad = 4 C'
            let g = cost_gradient(&cost, &q);
            assert!((q.dot(&g) - 4.0 * c).abs() <= 1e-9 * c);
            assert!(c >= 0.0);
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..50 {
            let (cs, _) = random_instance(&mut rng, 6, 1.0);
            let e = build_elimination(&cs, ScaleMode::Free).unwrap();
            let cost = build_quartic_cost(&cs, &e);
            let q = random_unit_quaternion(&mut rng);
            let g = cost.gradient(&q);
            let h = cost.hessian(&q);
            let step = 1e-6;
            for k in 0..4 {
                let mut d = Vector4::zeros();
                d[k] = step;
                let fd = (cost.evaluate(&(q + d)) - cost.evaluate(&(q - d))) / (2.0 * step);
                assert!((fd - g[k]).abs() <= 1e-5 * g.norm());
                let fdg = (cost.gradient(&(q + d)) - cost.gradient(&(q - d))) / (2.0 * step);
                assert!((fdg - h.column(k)).norm() <= 1e-5 * h.norm());
            }
        }
    }

    #[test]
    fn cost_is_minimum_over_eliminated_unknowns() {
        // C'(q) is the stacked residual |A x - W b|^2 at the least-squares x;
        // perturbing any depth, the scale or the translation only increases it.
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let (cs, _) = random_instance(&mut rng, 10, 1.0);
        let e = build_elimination(&cs, ScaleMode::Free).unwrap();
        let cost = build_quartic_cost(&cs, &e);
        let residual = |r: &Matrix3<f64>, depths: &[f64], s: f64, t: &Vector3<f64>| {
            cs.iter()
                .zip(depths)
                .map(|(c, a)| (c.ray.direction * *a + c.ray.origin * s - t - r * c.point).norm_squared())
                .sum::<f64>()
        };
        for _ in 0..20 {
            let q = random_unit_quaternion(&mut rng);
            let r = rotation_numerator(q[0], q[1], q[2], q[3]);
            let (depths, s, t) = e.solve_for_rotation(&r);
            let c = cost.evaluate(&q);
            assert!((residual(&r, &depths, s, &t) - c).abs() <= 1e-9 * c);
            let mut perturbed = depths.clone();
            perturbed[3] += 0.01;
            assert!(residual(&r, &perturbed, s, &t) > c);
            assert!(residual(&r, &depths, s * 1.01, &t) > c);
            assert!(residual(&r, &depths, s, &(t + Vector3::new(0.0, 0.01, 0.0))) > c);
        }
    }
}
