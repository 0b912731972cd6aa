//! Floating point abstraction shared by the geometric core and the solver.

use nalgebra::RealField;

/// Real scalar the geometry and solver are generic over: `f32` or `f64`.
///
/// The tolerance hooks let the same algorithms run in single precision with
/// thresholds that make sense for its epsilon.
pub trait Real: RealField + Copy + Send + Sync {
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self;

    fn to_f64(self) -> f64;

    /// Tolerance for unit-norm checks on quaternions and ray directions.
    fn unit_tolerance() -> Self;

    /// Magnitude below which a quaternion component counts as zero when
    /// choosing the canonical sign.
    fn sign_threshold() -> Self;

    /// Sphere-constrained stationarity bound for polished solver candidates,
    /// measured on the cost normalized by its Frobenius norm.
    fn stationarity_tolerance() -> Self;
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    fn unit_tolerance() -> Self {
        1e-12
    }
    fn sign_threshold() -> Self {
        1e-12
    }
    fn stationarity_tolerance() -> Self {
        1e-8
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn unit_tolerance() -> Self {
        1e-6
    }
    fn sign_threshold() -> Self {
        1e-6
    }
    fn stationarity_tolerance() -> Self {
        1e-3
    }
}
