//! SO(3) and SE(3) primitives.
//!
//! Tangent vectors of SE(3) are ordered `[rotation; translation]` everywhere in
//! this crate, both in [`Twist`] and in the 6-vectors used for local
//! perturbations `T ← T · exp(δ)`.

mod quaternion;
mod se3;
mod so3;

pub use quaternion::Quaternion;
pub use se3::{
    hat, se3_exp, se3_left_jacobian, se3_left_jacobian_inv, se3_log, se3_right_jacobian,
    se3_right_jacobian_inv, Pose, Twist,
};
pub use so3::{
    so3_exp, so3_left_jacobian, so3_left_jacobian_inv, so3_log, so3_right_jacobian,
    so3_right_jacobian_inv, Rotation,
};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec6 = nalgebra::Vector6<f64>;
pub type Mat4 = nalgebra::Matrix4<f64>;
pub type Mat6 = nalgebra::Matrix6<f64>;

/// Angles closer to π than this are rejected by [`se3_log`].
pub const MAX_INCREMENT_ANGLE: f64 = std::f64::consts::PI - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("rotation angle {angle} rad is too close to pi for a valid odometry increment")]
    InvalidIncrement { angle: f64 },
}

/// Skew-symmetric matrix with `skew(v) * w == v.cross(&w)`.
#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]. The input is antisymmetrized first.
#[inline]
pub fn vee(m: &Mat3) -> Vec3 {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
