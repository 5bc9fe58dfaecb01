use std::ops::Mul;

use super::{skew, vee, Mat3, Vec3};

/// Below this angle `so3_exp`/`so3_log` use their series branch.
const SMALL_ANGLE: f64 = 1e-8;
/// Below this angle the Jacobian coefficients switch to Taylor series.
const SERIES_ANGLE: f64 = 1e-2;

/// An element of SO(3), stored as a 3×3 orthonormal matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps a matrix that the caller guarantees is a rotation.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Projects an approximately orthonormal matrix back onto SO(3).
    pub fn from_matrix(m: Mat3) -> Self {
        Rotation(m).renormalized()
    }

    #[inline]
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    #[inline]
    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    #[inline]
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation angle in [0, π].
    pub fn angle(&self) -> f64 {
        so3_log(self).norm()
    }

    /// Newton iterations of the polar decomposition, `R ← R(3I − RᵀR)/2`.
    pub fn renormalized(&self) -> Self {
        let mut r = self.0;
        for _ in 0..3 {
            let err = r.transpose() * r - Mat3::identity();
            if err.amax() < 1e-15 {
                break;
            }
            r = r * (Mat3::identity() * 1.5 - 0.5 * r.transpose() * r);
        }
        Rotation(r)
    }

    /// Z-Y-X (yaw, pitch, roll) composition: `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let rx = so3_exp(&Vec3::new(roll, 0.0, 0.0));
        let ry = so3_exp(&Vec3::new(0.0, pitch, 0.0));
        let rz = so3_exp(&Vec3::new(0.0, 0.0, yaw));
        rz * ry * rx
    }

    /// Inverse of [`Rotation::from_rpy`], returned as `[roll, pitch, yaw]`.
    pub fn to_rpy(&self) -> Vec3 {
        let m = &self.0;
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let pitch = (-m[(2, 0)]).atan2((m[(2, 1)] * m[(2, 1)] + m[(2, 2)] * m[(2, 2)]).sqrt());
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        Vec3::new(roll, pitch, yaw)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0).renormalized()
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rodrigues' formula.
pub fn so3_exp(omega: &Vec3) -> Rotation {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = skew(omega);
    let w2 = w * w;
    if theta < SMALL_ANGLE {
        return Rotation(Mat3::identity() + w + 0.5 * w2);
    }
    let half = 0.5 * theta;
    let a = theta.sin() / theta;
    let b = 2.0 * half.sin() * half.sin() / theta2;
    Rotation(Mat3::identity() + a * w + b * w2)
}

/// Rotation vector with norm in [0, π].
///
/// At exactly π the axis sign is fixed so that its largest-magnitude
/// component is positive.
pub fn so3_log(r: &Rotation) -> Vec3 {
    let m = r.matrix();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let w = vee(m);
    let sin = w.norm();
    let theta = sin.atan2(cos);
    if theta < SMALL_ANGLE {
        return w * (1.0 + theta * theta / 6.0);
    }
    if cos < 0.0 && sin < 1e-3 {
        // Near π: recover the axis from the symmetric part, a·aᵀ = (sym(R) − cosθ·I)/(1 − cosθ).
        let sym = (m + m.transpose()) * 0.5;
        let aat = (sym - Mat3::identity() * cos) / (1.0 - cos);
        let k = (0..3)
            .max_by(|&i, &j| aat[(i, i)].total_cmp(&aat[(j, j)]))
            .unwrap_or(0);
        let mut axis = aat.column(k).into_owned() / aat[(k, k)].max(0.0).sqrt();
        axis.normalize_mut();
        let dot = axis.dot(&w);
        if dot < 0.0 {
            axis = -axis;
        } else if dot == 0.0 {
            let imax = axis.iamax();
            if axis[imax] < 0.0 {
                axis = -axis;
            }
        }
        return axis * theta;
    }
    w * (theta / sin)
}

fn coeff_b(theta: f64) -> f64 {
    // (1 − cos θ) / θ²
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        0.5 - t2 / 24.0 + t2 * t2 / 720.0
    } else {
        let s = (0.5 * theta).sin();
        2.0 * s * s / (theta * theta)
    }
}

pub(crate) fn coeff_c(theta: f64) -> f64 {
    // (θ − sin θ) / θ³
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    } else {
        (theta - theta.sin()) / (theta * theta * theta)
    }
}

fn coeff_inv(theta: f64) -> f64 {
    // 1/θ² − (1 + cos θ) / (2θ sin θ)
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    }
}

/// `so3_exp(ω + δ) ≈ so3_exp(ω) · so3_exp(Jr(ω) δ)`.
pub fn so3_right_jacobian(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let w = skew(omega);
    Mat3::identity() - coeff_b(theta) * w + coeff_c(theta) * w * w
}

/// `so3_exp(ω + δ) ≈ so3_exp(Jl(ω) δ) · so3_exp(ω)`; also the SE(3) `V` matrix.
pub fn so3_left_jacobian(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let w = skew(omega);
    Mat3::identity() + coeff_b(theta) * w + coeff_c(theta) * w * w
}

pub fn so3_right_jacobian_inv(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let w = skew(omega);
    Mat3::identity() + 0.5 * w + coeff_inv(theta) * w * w
}

pub fn so3_left_jacobian_inv(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let w = skew(omega);
    Mat3::identity() - 0.5 * w + coeff_inv(theta) * w * w
}
