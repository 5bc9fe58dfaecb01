use std::ops::Mul;

use nalgebra::{Matrix3, Vector6};

use super::so3::coeff_c;
use super::{
    skew, so3_exp, so3_left_jacobian, so3_left_jacobian_inv, so3_log, GeometryError, Mat3, Mat4,
    Mat6, Rotation, Vec3, Vec6, MAX_INCREMENT_ANGLE,
};

/// A rigid transform. `Pose { rotation: R_ab, translation: t_ab }` maps points
/// from frame `b` into frame `a`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::default()
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose::new(Rotation::identity(), t)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.inverse();
        Pose::new(rt, -rt.rotate(&self.translation))
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation.rotate(&other.translation) + self.translation,
        )
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Homogeneous 4×4 matrix.
    pub fn matrix(&self) -> Mat4 {
        let mut m = Mat4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Reads the rotation and translation blocks of a homogeneous matrix,
    /// re-orthonormalizing the rotation.
    pub fn from_matrix(m: &Mat4) -> Pose {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        Pose::new(Rotation::from_matrix(r), m.fixed_view::<3, 1>(0, 3).into_owned())
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

/// se(3) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub rotation: Vec3,
    pub translation: Vec3,
}

impl Twist {
    pub fn new(rotation: Vec3, translation: Vec3) -> Self {
        Twist {
            rotation,
            translation,
        }
    }

    pub fn zero() -> Self {
        Twist::default()
    }

    /// `[rotation; translation]`
    pub fn to_vector(&self) -> Vec6 {
        Vector6::new(
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        )
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Twist::new(v.fixed_rows::<3>(0).into_owned(), v.fixed_rows::<3>(3).into_owned())
    }

    pub fn scaled(&self, s: f64) -> Twist {
        Twist::new(self.rotation * s, self.translation * s)
    }
}

/// 4×4 matrix form of a twist given as `[rotation; translation]`.
pub fn hat(xi: &Vec6) -> Mat4 {
    let mut m = Mat4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&skew(&xi.fixed_rows::<3>(0).into_owned()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.fixed_rows::<3>(3));
    m
}

pub fn se3_exp(xi: &Twist) -> Pose {
    let r = so3_exp(&xi.rotation);
    let t = so3_left_jacobian(&xi.rotation) * xi.translation;
    Pose::new(r, t)
}

/// Fails when the rotation angle is within 1e-6 of π, where the logarithm
/// stops being unique.
pub fn se3_log(p: &Pose) -> Result<Twist, GeometryError> {
    let w = so3_log(&p.rotation);
    let angle = w.norm();
    if angle > MAX_INCREMENT_ANGLE {
        return Err(GeometryError::InvalidIncrement { angle });
    }
    Ok(Twist::new(w, so3_left_jacobian_inv(&w) * p.translation))
}

/// Coupling block of the SE(3) left Jacobian for `[rotation; translation]`
/// ordering.
fn q_block(phi: &Vec3, rho: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let t2 = theta * theta;
    let (c2, c3) = if theta < 0.05 {
        (
            1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0,
            1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        (
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta),
        )
    };
    let c1 = coeff_c(theta);
    let p = skew(phi);
    let r = skew(rho);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    let pp = p * p;
    0.5 * r + c1 * (pr + rp + prp) + c2 * (pp * r + rp * p - 3.0 * prp) + c3 * (prp * p + pp * r * p)
}

fn assemble(j: &Mat3, q: &Mat3) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(j);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(j);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(q);
    m
}

fn assemble_inv(j: &Mat3, q: &Mat3) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(j);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(j);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-j * q * j));
    m
}

/// `exp(ξ + δ) ≈ exp(Jl(ξ) δ) · exp(ξ)`.
pub fn se3_left_jacobian(xi: &Twist) -> Mat6 {
    assemble(
        &so3_left_jacobian(&xi.rotation),
        &q_block(&xi.rotation, &xi.translation),
    )
}

/// `exp(ξ + δ) ≈ exp(ξ) · exp(Jr(ξ) δ)`.
pub fn se3_right_jacobian(xi: &Twist) -> Mat6 {
    se3_left_jacobian(&xi.scaled(-1.0))
}

pub fn se3_left_jacobian_inv(xi: &Twist) -> Mat6 {
    assemble_inv(
        &so3_left_jacobian_inv(&xi.rotation),
        &q_block(&xi.rotation, &xi.translation),
    )
}

/// `log(exp(ξ) · exp(δ)) ≈ ξ + Jr⁻¹(ξ) δ`.
pub fn se3_right_jacobian_inv(xi: &Twist) -> Mat6 {
    se3_left_jacobian_inv(&xi.scaled(-1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec3(scale: f64) -> impl Strategy<Value = Vec3> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_map(move |(x, y, z)| Vec3::new(x, y, z) * scale)
    }

    fn twist(rot_scale: f64) -> impl Strategy<Value = Twist> {
        (vec3(1.0), vec3(5.0)).prop_map(move |(w, t)| {
            let w = if w.norm() > 1.0 { w.normalize() } else { w };
            Twist::new(w * rot_scale, t)
        })
    }

    fn pose() -> impl Strategy<Value = Pose> {
        twist(3.0).prop_map(|xi| se3_exp(&xi))
    }

    fn pose_dist(a: &Pose, b: &Pose) -> f64 {
        (a.rotation.matrix() - b.rotation.matrix())
            .amax()
            .max((a.translation - b.translation).amax())
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(se3_exp(&Twist::zero()), Pose::identity());
    }

    #[test]
    fn pure_translation() {
        let p = se3_exp(&Twist::new(Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(p, Pose::from_translation(Vec3::new(1.0, 2.0, 3.0)));
    }

    #[test]
    fn log_rejects_half_turn() {
        let p = Pose::new(
            Rotation::from_matrix_unchecked(Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0))),
            Vec3::zeros(),
        );
        assert!(matches!(se3_log(&p), Err(GeometryError::InvalidIncrement { .. })));
    }

    #[test]
    fn compose_identity_and_double_inverse() {
        let p = se3_exp(&Twist::new(Vec3::new(0.3, -0.2, 1.1), Vec3::new(4.0, -1.0, 2.0)));
        assert!(pose_dist(&(p * Pose::identity()), &p) < 1e-15);
        assert!(pose_dist(&p.inverse().inverse(), &p) < 1e-12);
    }

    #[test]
    fn matrix_round_trip() {
        let p = se3_exp(&Twist::new(Vec3::new(0.3, -0.2, 1.1), Vec3::new(4.0, -1.0, 2.0)));
        assert!(pose_dist(&Pose::from_matrix(&p.matrix()), &p) < 1e-15);
        let q = se3_exp(&Twist::new(Vec3::new(-0.5, 0.1, 0.2), Vec3::new(1.0, 1.0, 0.0)));
        assert!((p.matrix() * q.matrix() - (p * q).matrix()).amax() < 1e-14);
    }

    #[test]
    fn hat_matches_matrix_exponential_series() {
        let xi = Twist::new(Vec3::new(0.2, -0.1, 0.3), Vec3::new(1.0, 0.5, -0.2));
        let h = hat(&xi.to_vector());
        let mut term = Mat4::identity();
        let mut sum = Mat4::identity();
        for k in 1..30 {
            term = term * h / k as f64;
            sum += term;
        }
        assert!((sum - se3_exp(&xi).matrix()).amax() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn log_exp_round_trip(xi in twist(2.999)) {
            let back = se3_log(&se3_exp(&xi)).unwrap();
            prop_assert!((back.to_vector() - xi.to_vector()).amax() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn inverse_is_inverse(p in pose()) {
            prop_assert!(pose_dist(&(p * p.inverse()), &Pose::identity()) < 1e-10);
        }

        #[test]
        fn associativity(a in pose(), b in pose(), c in pose()) {
            prop_assert!(pose_dist(&((a * b) * c), &(a * (b * c))) < 1e-10);
        }

        #[test]
        fn right_jacobian_matches_finite_difference(xi in twist(2.5), d in vec3(1.0), e in vec3(1.0)) {
            let x = xi.to_vector();
            let mut delta = Vec6::zeros();
            delta.fixed_rows_mut::<3>(0).copy_from(&d);
            delta.fixed_rows_mut::<3>(3).copy_from(&e);
            let h = 1e-6;
            let plus = se3_exp(&Twist::from_vector(&(x + delta * h))).matrix();
            let minus = se3_exp(&Twist::from_vector(&(x - delta * h))).matrix();
            let numeric = (plus - minus) / (2.0 * h);
            let base = se3_exp(&xi).matrix();
            let analytic = base * hat(&(se3_right_jacobian(&xi) * delta));
            prop_assert!((numeric - analytic).amax() < 1e-6 * (1.0 + xi.translation.norm()));
            let analytic_l = hat(&(se3_left_jacobian(&xi) * delta)) * base;
            prop_assert!((numeric - analytic_l).amax() < 1e-6 * (1.0 + xi.translation.norm()));
        }

        #[test]
        fn jacobian_inverses(xi in twist(2.5)) {
            let i = Mat6::identity();
            prop_assert!((se3_right_jacobian(&xi) * se3_right_jacobian_inv(&xi) - i).amax() < 1e-9);
            prop_assert!((se3_left_jacobian(&xi) * se3_left_jacobian_inv(&xi) - i).amax() < 1e-9);
        }

        #[test]
        fn small_rotation_branch_is_continuous(t in vec3(5.0), w in vec3(1.0)) {
            // Either side of the series threshold of the coupling block.
            let dir = if w.norm() > 1e-3 { w.normalize() } else { Vec3::x() };
            let a = Twist::new(dir * 0.0499999, t);
            let b = Twist::new(dir * 0.0500001, t);
            prop_assert!((se3_left_jacobian(&a) - se3_left_jacobian(&b)).amax() < 1e-6);
        }
    }
}
