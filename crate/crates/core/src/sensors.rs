//! Measurement models: body kinematics from the spline, radar radial
//! velocity, IMU and bias residuals, and the Cauchy robust loss.

use serde::{Deserialize, Serialize};

use crate::geometry::{vee, Pose, Vec3};
use crate::spline::{ControlPose, PoseWithDerivatives, SplineError, Trajectory};

pub const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuMeasurement {
    pub t: f64,
    pub gyro: Vec3,
    pub accel: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarTarget {
    pub range: f64,
    pub radial_velocity: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

impl RadarTarget {
    /// Unit line-of-sight vector in the sensor frame.
    pub fn direction(&self) -> Vec3 {
        let (sa, ca) = self.azimuth.sin_cos();
        let (se, ce) = self.elevation.sin_cos();
        Vec3::new(ca * ce, sa * ce, se)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarScan {
    pub t: f64,
    pub sensor_id: String,
    pub targets: Vec<RadarTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarExtrinsics {
    pub sensor_id: String,
    /// Sensor-to-vehicle transform `T_vs`.
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyKinematics {
    pub v_v: Vec3,
    pub omega_v: Vec3,
    pub a_v: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub sigma_vr: f64,
    pub sigma_gyro: f64,
    pub sigma_accel: f64,
    pub sigma_bg: f64,
    pub sigma_ba: f64,
    pub cauchy_scale: f64,
    pub gravity_w: [f64; 3],
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_vr: 0.1,
            sigma_gyro: 1e-3,
            sigma_accel: 1e-2,
            sigma_bg: 1e-5,
            sigma_ba: 1e-4,
            cauchy_scale: 3.0,
            gravity_w: [0.0, 0.0, STANDARD_GRAVITY],
        }
    }
}

impl NoiseModel {
    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity_w)
    }

    pub fn is_valid(&self) -> bool {
        [
            self.sigma_vr,
            self.sigma_gyro,
            self.sigma_accel,
            self.sigma_bg,
            self.sigma_ba,
            self.cauchy_scale,
        ]
        .iter()
        .all(|s| s.is_finite() && *s > 0.0)
            && self.gravity_w.iter().all(|g| g.is_finite())
    }
}

/// Kinematics from a pose and its first two time derivatives.
pub fn kinematics_from_derivatives(d: &PoseWithDerivatives, gravity_w: &Vec3) -> BodyKinematics {
    let rt = d.pose.rotation.matrix().transpose();
    let r_dot = d.d_pose.fixed_view::<3, 3>(0, 0);
    let t_dot = d.d_pose.fixed_view::<3, 1>(0, 3);
    let t_ddot = d.dd_pose.fixed_view::<3, 1>(0, 3);
    BodyKinematics {
        v_v: rt * t_dot,
        omega_v: vee(&(rt * r_dot)),
        a_v: rt * (t_ddot + gravity_w),
    }
}

pub fn body_kinematics(
    traj: &Trajectory,
    t: f64,
    gravity_w: &Vec3,
) -> Result<BodyKinematics, SplineError> {
    let d = traj.evaluate_derivatives(t)?;
    Ok(kinematics_from_derivatives(&d, gravity_w))
}

/// Velocity of the radar origin expressed in the sensor frame.
pub fn sensor_velocity(v_v: &Vec3, omega_v: &Vec3, ext: &RadarExtrinsics) -> Vec3 {
    let r_vs = ext.pose.rotation.matrix();
    r_vs.transpose() * (v_v + omega_v.cross(&ext.pose.translation))
}

pub fn predict_radial_velocity(
    kin: &BodyKinematics,
    ext: &RadarExtrinsics,
    target: &RadarTarget,
) -> f64 {
    -sensor_velocity(&kin.v_v, &kin.omega_v, ext).dot(&target.direction())
}

pub fn radial_velocity_residual(measured: f64, predicted: f64) -> f64 {
    measured - predicted
}

/// Gyroscope and accelerometer residuals `(e_ω, e_a)`.
pub fn imu_residuals(
    meas: &ImuMeasurement,
    kin: &BodyKinematics,
    gyro_bias: &Vec3,
    accel_bias: &Vec3,
) -> (Vec3, Vec3) {
    (
        meas.gyro - kin.omega_v - gyro_bias,
        meas.accel - kin.a_v - accel_bias,
    )
}

/// Normalized random-walk residuals between consecutive bias states.
pub fn bias_residuals(cp_i: &ControlPose, cp_i1: &ControlPose, model: &NoiseModel) -> (Vec3, Vec3) {
    (
        (cp_i.gyro_bias - cp_i1.gyro_bias) / model.sigma_bg,
        (cp_i.accel_bias - cp_i1.accel_bias) / model.sigma_ba,
    )
}

/// Cauchy loss of a squared normalized residual: `(ρ(s), ρ'(s))`.
pub fn cauchy(s: f64, scale: f64) -> (f64, f64) {
    let c2 = scale * scale;
    let q = s / c2;
    (c2 * q.ln_1p(), 1.0 / (1.0 + q))
}
