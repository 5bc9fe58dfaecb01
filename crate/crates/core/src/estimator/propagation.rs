use nalgebra::UnitQuaternion;

use super::{EstimatorError, ImuBias};
use crate::geometry::{Pose, Quaternion, Rotation, Vec3};
use crate::sensors::ImuMeasurement;

/// Pose and world-frame velocity at a time instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub t: f64,
    pub pose: Pose,
    pub velocity: Vec3,
}

/// Roll and pitch from the mean specific force, zero yaw, and biases from
/// the stationary residual.
pub fn static_alignment(
    imu: &[ImuMeasurement],
    gravity_w: &Vec3,
    min_duration: f64,
    max_gyro_norm: f64,
) -> Result<(Rotation, ImuBias), EstimatorError> {
    let span = match (imu.first(), imu.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => 0.0,
    };
    if span + 1e-9 < min_duration {
        return Err(EstimatorError::InsufficientInitData {
            have: span,
            need: min_duration,
        });
    }
    let n = imu.len() as f64;
    let mut gyro = Vec3::zeros();
    let mut accel = Vec3::zeros();
    for m in imu {
        let norm = m.gyro.norm();
        if norm > max_gyro_norm {
            return Err(EstimatorError::ExcessiveMotion {
                t: m.t,
                gyro_norm: norm,
                threshold: max_gyro_norm,
            });
        }
        gyro += m.gyro;
        accel += m.accel;
    }
    gyro /= n;
    accel /= n;
    let roll = accel.y.atan2(accel.z);
    let pitch = (-accel.x).atan2((accel.y * accel.y + accel.z * accel.z).sqrt());
    let rotation = Rotation::from_rpy(roll, pitch, 0.0);
    let bias = ImuBias {
        gyro,
        accel: accel - rotation.matrix().transpose() * gravity_w,
    };
    Ok((rotation, bias))
}

fn sample_at(imu: &[ImuMeasurement], t: f64) -> (Vec3, Vec3) {
    let k = imu.partition_point(|m| m.t <= t);
    if k == 0 {
        return (imu[0].gyro, imu[0].accel);
    }
    if k == imu.len() {
        let m = &imu[k - 1];
        return (m.gyro, m.accel);
    }
    let (a, b) = (&imu[k - 1], &imu[k]);
    let s = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
    (a.gyro.lerp(&b.gyro, s), a.accel.lerp(&b.accel, s))
}

/// Strapdown integration from `start.t` to `t1`.
///
/// Measurements are linearly interpolated at the interval ends. Attitude uses
/// the midpoint rate through the quaternion exponential; position assumes the
/// world acceleration varies linearly across each sample interval.
pub fn integrate_imu(
    start: &NavState,
    imu: &[ImuMeasurement],
    t1: f64,
    bias: &ImuBias,
    gravity_w: &Vec3,
) -> NavState {
    if imu.is_empty() || t1 <= start.t {
        let dt = (t1 - start.t).max(0.0);
        return NavState {
            t: t1,
            pose: Pose::new(start.pose.rotation, start.pose.translation + start.velocity * dt),
            velocity: start.velocity,
        };
    }
    let mut knots = Vec::with_capacity(imu.len() + 2);
    let (g0, a0) = sample_at(imu, start.t);
    knots.push((start.t, g0, a0));
    for m in imu.iter().filter(|m| m.t > start.t && m.t < t1) {
        knots.push((m.t, m.gyro, m.accel));
    }
    let (g1, a1) = sample_at(imu, t1);
    knots.push((t1, g1, a1));

    let mut q = *Quaternion::from_rotation(&start.pose.rotation).inner();
    let mut p = start.pose.translation;
    let mut v = start.velocity;
    for w in knots.windows(2) {
        let (ta, ga, aa) = w[0];
        let (tb, gb, ab) = w[1];
        let dt = tb - ta;
        if dt <= 0.0 {
            continue;
        }
        let omega = 0.5 * (ga + gb) - bias.gyro;
        let q_next = q * UnitQuaternion::from_scaled_axis(omega * dt);
        let acc_a = q * (aa - bias.accel) - gravity_w;
        let acc_b = q_next * (ab - bias.accel) - gravity_w;
        p += v * dt + (acc_a / 3.0 + acc_b / 6.0) * dt * dt;
        v += 0.5 * (acc_a + acc_b) * dt;
        q = q_next;
    }
    NavState {
        t: t1,
        pose: Pose::new(Quaternion::from_inner(q).to_rotation(), p),
        velocity: v,
    }
}

/// `T_{i+2} = T_{i+1} · T_i⁻¹ · T_{i+1}`.
pub fn propagate_constant_velocity(t_i: &Pose, t_i1: &Pose) -> Pose {
    *t_i1 * t_i.inverse() * *t_i1
}
