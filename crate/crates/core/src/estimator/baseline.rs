//! Dead reckoning from per-scan ego velocity and gyro attitude.

use nalgebra::UnitQuaternion;

use super::{ego_velocity_lsq, static_alignment, EstimatorConfig, EstimatorError};
use crate::eval::TrajectoryRecord;
use crate::geometry::{Pose, Quaternion, Vec3};
use crate::sensors::{ImuMeasurement, RadarScan};

/// Velocity from the latest successful ego-velocity fit of any radar,
/// attitude from integrated gyro rates, position from integrated velocity.
pub fn run_baseline(
    config: &EstimatorConfig,
    imu: &[ImuMeasurement],
    scans: &[RadarScan],
) -> Result<Vec<TrajectoryRecord>, EstimatorError> {
    config.validate()?;
    let mut imu: Vec<ImuMeasurement> = imu.to_vec();
    imu.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut scans: Vec<&RadarScan> = scans.iter().collect();
    scans.sort_by(|a, b| a.t.total_cmp(&b.t).then_with(|| a.sensor_id.cmp(&b.sensor_id)));

    let Some(first) = imu.first() else {
        return Ok(Vec::new());
    };
    let t_end = first.t + config.init_duration;
    let init: Vec<ImuMeasurement> = imu.iter().filter(|m| m.t <= t_end + 1e-9).copied().collect();
    let gravity = config.noise.gravity();
    let (rotation, bias) = static_alignment(&init, &gravity, config.init_duration, config.init_max_gyro)?;

    let mut q = *Quaternion::from_rotation(&rotation).inner();
    let mut p = Vec3::zeros();
    let mut v_v = Vec3::zeros();
    let mut omega = first.gyro - bias.gyro;
    let mut prev = *first;
    let mut next_scan = 0;
    let period = 1.0 / config.output_rate;
    let mut next_out = first.t;
    let mut out = Vec::new();

    for m in &imu[1..] {
        while next_scan < scans.len() && scans[next_scan].t <= m.t {
            let scan = scans[next_scan];
            next_scan += 1;
            let Some(ext) = config.extrinsics.iter().find(|e| e.sensor_id == scan.sensor_id) else {
                return Err(EstimatorError::UnknownSensor(scan.sensor_id.clone()));
            };
            if let Ok(fit) = ego_velocity_lsq(scan, config.noise.sigma_vr) {
                let r_vs = ext.pose.rotation.matrix();
                v_v = r_vs * fit.v_s - omega.cross(&ext.pose.translation);
            }
        }
        let dt = m.t - prev.t;
        if dt > 0.0 {
            let w = 0.5 * (prev.gyro + m.gyro) - bias.gyro;
            let q_next = q * UnitQuaternion::from_scaled_axis(w * dt);
            p += 0.5 * (q * v_v + q_next * v_v) * dt;
            q = q_next;
        }
        omega = m.gyro - bias.gyro;
        prev = *m;
        if m.t + 1e-9 >= next_out {
            let pose = Pose::new(Quaternion::from_inner(q).to_rotation(), p);
            out.push(TrajectoryRecord::new(m.t, pose, v_v));
            while next_out <= m.t + 1e-9 {
                next_out += period;
            }
        }
    }
    Ok(out)
}
