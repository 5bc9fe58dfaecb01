use serde::Serialize;

use super::{EvalError, TrajectoryRecord};
use crate::geometry::{wrap_angle, Pose, Quaternion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmseReport {
    /// Body-frame velocity RMSE per axis, m/s.
    pub velocity: [f64; 3],
    /// Roll, pitch, yaw RMSE, degrees.
    pub attitude_deg: [f64; 3],
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthErrors {
    pub length: f64,
    pub segments: usize,
    pub translation_2d_pct: f64,
    pub translation_3d_pct: f64,
    pub rotation_deg_per_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KittiErrors {
    pub translation_2d_pct: f64,
    pub translation_3d_pct: f64,
    pub rotation_deg_per_m: f64,
    pub segments: usize,
    pub per_length: Vec<LengthErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rmse: RmseReport,
    pub kitti: KittiErrors,
}

/// Truth at time `t`: linear in position and velocity, slerp in rotation.
fn interpolate(truth: &[TrajectoryRecord], t: f64) -> Option<TrajectoryRecord> {
    let first = truth.first()?;
    let last = truth.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let k = truth.partition_point(|r| r.t <= t);
    if k == 0 {
        return Some(*first);
    }
    if k == truth.len() {
        return Some(*last);
    }
    let (a, b) = (&truth[k - 1], &truth[k]);
    if t == a.t || b.t <= a.t {
        return Some(*a);
    }
    let s = (t - a.t) / (b.t - a.t);
    let qa = *Quaternion::from_rotation(&a.pose.rotation).inner();
    let qb = *Quaternion::from_rotation(&b.pose.rotation).inner();
    let q = qa.try_slerp(&qb, s, 1e-12).unwrap_or(qa);
    let pose = Pose::new(
        Quaternion::from_inner(q).to_rotation(),
        a.pose.translation.lerp(&b.pose.translation, s),
    );
    Some(TrajectoryRecord::new(t, pose, a.v_v.lerp(&b.v_v, s)))
}

/// Estimate records paired with truth interpolated at their timestamps.
fn pair(
    estimate: &[TrajectoryRecord],
    truth: &[TrajectoryRecord],
) -> Result<Vec<(TrajectoryRecord, TrajectoryRecord)>, EvalError> {
    let pairs: Vec<_> = estimate
        .iter()
        .filter_map(|e| interpolate(truth, e.t).map(|g| (*e, g)))
        .collect();
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    Ok(pairs)
}

/// Root mean square scaled by the largest magnitude, so a constant error is reproduced exactly.
fn scaled_rms(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let scale = values.clone().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + (v / scale).powi(2), n + 1));
    scale * (sum / n as f64).sqrt()
}

pub fn rmse(estimate: &[TrajectoryRecord], truth: &[TrajectoryRecord]) -> Result<RmseReport, EvalError> {
    let pairs = pair(estimate, truth)?;
    let vel = |i: usize| scaled_rms(pairs.iter().map(move |(e, g)| e.v_v[i] - g.v_v[i]));
    let att = |i: usize| {
        scaled_rms(pairs.iter().map(move |(e, g)| wrap_angle(e.attitude[i] - g.attitude[i]))).to_degrees()
    };
    Ok(RmseReport {
        velocity: [vel(0), vel(1), vel(2)],
        attitude_deg: [att(0), att(1), att(2)],
        samples: pairs.len(),
    })
}

/// Segment errors over every start sample and each length.
pub fn kitti_errors(
    estimate: &[TrajectoryRecord],
    truth: &[TrajectoryRecord],
    lengths: &[f64],
) -> Result<KittiErrors, EvalError> {
    if lengths.is_empty() || lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(EvalError::Validation("segment lengths must be positive".into()));
    }
    let pairs = pair(estimate, truth)?;
    let mut dist = Vec::with_capacity(pairs.len());
    let mut acc = 0.0;
    for (i, (_, g)) in pairs.iter().enumerate() {
        if i > 0 {
            acc += (g.pose.translation - pairs[i - 1].1.pose.translation).norm();
        }
        dist.push(acc);
    }
    let min_len = lengths.iter().copied().fold(f64::INFINITY, f64::min);
    if acc < min_len {
        return Err(EvalError::InsufficientLength {
            length: acc,
            min: min_len,
        });
    }

    let mut per_length = Vec::new();
    let (mut t2, mut t3, mut rot, mut count) = (0.0, 0.0, 0.0, 0usize);
    for &len in lengths {
        let (mut s2, mut s3, mut sr, mut n) = (0.0, 0.0, 0.0, 0usize);
        for first in 0..pairs.len() {
            let target = dist[first] + len;
            let last = dist.partition_point(|d| *d < target);
            if last >= pairs.len() {
                break;
            }
            let (ef, gf) = (&pairs[first].0.pose, &pairs[first].1.pose);
            let (el, gl) = (&pairs[last].0.pose, &pairs[last].1.pose);
            let delta_est = ef.inverse() * *el;
            let delta_gt = gf.inverse() * *gl;
            let err = delta_est.inverse() * delta_gt;
            let tr = err.translation;
            s2 += (tr.x * tr.x + tr.y * tr.y).sqrt() / len;
            s3 += tr.norm() / len;
            sr += err.rotation.angle().to_degrees() / len;
            n += 1;
        }
        if n > 0 {
            per_length.push(LengthErrors {
                length: len,
                segments: n,
                translation_2d_pct: 100.0 * s2 / n as f64,
                translation_3d_pct: 100.0 * s3 / n as f64,
                rotation_deg_per_m: sr / n as f64,
            });
            t2 += s2;
            t3 += s3;
            rot += sr;
            count += n;
        }
    }
    if count == 0 {
        return Err(EvalError::InsufficientLength {
            length: acc,
            min: min_len,
        });
    }
    let n = count as f64;
    Ok(KittiErrors {
        translation_2d_pct: 100.0 * t2 / n,
        translation_3d_pct: 100.0 * t3 / n,
        rotation_deg_per_m: rot / n,
        segments: count,
        per_length,
    })
}

impl MetricsReport {
    pub fn compute(
        estimate: &[TrajectoryRecord],
        truth: &[TrajectoryRecord],
        lengths: &[f64],
    ) -> Result<Self, EvalError> {
        Ok(MetricsReport {
            rmse: rmse(estimate, truth)?,
            kitti: kitti_errors(estimate, truth, lengths)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rotation, Vec3};

    fn straight(n: usize, scale: f64) -> Vec<TrajectoryRecord> {
        (0..=n)
            .map(|i| {
                let pose = Pose::from_translation(Vec3::new(scale * i as f64, 0.0, 0.0));
                TrajectoryRecord::new(i as f64 * 0.1, pose, Vec3::new(10.0, 0.0, 0.0))
            })
            .collect()
    }

    fn curved() -> Vec<TrajectoryRecord> {
        (0..400)
            .map(|i| {
                let t = i as f64 * 0.05;
                let yaw = 0.1 * t;
                let pose = Pose::new(
                    Rotation::from_rpy(0.02 * t.sin(), 0.01 * t.cos(), yaw),
                    Vec3::new(20.0 * yaw.sin(), 20.0 * (1.0 - yaw.cos()), 0.3 * t),
                );
                TrajectoryRecord::new(t, pose, Vec3::new(2.0, 0.0, 0.3))
            })
            .collect()
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let truth = curved();
        let r = rmse(&truth, &truth).unwrap();
        assert_eq!(r.velocity, [0.0; 3]);
        assert_eq!(r.attitude_deg, [0.0; 3]);
        let k = kitti_errors(&truth, &truth, &[5.0, 10.0]).unwrap();
        assert!(k.translation_2d_pct < 1e-9);
        assert!(k.translation_3d_pct < 1e-9);
        assert!(k.rotation_deg_per_m < 1e-6);
    }

    #[test]
    fn scaled_straight_line_is_one_percent() {
        let truth = straight(100, 1.0);
        let est = straight(100, 1.01);
        let k = kitti_errors(&est, &truth, &[100.0]).unwrap();
        assert_eq!(k.segments, 1);
        assert!((k.translation_2d_pct - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_velocity_offset() {
        let truth = straight(50, 1.0);
        let mut est = truth.clone();
        for r in &mut est {
            r.v_v.x += 0.1;
        }
        let r = rmse(&est, &truth).unwrap();
        assert!((r.velocity[0] - 0.1).abs() < 1e-12);
        let mut still = truth.clone();
        for r in &mut still {
            r.v_v = Vec3::zeros();
        }
        let mut offset = still.clone();
        for r in &mut offset {
            r.v_v = Vec3::new(0.1, -0.2, 0.3);
        }
        assert_eq!(rmse(&offset, &still).unwrap().velocity, [0.1, 0.2, 0.3]);
        assert_eq!(r.velocity[1], 0.0);
    }

    #[test]
    fn disjoint_ranges() {
        let truth = straight(10, 1.0);
        let mut est = truth.clone();
        for r in &mut est {
            r.t += 100.0;
        }
        assert!(matches!(rmse(&est, &truth), Err(EvalError::NoOverlap)));
    }

    #[test]
    fn short_trajectory() {
        let truth = straight(10, 1.0);
        assert!(matches!(
            kitti_errors(&truth, &truth, &[100.0]),
            Err(EvalError::InsufficientLength { .. })
        ));
    }

    #[test]
    fn interpolation_is_linear() {
        let truth = straight(10, 1.0);
        let g = interpolate(&truth, 0.25).unwrap();
        assert!((g.pose.translation.x - 2.5).abs() < 1e-12);
    }
}
