use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::{fmt_array, fmt_time, EvalError};
use crate::geometry::{Pose, Quaternion, Vec3};

/// One sample of an estimated or true trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub pose: Pose,
    /// Body-frame velocity.
    pub v_v: Vec3,
    /// `[roll, pitch, yaw]` of the pose rotation, radians.
    pub attitude: Vec3,
}

impl TrajectoryRecord {
    pub fn new(t: f64, pose: Pose, v_v: Vec3) -> Self {
        TrajectoryRecord {
            t,
            pose,
            v_v,
            attitude: pose.rotation.to_rpy(),
        }
    }

    pub fn to_line(&self) -> String {
        let q = Quaternion::from_rotation(&self.pose.rotation).to_xyzw();
        let tr = self.pose.translation;
        format!(
            "{{\"t\":{},\"translation\":{},\"quaternion\":{},\"v_v\":{}}}",
            fmt_time(self.t),
            fmt_array(&[tr.x, tr.y, tr.z]),
            fmt_array(&q),
            fmt_array(&[self.v_v.x, self.v_v.y, self.v_v.z]),
        )
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    t: f64,
    translation: [f64; 3],
    quaternion: [f64; 4],
    v_v: [f64; 3],
}

pub fn write_trajectory(records: &[TrajectoryRecord], path: &Path) -> Result<(), EvalError> {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}", r.to_line());
    }
    std::fs::write(path, out).map_err(|e| EvalError::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    parse_trajectory(&text)
}

pub(crate) fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryRecord>, EvalError> {
    let mut out: Vec<TrajectoryRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| EvalError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let q = Quaternion::from_xyzw(raw.quaternion).ok_or_else(|| EvalError::Parse {
            line: line_no,
            message: "quaternion has zero norm".into(),
        })?;
        let all = std::iter::once(raw.t)
            .chain(raw.translation)
            .chain(raw.quaternion)
            .chain(raw.v_v);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(EvalError::Parse {
                line: line_no,
                message: "non-finite value".into(),
            });
        }
        if let Some(prev) = out.last() {
            if raw.t < prev.t {
                return Err(EvalError::Validation(format!(
                    "line {line_no}: time {} precedes {}",
                    raw.t, prev.t
                )));
            }
        }
        let pose = Pose::new(q.to_rotation(), Vec3::from(raw.translation));
        out.push(TrajectoryRecord::new(raw.t, pose, Vec3::from(raw.v_v)));
    }
    Ok(out)
}
