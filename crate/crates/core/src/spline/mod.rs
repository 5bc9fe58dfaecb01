//! Uniform cumulative cubic B-spline on SE(3).
//!
//! A query at `t ∈ [t_i, t_{i+1})` uses control poses `i-1 ..= i+2`:
//!
//! ```text
//! T(u) = T_{i-1} · exp(B̃₁(u)·Ω_i) · exp(B̃₂(u)·Ω_{i+1}) · exp(B̃₃(u)·Ω_{i+2}),
//! Ω_k  = log(T_{k-1}⁻¹ · T_k),
//! ```
//!
//! with knots at `t_i = i·Δt` and `u = (t − t_i)/Δt ∈ [0, 1)`.

mod segment;

pub use segment::{KinematicsJacobian, Segment};

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use crate::geometry::{GeometryError, Mat4, Pose, Vec3};

/// Cumulative basis matrix of the uniform cubic B-spline.
pub const BASIS_MATRIX: [[f64; 4]; 4] = [
    [6.0 / 6.0, 0.0, 0.0, 0.0],
    [5.0 / 6.0, 3.0 / 6.0, -3.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 3.0 / 6.0, 3.0 / 6.0, -2.0 / 6.0],
    [0.0, 0.0, 0.0, 1.0 / 6.0],
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplineError {
    #[error("time {t} is outside the queryable interval [{start}, {end})")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("trajectory needs at least 4 control poses, has {0}")]
    TooFewControlPoses(usize),
    #[error("control pose index {got} does not follow last index {last}")]
    NonConsecutive { last: i64, got: i64 },
    #[error("no control pose with index {0}")]
    MissingControlPose(i64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A knot of the spline together with the IMU bias states attached to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPose {
    pub index: i64,
    pub time: f64,
    pub pose: Pose,
    pub gyro_bias: Vec3,
    pub accel_bias: Vec3,
}

impl ControlPose {
    pub fn new(index: i64, delta_t: f64, pose: Pose) -> Self {
        ControlPose {
            index,
            time: knot_time(index, delta_t),
            pose,
            gyro_bias: Vec3::zeros(),
            accel_bias: Vec3::zeros(),
        }
    }
}

#[inline]
pub fn knot_time(index: i64, delta_t: f64) -> f64 {
    index as f64 * delta_t
}

/// Cumulative basis values and their time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisValues {
    pub b: Vector4<f64>,
    pub db: Vector4<f64>,
    pub ddb: Vector4<f64>,
}

/// Evaluates `B̃(u)`, `dB̃/dt`, `d²B̃/dt²`. Accepts the closed interval `[0, 1]`
/// so that knot values can be read from the segment on either side.
pub fn basis(u: f64, delta_t: f64) -> BasisValues {
    let c = Matrix4::from_fn(|r, k| BASIS_MATRIX[r][k]);
    let b = c * Vector4::new(1.0, u, u * u, u * u * u);
    let db = c * Vector4::new(0.0, 1.0, 2.0 * u, 3.0 * u * u) / delta_t;
    let ddb = c * Vector4::new(0.0, 0.0, 2.0, 6.0 * u) / (delta_t * delta_t);
    BasisValues { b, db, ddb }
}

/// Pose plus first and second time derivatives of its homogeneous matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseWithDerivatives {
    pub pose: Pose,
    pub d_pose: Mat4,
    pub dd_pose: Mat4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    delta_t: f64,
    control_poses: Vec<ControlPose>,
}

impl Trajectory {
    pub fn new(delta_t: f64) -> Self {
        assert!(delta_t > 0.0, "knot spacing must be positive");
        Trajectory {
            delta_t,
            control_poses: Vec::new(),
        }
    }

    /// Builds a trajectory from poses at consecutive indices starting at `first_index`.
    pub fn from_poses(delta_t: f64, first_index: i64, poses: &[Pose]) -> Self {
        let mut traj = Trajectory::new(delta_t);
        for (k, p) in poses.iter().enumerate() {
            traj.control_poses
                .push(ControlPose::new(first_index + k as i64, delta_t, *p));
        }
        traj
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn control_poses(&self) -> &[ControlPose] {
        &self.control_poses
    }

    pub fn len(&self) -> usize {
        self.control_poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control_poses.is_empty()
    }

    pub fn first_index(&self) -> Option<i64> {
        self.control_poses.first().map(|c| c.index)
    }

    pub fn last_index(&self) -> Option<i64> {
        self.control_poses.last().map(|c| c.index)
    }

    pub fn get(&self, index: i64) -> Option<&ControlPose> {
        let first = self.first_index()?;
        let k = usize::try_from(index - first).ok()?;
        self.control_poses.get(k)
    }

    pub fn get_mut(&mut self, index: i64) -> Option<&mut ControlPose> {
        let first = self.first_index()?;
        let k = usize::try_from(index - first).ok()?;
        self.control_poses.get_mut(k)
    }

    pub fn insert_control_pose(&mut self, cp: ControlPose) -> Result<(), SplineError> {
        if let Some(last) = self.last_index() {
            if cp.index != last + 1 {
                return Err(SplineError::NonConsecutive {
                    last,
                    got: cp.index,
                });
            }
        }
        let mut cp = cp;
        cp.time = knot_time(cp.index, self.delta_t);
        self.control_poses.push(cp);
        Ok(())
    }

    /// Drops control poses with index below `index`.
    pub fn drop_before(&mut self, index: i64) {
        if let Some(first) = self.first_index() {
            let n = usize::try_from(index - first).unwrap_or(0);
            self.control_poses.drain(..n.min(self.control_poses.len()));
        }
    }

    /// Queryable interval `[t_{first+1}, t_{last-1})`.
    pub fn domain(&self) -> Result<(f64, f64), SplineError> {
        if self.control_poses.len() < 4 {
            return Err(SplineError::TooFewControlPoses(self.control_poses.len()));
        }
        let first = self.first_index().unwrap_or_default();
        let last = self.last_index().unwrap_or_default();
        Ok((
            knot_time(first + 1, self.delta_t),
            knot_time(last - 1, self.delta_t),
        ))
    }

    /// Segment index `i` and normalized time `u ∈ [0, 1)`.
    pub fn locate(&self, t: f64) -> Result<(i64, f64), SplineError> {
        let (start, end) = self.domain()?;
        let out = || SplineError::OutOfRange { t, start, end };
        if !t.is_finite() {
            return Err(out());
        }
        let (i, u) = split_time(t, self.delta_t);
        let first = self.first_index().unwrap_or_default();
        let last = self.last_index().unwrap_or_default();
        if i - 1 < first || i + 2 > last {
            return Err(out());
        }
        Ok((i, u))
    }

    /// Indices of the control poses whose support overlaps `[t0, t1)`.
    pub fn window(&self, t0: f64, t1: f64) -> Result<Vec<i64>, SplineError> {
        let (i0, _) = split_time(t0, self.delta_t);
        let (mut i1, u1) = split_time(t1, self.delta_t);
        if u1 == 0.0 && t1 > t0 {
            i1 -= 1;
        }
        let i1 = i1.max(i0);
        let indices: Vec<i64> = (i0 - 1..=i1 + 2).collect();
        for &k in &indices {
            if self.get(k).is_none() {
                return Err(SplineError::MissingControlPose(k));
            }
        }
        Ok(indices)
    }

    /// The four control poses supporting segment `i` with their twists.
    pub fn segment(&self, i: i64) -> Result<Segment, SplineError> {
        let mut poses = [Pose::identity(); 4];
        for (k, p) in poses.iter_mut().enumerate() {
            let idx = i - 1 + k as i64;
            *p = self
                .get(idx)
                .ok_or(SplineError::MissingControlPose(idx))?
                .pose;
        }
        Segment::new(i, poses)
    }

    pub fn evaluate_pose(&self, t: f64) -> Result<Pose, SplineError> {
        let (i, u) = self.locate(t)?;
        Ok(self.segment(i)?.pose(&basis(u, self.delta_t)))
    }

    pub fn evaluate_derivatives(&self, t: f64) -> Result<PoseWithDerivatives, SplineError> {
        let (i, u) = self.locate(t)?;
        Ok(self.segment(i)?.derivatives(&basis(u, self.delta_t)))
    }

    /// Like [`Trajectory::evaluate_derivatives`] but addresses a segment
    /// explicitly and allows `u = 1`, the right end of the segment.
    pub fn evaluate_segment(&self, i: i64, u: f64) -> Result<PoseWithDerivatives, SplineError> {
        Ok(self.segment(i)?.derivatives(&basis(u, self.delta_t)))
    }
}

/// Splits `t` into `(floor(t/Δt), u)` with `u` forced into `[0, 1)`.
pub fn split_time(t: f64, delta_t: f64) -> (i64, f64) {
    let mut i = (t / delta_t).floor() as i64;
    if t >= knot_time(i + 1, delta_t) {
        i += 1;
    } else if t < knot_time(i, delta_t) {
        i -= 1;
    }
    let u = ((t - knot_time(i, delta_t)) / delta_t).clamp(0.0, 1.0 - f64::EPSILON);
    (i, u)
}
