use nalgebra::{DMatrix, DVector};

use super::solver::{LeastSquaresProblem, ResidualBlock, ResidualSystem, SolverError};
use super::{EstimatorConfig, EstimatorError, ImuBias};
use crate::geometry::{se3_exp, Mat3, Pose, Twist, Vec3, Vec6};
use crate::sensors::{bias_residuals, ImuMeasurement, RadarExtrinsics, RadarScan};
use crate::spline::{
    basis, knot_time, split_time, ControlPose, KinematicsJacobian, Segment, Trajectory,
};

/// A radar scan with the index of its extrinsics and its gating weight.
#[derive(Debug, Clone)]
pub struct BufferedScan {
    pub scan: RadarScan,
    pub sensor: usize,
    pub gate_weight: f64,
}

/// Sliding-window estimation state.
///
/// After processing boundary `k` the window covers `[t_{k−n}, t_k)` with
/// `n` segments. Control poses `k−n ..= k+1` are free, pose `k−n−1` is held
/// fixed, and biases are estimated at the two window ends.
#[derive(Debug, Clone)]
pub struct WindowState {
    pub trajectory: Trajectory,
    pub boundary: i64,
    pub segments: i64,
    pub gravity_w: Vec3,
    pub extrinsics: Vec<RadarExtrinsics>,
    pub imu: Vec<ImuMeasurement>,
    pub scans: Vec<BufferedScan>,
}

impl WindowState {
    /// Identical control poses `first_index ..= first_index + n + 1` with the
    /// boundary at `first_index + n`.
    pub fn new(
        config: &EstimatorConfig,
        first_index: i64,
        pose: Pose,
        bias: ImuBias,
    ) -> Result<Self, EstimatorError> {
        let dt = config.delta_t;
        let mut trajectory = Trajectory::new(dt);
        for i in 0..config.segments() + 2 {
            let mut cp = ControlPose::new(first_index + i, dt, pose);
            cp.gyro_bias = bias.gyro;
            cp.accel_bias = bias.accel;
            trajectory.insert_control_pose(cp)?;
        }
        Ok(WindowState {
            trajectory,
            boundary: first_index + config.segments(),
            segments: config.segments(),
            gravity_w: config.noise.gravity(),
            extrinsics: config.extrinsics.clone(),
            imu: Vec::new(),
            scans: Vec::new(),
        })
    }

    pub fn delta_t(&self) -> f64 {
        self.trajectory.delta_t()
    }

    pub fn window_start_index(&self) -> i64 {
        self.boundary - self.segments
    }

    /// `[t_start, t_end)` of the measurements used at the current boundary.
    pub fn interval(&self) -> (f64, f64) {
        let dt = self.delta_t();
        (
            knot_time(self.window_start_index(), dt),
            knot_time(self.boundary, dt),
        )
    }

    pub fn free_poses(&self) -> std::ops::RangeInclusive<i64> {
        self.window_start_index()..=self.boundary + 1
    }

    pub fn num_variables(&self) -> usize {
        6 * (self.segments as usize + 2) + 12
    }

    fn pose_offset(&self, index: i64) -> Option<usize> {
        let first = self.window_start_index();
        if index >= first && index <= self.boundary + 1 {
            Some(6 * (index - first) as usize)
        } else {
            None
        }
    }

    fn bias_offset(&self) -> usize {
        6 * (self.segments as usize + 2)
    }

    pub fn bias_start(&self) -> ImuBias {
        self.bias_of(self.window_start_index())
    }

    pub fn bias_end(&self) -> ImuBias {
        self.bias_of(self.boundary)
    }

    fn bias_of(&self, index: i64) -> ImuBias {
        self.trajectory
            .get(index)
            .map(|cp| ImuBias {
                gyro: cp.gyro_bias,
                accel: cp.accel_bias,
            })
            .unwrap_or_default()
    }

    /// Linear interpolation of the window-end biases.
    pub fn bias_at(&self, t: f64) -> ImuBias {
        let (t0, t1) = self.interval();
        let alpha = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let (s, e) = (self.bias_start(), self.bias_end());
        ImuBias {
            gyro: s.gyro.lerp(&e.gyro, alpha),
            accel: s.accel.lerp(&e.accel, alpha),
        }
    }

    /// Applies `T ← T·exp(δ)` to free poses and adds bias increments.
    pub fn retract(&mut self, delta: &DVector<f64>) {
        for index in self.free_poses() {
            let off = self.pose_offset(index).expect("free pose has an offset");
            let d = Vec6::from_iterator(delta.rows(off, 6).iter().copied());
            if let Some(cp) = self.trajectory.get_mut(index) {
                cp.pose = cp.pose * se3_exp(&Twist::from_vector(&d));
            }
        }
        let b = self.bias_offset();
        let v3 = |o: usize| Vec3::new(delta[o], delta[o + 1], delta[o + 2]);
        let start = self.window_start_index();
        let end = self.boundary;
        if let Some(cp) = self.trajectory.get_mut(start) {
            cp.gyro_bias += v3(b);
            cp.accel_bias += v3(b + 3);
        }
        if let Some(cp) = self.trajectory.get_mut(end) {
            cp.gyro_bias += v3(b + 6);
            cp.accel_bias += v3(b + 9);
        }
    }

    /// Writes interpolated biases onto interior knots and the lookahead pose.
    pub fn spread_biases(&mut self) {
        let dt = self.delta_t();
        for index in self.window_start_index() + 1..self.boundary {
            let b = self.bias_at(knot_time(index, dt));
            if let Some(cp) = self.trajectory.get_mut(index) {
                cp.gyro_bias = b.gyro;
                cp.accel_bias = b.accel;
            }
        }
        let end = self.bias_end();
        if let Some(cp) = self.trajectory.get_mut(self.boundary + 1) {
            cp.gyro_bias = end.gyro;
            cp.accel_bias = end.accel;
        }
    }

    fn segment_cache(&self) -> Result<Vec<Segment>, EstimatorError> {
        (self.window_start_index()..self.boundary)
            .map(|i| self.trajectory.segment(i).map_err(EstimatorError::from))
            .collect()
    }

    fn kinematics(&self, segments: &[Segment], t: f64) -> KinematicsJacobian {
        let dt = self.delta_t();
        let (i, u) = split_time(t, dt);
        let k = (i - self.window_start_index()).clamp(0, segments.len() as i64 - 1) as usize;
        let u = if i == segments[k].index { u } else if i < segments[k].index { 0.0 } else { 1.0 };
        segments[k].kinematics_jacobian(&basis(u, dt), &self.gravity_w)
    }

    /// Global columns for the four poses supporting a segment, skipping the fixed pose.
    fn pose_columns(&self, segment: i64) -> (Vec<usize>, Vec<usize>) {
        let mut cols = Vec::with_capacity(24);
        let mut which = Vec::with_capacity(4);
        for j in 0..4 {
            if let Some(off) = self.pose_offset(segment - 1 + j as i64) {
                cols.extend(off..off + 6);
                which.push(j);
            }
        }
        (cols, which)
    }
}

/// Assembles radar, IMU, and bias residual blocks over the current window.
pub fn build_cost(state: &WindowState, config: &EstimatorConfig) -> Result<ResidualSystem, EstimatorError> {
    let (t0, t1) = state.interval();
    let noise = &config.noise;
    let segments = state.segment_cache()?;
    let mut sys = ResidualSystem::new(state.num_variables());
    let in_window = |t: f64| t >= t0 && t < t1;

    let scans: Vec<&BufferedScan> = state
        .scans
        .iter()
        .filter(|s| in_window(s.scan.t) && !s.scan.targets.is_empty())
        .collect();
    let imu: Vec<&ImuMeasurement> = state.imu.iter().filter(|m| in_window(m.t)).collect();
    if scans.is_empty() && imu.is_empty() {
        return Err(EstimatorError::EmptyWindow { start: t0, end: t1 });
    }

    let k_scans = scans.len() as f64;
    for bs in &scans {
        let scan = &bs.scan;
        let ext = &state.extrinsics[bs.sensor];
        let kj = state.kinematics(&segments, scan.t);
        let (cols, which) = state.pose_columns(kj.segment);
        let r_vs = ext.pose.rotation.matrix();
        let lever = ext.pose.translation;
        let v_s = r_vs.transpose() * (kj.v_v + kj.omega_v.cross(&lever));
        let n = scan.targets.len();
        let mut residual = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, cols.len());
        for (row, target) in scan.targets.iter().enumerate() {
            let d = target.direction();
            let predicted = -v_s.dot(&d);
            residual[row] = (target.radial_velocity - predicted) / noise.sigma_vr;
            let d_v = r_vs * d;
            let c_v = d_v / noise.sigma_vr;
            let c_w = lever.cross(&d_v) / noise.sigma_vr;
            for (slot, &j) in which.iter().enumerate() {
                let block = &kj.d_pose[j];
                for c in 0..6 {
                    let mut acc = 0.0;
                    for r in 0..3 {
                        acc += c_v[r] * block[(r, c)] + c_w[r] * block[(3 + r, c)];
                    }
                    jac[(row, 6 * slot + c)] = acc;
                }
            }
        }
        sys.blocks.push(ResidualBlock {
            label: format!("radar {} t={:.6}", scan.sensor_id, scan.t),
            residual,
            jacobian: jac,
            columns: cols,
            weight: bs.gate_weight / (k_scans * n as f64),
            robust_scale: Some(noise.cauchy_scale),
        });
    }

    let m = imu.len() as f64;
    let boff = state.bias_offset();
    for meas in &imu {
        let kj = state.kinematics(&segments, meas.t);
        let (mut cols, which) = state.pose_columns(kj.segment);
        let npose = cols.len();
        cols.extend(boff..boff + 12);
        let alpha = ((meas.t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let bias = state.bias_at(meas.t);
        let mut residual = DVector::zeros(6);
        let eg = (meas.gyro - kj.omega_v - bias.gyro) / noise.sigma_gyro;
        let ea = (meas.accel - kj.a_v - bias.accel) / noise.sigma_accel;
        residual.rows_mut(0, 3).copy_from(&eg);
        residual.rows_mut(3, 3).copy_from(&ea);
        let mut jac = DMatrix::zeros(6, cols.len());
        for (slot, &j) in which.iter().enumerate() {
            let block = &kj.d_pose[j];
            for c in 0..6 {
                for r in 0..3 {
                    jac[(r, 6 * slot + c)] = -block[(3 + r, c)] / noise.sigma_gyro;
                    jac[(3 + r, 6 * slot + c)] = -block[(6 + r, c)] / noise.sigma_accel;
                }
            }
        }
        let id = Mat3::identity();
        let put = |jac: &mut DMatrix<f64>, row: usize, col: usize, m: Mat3| {
            jac.view_mut((row, npose + col), (3, 3)).copy_from(&m);
        };
        put(&mut jac, 0, 0, -id * (1.0 - alpha) / noise.sigma_gyro);
        put(&mut jac, 3, 3, -id * (1.0 - alpha) / noise.sigma_accel);
        put(&mut jac, 0, 6, -id * alpha / noise.sigma_gyro);
        put(&mut jac, 3, 9, -id * alpha / noise.sigma_accel);
        sys.blocks.push(ResidualBlock {
            label: format!("imu t={:.6}", meas.t),
            residual,
            jacobian: jac,
            columns: cols,
            weight: 1.0 / m,
            robust_scale: None,
        });
    }

    let start = state
        .trajectory
        .get(state.window_start_index())
        .ok_or(EstimatorError::Spline(crate::spline::SplineError::MissingControlPose(
            state.window_start_index(),
        )))?;
    let end = state
        .trajectory
        .get(state.boundary)
        .ok_or(EstimatorError::Spline(crate::spline::SplineError::MissingControlPose(
            state.boundary,
        )))?;
    let (eg, ea) = bias_residuals(start, end, noise);
    let mut residual = DVector::zeros(6);
    residual.rows_mut(0, 3).copy_from(&eg);
    residual.rows_mut(3, 3).copy_from(&ea);
    let mut jac = DMatrix::zeros(6, 12);
    for r in 0..3 {
        jac[(r, r)] = 1.0 / noise.sigma_bg;
        jac[(r, 6 + r)] = -1.0 / noise.sigma_bg;
        jac[(3 + r, 3 + r)] = 1.0 / noise.sigma_ba;
        jac[(3 + r, 9 + r)] = -1.0 / noise.sigma_ba;
    }
    sys.blocks.push(ResidualBlock {
        label: "bias random walk".into(),
        residual,
        jacobian: jac,
        columns: (boff..boff + 12).collect(),
        weight: 1.0,
        robust_scale: None,
    });

    // Continuity with the biases carried by the fixed pose before the window.
    if let Some(fixed) = state.trajectory.get(state.window_start_index() - 1) {
        let (eg, ea) = bias_residuals(fixed, start, noise);
        let mut residual = DVector::zeros(6);
        residual.rows_mut(0, 3).copy_from(&eg);
        residual.rows_mut(3, 3).copy_from(&ea);
        let mut jac = DMatrix::zeros(6, 6);
        for r in 0..3 {
            jac[(r, r)] = -1.0 / noise.sigma_bg;
            jac[(3 + r, 3 + r)] = -1.0 / noise.sigma_ba;
        }
        sys.blocks.push(ResidualBlock {
            label: "bias continuity".into(),
            residual,
            jacobian: jac,
            columns: (boff..boff + 6).collect(),
            weight: 1.0,
            robust_scale: None,
        });
    }
    Ok(sys)
}

/// The window state paired with its configuration as a solver problem.
pub struct WindowProblem<'a> {
    pub state: &'a mut WindowState,
    pub config: &'a EstimatorConfig,
}

impl LeastSquaresProblem for WindowProblem<'_> {
    type Snapshot = Trajectory;

    fn linearize(&self) -> Result<ResidualSystem, SolverError> {
        build_cost(self.state, self.config).map_err(|e| SolverError::Model(e.to_string()))
    }

    fn retract(&mut self, delta: &DVector<f64>) {
        self.state.retract(delta);
    }

    fn snapshot(&self) -> Trajectory {
        self.state.trajectory.clone()
    }

    fn restore(&mut self, snapshot: Trajectory) {
        self.state.trajectory = snapshot;
    }
}
