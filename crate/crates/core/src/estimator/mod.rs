//! Sliding-window continuous-time estimator.

mod baseline;
mod ego;
mod propagation;
mod solver;
mod window;

pub use baseline::run_baseline;
pub use ego::{
    ego_velocity_lsq, ego_velocity_ransac, EgoVelocityError, EgoVelocityFit, RansacOptions,
    MAX_CONDITION_NUMBER,
};
pub use propagation::{integrate_imu, propagate_constant_velocity, static_alignment, NavState};
pub use solver::{
    solve, LeastSquaresProblem, ResidualBlock, ResidualSystem, SolveReport, SolverConfig,
    SolverError, Termination,
};
pub use window::{build_cost, BufferedScan, WindowProblem, WindowState};

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::TrajectoryRecord;
use crate::geometry::{Pose, Vec3};
use crate::sensors::{kinematics_from_derivatives, ImuMeasurement, NoiseModel, RadarExtrinsics, RadarScan};
use crate::spline::{knot_time, SplineError};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("initialization needs {need} s of IMU data, got {have} s")]
    InsufficientInitData { have: f64, need: f64 },
    #[error("vehicle moving during initialization at t={t}: gyro norm {gyro_norm} > {threshold} rad/s")]
    ExcessiveMotion { t: f64, gyro_norm: f64, threshold: f64 },
    #[error("time went backwards: {t} < {last}")]
    TimeRegression { t: f64, last: f64 },
    #[error("no measurements in window [{start}, {end})")]
    EmptyWindow { start: f64, end: f64 },
    #[error("unknown radar sensor `{0}`")]
    UnknownSensor(String),
    #[error("non-finite measurement at t={0}")]
    NonFiniteMeasurement(f64),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Gyroscope and accelerometer biases.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ImuBias {
    pub gyro: Vec3,
    pub accel: Vec3,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub delta_t: f64,
    pub window: f64,
    /// Rate of emitted trajectory records, Hz.
    pub output_rate: f64,
    pub init_duration: f64,
    pub init_max_gyro: f64,
    /// Scans whose RANSAC inlier fraction falls below this are down-weighted.
    pub gate_min_inlier_fraction: f64,
    pub gate_weight: f64,
    pub noise: NoiseModel,
    pub solver: SolverConfig,
    #[serde(skip)]
    pub extrinsics: Vec<RadarExtrinsics>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            delta_t: 0.2,
            window: 0.6,
            output_rate: 100.0,
            init_duration: 0.5,
            init_max_gyro: 0.1,
            gate_min_inlier_fraction: 0.2,
            gate_weight: 0.1,
            noise: NoiseModel::default(),
            solver: SolverConfig::default(),
            extrinsics: Vec::new(),
        }
    }
}

impl EstimatorConfig {
    /// Number of spline segments spanned by the window.
    pub fn segments(&self) -> i64 {
        (self.window / self.delta_t).round() as i64
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: &str| Err(EstimatorError::InvalidConfig(m.into()));
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return bad("delta_t must be positive");
        }
        let ratio = self.window / self.delta_t;
        if !ratio.is_finite() || (ratio - ratio.round()).abs() > 1e-9 {
            return bad("window must be an integer multiple of delta_t");
        }
        if self.segments() < 3 {
            return bad("window must span at least three segments");
        }
        if !(self.output_rate.is_finite() && self.output_rate > 0.0) {
            return bad("output_rate must be positive");
        }
        if !(self.init_duration > 0.0 && self.init_max_gyro > 0.0) {
            return bad("initialization parameters must be positive");
        }
        if !(0.0..=1.0).contains(&self.gate_min_inlier_fraction) || !(self.gate_weight > 0.0) {
            return bad("gating parameters out of range");
        }
        if !self.noise.is_valid() {
            return bad("noise sigmas must be positive");
        }
        if !self.solver.is_valid() {
            return bad("solver parameters must be positive");
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.extrinsics {
            if !seen.insert(e.sensor_id.as_str()) {
                return Err(EstimatorError::InvalidConfig(format!(
                    "duplicate sensor id `{}`",
                    e.sensor_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowStats {
    pub t: f64,
    pub solve_time_ms: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub variables: usize,
    pub residuals: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EstimatorStats {
    pub windows: Vec<WindowStats>,
    pub dropped_measurements: usize,
    pub gated_scans: usize,
    pub failed_ego_fits: usize,
}

impl EstimatorStats {
    pub fn mean_solve_time_ms(&self) -> f64 {
        if self.windows.is_empty() {
            return 0.0;
        }
        self.windows.iter().map(|w| w.solve_time_ms).sum::<f64>() / self.windows.len() as f64
    }

    pub fn mean_iterations(&self) -> f64 {
        if self.windows.is_empty() {
            return 0.0;
        }
        self.windows.iter().map(|w| w.iterations as f64).sum::<f64>() / self.windows.len() as f64
    }
}

/// One time-stamped input.
#[derive(Debug, Clone)]
pub enum Measurement {
    Imu(ImuMeasurement),
    Radar(RadarScan),
}

impl Measurement {
    pub fn t(&self) -> f64 {
        match self {
            Measurement::Imu(m) => m.t,
            Measurement::Radar(s) => s.t,
        }
    }
}

pub struct Estimator {
    config: EstimatorConfig,
    sensors: HashMap<String, usize>,
    state: Option<WindowState>,
    pending_imu: Vec<ImuMeasurement>,
    pending_scans: Vec<BufferedScan>,
    clock: f64,
    next_output_segment: i64,
    finished: bool,
    stats: EstimatorStats,
}

fn insert_sorted<T>(buf: &mut Vec<T>, item: T, key: impl Fn(&T) -> f64) {
    let t = key(&item);
    if buf.last().is_none_or(|last| key(last) <= t) {
        buf.push(item);
    } else {
        let pos = buf.partition_point(|x| key(x) <= t);
        buf.insert(pos, item);
    }
}

impl Estimator {
    pub fn new(config: EstimatorConfig) -> Result<Self, EstimatorError> {
        config.validate()?;
        let sensors = config
            .extrinsics
            .iter()
            .enumerate()
            .map(|(i, e)| (e.sensor_id.clone(), i))
            .collect();
        Ok(Estimator {
            config,
            sensors,
            state: None,
            pending_imu: Vec::new(),
            pending_scans: Vec::new(),
            clock: f64::NEG_INFINITY,
            next_output_segment: 0,
            finished: false,
            stats: EstimatorStats::default(),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn stats(&self) -> &EstimatorStats {
        &self.stats
    }

    pub fn state(&self) -> Option<&WindowState> {
        self.state.as_ref()
    }

    /// Earliest time a measurement can still influence a future window.
    fn acceptance_horizon(&self) -> f64 {
        match &self.state {
            Some(s) => knot_time(s.boundary + 1 - s.segments, s.delta_t()),
            None => f64::NEG_INFINITY,
        }
    }

    pub fn add_imu(&mut self, m: ImuMeasurement) -> Result<(), EstimatorError> {
        if !(m.t.is_finite() && m.gyro.iter().chain(m.accel.iter()).all(|v| v.is_finite())) {
            return Err(EstimatorError::NonFiniteMeasurement(m.t));
        }
        if m.t < self.acceptance_horizon() {
            log::warn!("dropping IMU sample at t={} older than the window", m.t);
            self.stats.dropped_measurements += 1;
            return Ok(());
        }
        let buf = match &mut self.state {
            Some(s) => &mut s.imu,
            None => &mut self.pending_imu,
        };
        insert_sorted(buf, m, |x| x.t);
        Ok(())
    }

    pub fn add_scan(&mut self, scan: RadarScan) -> Result<(), EstimatorError> {
        let sensor = *self
            .sensors
            .get(&scan.sensor_id)
            .ok_or_else(|| EstimatorError::UnknownSensor(scan.sensor_id.clone()))?;
        let finite = scan.t.is_finite()
            && scan.targets.iter().all(|t| {
                t.range.is_finite()
                    && t.radial_velocity.is_finite()
                    && t.azimuth.is_finite()
                    && t.elevation.is_finite()
            });
        if !finite {
            return Err(EstimatorError::NonFiniteMeasurement(scan.t));
        }
        if scan.t < self.acceptance_horizon() {
            log::warn!("dropping radar scan at t={} older than the window", scan.t);
            self.stats.dropped_measurements += 1;
            return Ok(());
        }
        let gate_weight = match ego_velocity_lsq(&scan, self.config.noise.sigma_vr) {
            Ok(fit) if fit.inlier_fraction() < self.config.gate_min_inlier_fraction => {
                self.stats.gated_scans += 1;
                self.config.gate_weight
            }
            Ok(_) => 1.0,
            Err(EgoVelocityError::TooFewInliers(_)) => {
                self.stats.gated_scans += 1;
                self.config.gate_weight
            }
            Err(_) => {
                self.stats.failed_ego_fits += 1;
                1.0
            }
        };
        let item = BufferedScan {
            scan,
            sensor,
            gate_weight,
        };
        let buf = match &mut self.state {
            Some(s) => &mut s.scans,
            None => &mut self.pending_scans,
        };
        // Equal timestamps are ordered by sensor id so arrival order does not matter.
        let pos = buf.partition_point(|x| {
            (x.scan.t, x.scan.sensor_id.as_str()) <= (item.scan.t, item.scan.sensor_id.as_str())
        });
        buf.insert(pos, item);
        Ok(())
    }

    pub fn add(&mut self, m: Measurement) -> Result<(), EstimatorError> {
        match m {
            Measurement::Imu(m) => self.add_imu(m),
            Measurement::Radar(s) => self.add_scan(s),
        }
    }

    /// Processes every knot boundary strictly before `t_now` and returns the
    /// records of segments that left the window. Measurements stamped exactly
    /// `t_now` may still arrive afterwards.
    pub fn step(&mut self, t_now: f64) -> Result<Vec<TrajectoryRecord>, EstimatorError> {
        if t_now < self.clock {
            return Err(EstimatorError::TimeRegression {
                t: t_now,
                last: self.clock,
            });
        }
        self.clock = t_now;
        let mut records = Vec::new();
        if self.state.is_none() && !self.try_initialize(t_now)? {
            return Ok(records);
        }
        loop {
            let state = self.state.as_ref().expect("initialized");
            let k = state.boundary + 1;
            if knot_time(k, state.delta_t()) >= t_now {
                break;
            }
            self.advance(k)?;
            let first = k - self.config.segments();
            self.emit(first, first + 1, &mut records)?;
            self.next_output_segment = first + 1;
            self.slide();
        }
        Ok(records)
    }

    /// Emits the segments still inside the final window.
    pub fn finish(&mut self) -> Result<Vec<TrajectoryRecord>, EstimatorError> {
        let mut records = Vec::new();
        if self.finished {
            return Ok(records);
        }
        self.finished = true;
        if let Some(state) = &self.state {
            if !self.stats.windows.is_empty() {
                let end = state.boundary;
                self.emit(self.next_output_segment, end, &mut records)?;
                self.next_output_segment = end;
            }
        }
        Ok(records)
    }

    fn try_initialize(&mut self, t_now: f64) -> Result<bool, EstimatorError> {
        let Some(first) = self.pending_imu.first() else {
            return Ok(false);
        };
        let dt = self.config.delta_t;
        let t_a = first.t;
        let n = self.config.segments();
        // The first window must not begin before the alignment interval is complete.
        let i0 = ((t_a / dt + 1e-9).floor() as i64)
            .max(((t_a + self.config.init_duration) / dt - 1e-9).ceil() as i64 - n - 1);
        if knot_time(i0 + n + 1, dt) >= t_now {
            return Ok(false);
        }
        let t_end = t_a + self.config.init_duration;
        let batch: Vec<ImuMeasurement> = self
            .pending_imu
            .iter()
            .filter(|m| m.t <= t_end + 1e-9)
            .copied()
            .collect();
        let gravity = self.config.noise.gravity();
        let (rotation, bias) = static_alignment(
            &batch,
            &gravity,
            self.config.init_duration,
            self.config.init_max_gyro,
        )?;
        let pose = Pose::new(rotation, Vec3::zeros());
        let mut state = WindowState::new(&self.config, i0, pose, bias)?;
        let start = knot_time(i0 + 1, dt);
        state.imu = std::mem::take(&mut self.pending_imu);
        state.scans = std::mem::take(&mut self.pending_scans);
        state.imu.retain(|m| m.t >= start);
        state.scans.retain(|s| s.scan.t >= start);
        self.next_output_segment = i0 + 1;
        self.state = Some(state);
        Ok(true)
    }

    /// Places pose `k` by IMU integration and the lookahead by extrapolation,
    /// then solves the window ending at `t_k`.
    fn advance(&mut self, k: i64) -> Result<(), EstimatorError> {
        let config = &self.config;
        let state = self.state.as_mut().expect("initialized");
        let dt = state.delta_t();
        let gravity = state.gravity_w;
        let t_prev = knot_time(k - 1, dt);
        let t_k = knot_time(k, dt);

        let prev = state.trajectory.evaluate_segment(k - 2, 1.0)?;
        let start = NavState {
            t: t_prev,
            pose: prev.pose,
            velocity: prev.d_pose.fixed_view::<3, 1>(0, 3).into_owned(),
        };
        let lo = state.imu.partition_point(|m| m.t < t_prev - dt);
        let hi = state.imu.partition_point(|m| m.t <= t_k + dt);
        let cp_prev = *state.trajectory.get(k - 1).ok_or(SplineError::MissingControlPose(k - 1))?;
        let bias = ImuBias {
            gyro: cp_prev.gyro_bias,
            accel: cp_prev.accel_bias,
        };
        let end = integrate_imu(&start, &state.imu[lo..hi], t_k, &bias, &gravity);
        let pose_k = cp_prev.pose * start.pose.inverse() * end.pose;
        {
            let cp = state
                .trajectory
                .get_mut(k)
                .ok_or(SplineError::MissingControlPose(k))?;
            cp.pose = pose_k;
            cp.gyro_bias = bias.gyro;
            cp.accel_bias = bias.accel;
        }
        let mut look = crate::spline::ControlPose::new(
            k + 1,
            dt,
            propagate_constant_velocity(&cp_prev.pose, &pose_k),
        );
        look.gyro_bias = bias.gyro;
        look.accel_bias = bias.accel;
        state.trajectory.insert_control_pose(look)?;
        state.boundary = k;

        let timer = Instant::now();
        let residuals = build_cost(state, config)?.num_residuals();
        let mut problem = WindowProblem {
            state: &mut *state,
            config,
        };
        let report = solve(&mut problem, &config.solver)?;
        state.spread_biases();
        self.stats.windows.push(WindowStats {
            t: t_k,
            solve_time_ms: timer.elapsed().as_secs_f64() * 1e3,
            iterations: report.iterations,
            accepted_steps: report.accepted_steps,
            initial_cost: report.initial_cost,
            final_cost: report.final_cost,
            variables: state.num_variables(),
            residuals,
        });
        Ok(())
    }

    /// Drops control poses and measurements that no future window uses.
    fn slide(&mut self) {
        let state = self.state.as_mut().expect("initialized");
        let keep_pose = state.boundary - state.segments;
        state.trajectory.drop_before(keep_pose);
        let horizon = knot_time(state.boundary + 1 - state.segments, state.delta_t());
        // IMU integration for the next pose reaches one knot interval back.
        let imu_horizon = horizon.min(knot_time(state.boundary - 1, state.delta_t()));
        state.imu.retain(|m| m.t >= imu_horizon);
        state.scans.retain(|s| s.scan.t >= horizon);
    }

    /// Samples segments `from..to` on the output grid.
    fn emit(&self, from: i64, to: i64, out: &mut Vec<TrajectoryRecord>) -> Result<(), EstimatorError> {
        let state = self.state.as_ref().expect("initialized");
        let dt = state.delta_t();
        let rate = self.config.output_rate;
        let (t_lo, t_hi) = (knot_time(from, dt), knot_time(to, dt));
        let mut n = (t_lo * rate - 1e-6).ceil() as i64;
        loop {
            let t = n as f64 / rate;
            if t >= t_hi - 1e-9 {
                break;
            }
            if t >= t_lo - 1e-9 {
                let t = t.max(t_lo);
                let d = state.trajectory.evaluate_derivatives(t)?;
                let kin = kinematics_from_derivatives(&d, &state.gravity_w);
                out.push(TrajectoryRecord::new(t, d.pose, kin.v_v));
            }
            n += 1;
        }
        Ok(())
    }
}

/// Runs the estimator over complete measurement streams.
pub fn run(
    config: EstimatorConfig,
    imu: &[ImuMeasurement],
    scans: &[RadarScan],
) -> Result<(Vec<TrajectoryRecord>, EstimatorStats), EstimatorError> {
    let mut stream: Vec<Measurement> = imu
        .iter()
        .copied()
        .map(Measurement::Imu)
        .chain(scans.iter().cloned().map(Measurement::Radar))
        .collect();
    stream.sort_by(|a, b| a.t().total_cmp(&b.t()));
    let mut est = Estimator::new(config)?;
    let mut records = Vec::new();
    for m in stream {
        let t = m.t();
        est.add(m)?;
        records.extend(est.step(t)?);
    }
    records.extend(est.finish()?);
    Ok((records, est.stats))
}
