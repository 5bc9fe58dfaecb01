//! Synthetic ground truth and asynchronous radar and IMU streams.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::Measurement;
use crate::eval::{LogHeader, SensorLog, TrajectoryRecord};
use crate::geometry::{se3_exp, Pose, Rotation, Twist, Vec3};
use crate::sensors::{
    sensor_velocity, BodyKinematics, ImuMeasurement, NoiseModel, RadarExtrinsics, RadarScan, RadarTarget,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("time {t} outside [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
}

/// Stationary hold followed by a quintic smoothstep ramp to a constant
/// path-parameter rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Motion {
    /// Approximate cruise speed, m/s.
    pub speed: f64,
    pub stationary: f64,
    pub ramp: f64,
}

impl Default for Motion {
    fn default() -> Self {
        Motion {
            speed: 10.0,
            stationary: 1.0,
            ramp: 3.0,
        }
    }
}

impl Motion {
    /// `(s, ṡ, s̈)` for a cruise rate `rate`.
    fn warp(&self, t: f64, rate: f64) -> (f64, f64, f64) {
        let tau = (t - self.stationary) / self.ramp;
        if tau <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if tau < 1.0 {
            let t2 = tau * tau;
            let sigma = t2 * tau * (10.0 - 15.0 * tau + 6.0 * t2);
            let dsigma = 30.0 * t2 * (1.0 - 2.0 * tau + t2);
            let integral = self.ramp * t2 * t2 * (2.5 - 3.0 * tau + t2);
            (rate * integral, rate * sigma, rate * dsigma / self.ramp)
        } else {
            (rate * (0.5 * self.ramp + (t - self.stationary - self.ramp)), rate, 0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySpec {
    /// `T(t) = exp(t·ξ)·T₀` with `ξ = (omega, velocity)`.
    ConstantTwist {
        omega: [f64; 3],
        velocity: [f64; 3],
        #[serde(default)]
        initial_translation: [f64; 3],
        /// Initial roll, pitch, yaw, radians.
        #[serde(default)]
        initial_rpy: [f64; 3],
    },
    FigureEight {
        half_length: f64,
        half_width: f64,
        altitude: f64,
        #[serde(default)]
        motion: Motion,
    },
    /// Closed periodic quintic B-spline through the given control points.
    Waypoints {
        points: Vec<[f64; 3]>,
        #[serde(default)]
        motion: Motion,
    },
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec::FigureEight {
            half_length: 60.0,
            half_width: 20.0,
            altitude: 3.0,
            motion: Motion::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarConfig {
    pub sensor_id: String,
    pub translation: [f64; 3],
    /// Mounting roll, pitch, yaw, radians.
    pub rpy: [f64; 3],
    pub rate: f64,
    pub phase: f64,
    pub max_targets: usize,
    pub min_targets: usize,
}

impl Default for RadarConfig {
    fn default() -> Self {
        RadarConfig {
            sensor_id: "radar".into(),
            translation: [0.0; 3],
            rpy: [0.0; 3],
            rate: 20.0,
            phase: 0.0,
            max_targets: 255,
            min_targets: 128,
        }
    }
}

impl RadarConfig {
    pub fn extrinsics(&self) -> RadarExtrinsics {
        RadarExtrinsics {
            sensor_id: self.sensor_id.clone(),
            pose: Pose::new(
                Rotation::from_rpy(self.rpy[0], self.rpy[1], self.rpy[2]),
                Vec3::from(self.translation),
            ),
        }
    }
}

/// Four corner radars at 20 Hz with staggered phases.
pub fn default_radars() -> Vec<RadarConfig> {
    let corners = [
        ("front_left", [3.7, 0.9, 0.5], 45.0, 0.0),
        ("front_right", [3.7, -0.9, 0.5], -45.0, 0.0125),
        ("rear_left", [-0.9, 0.9, 0.5], 135.0, 0.025),
        ("rear_right", [-0.9, -0.9, 0.5], -135.0, 0.0375),
    ];
    corners
        .iter()
        .map(|&(id, tr, yaw, phase)| RadarConfig {
            sensor_id: id.into(),
            translation: tr,
            rpy: [0.0, 0.0, f64::to_radians(yaw)],
            phase,
            ..RadarConfig::default()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldOfView {
    pub azimuth: f64,
    pub elevation: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for FieldOfView {
    fn default() -> Self {
        FieldOfView {
            azimuth: 60f64.to_radians(),
            elevation: 15f64.to_radians(),
            min_range: 1.0,
            max_range: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub trajectory: TrajectorySpec,
    pub imu_rate: f64,
    pub radars: Vec<RadarConfig>,
    pub field_of_view: FieldOfView,
    pub noise: NoiseModel,
    /// White noise on IMU samples, Doppler, and target geometry.
    pub add_noise: bool,
    /// Per-sample random walk on the IMU biases.
    pub bias_random_walk: bool,
    pub initial_gyro_bias: [f64; 3],
    pub initial_accel_bias: [f64; 3],
    pub outlier_fraction: f64,
    pub outlier_velocity_bias: f64,
    pub range_sigma_fraction: f64,
    pub range_sigma_min: f64,
    pub azimuth_sigma: f64,
    pub elevation_sigma: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            duration: 60.0,
            trajectory: TrajectorySpec::default(),
            imu_rate: 200.0,
            radars: default_radars(),
            field_of_view: FieldOfView::default(),
            noise: NoiseModel::default(),
            add_noise: true,
            bias_random_walk: true,
            initial_gyro_bias: [2e-3, -1e-3, 1.5e-3],
            initial_accel_bias: [0.05, -0.03, 0.02],
            outlier_fraction: 0.3,
            outlier_velocity_bias: 5.0,
            range_sigma_fraction: 0.01,
            range_sigma_min: 0.5,
            azimuth_sigma: 1f64.to_radians(),
            elevation_sigma: 2f64.to_radians(),
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// No noise, biases, or outliers.
    pub fn noiseless(mut self) -> Self {
        self.add_noise = false;
        self.bias_random_walk = false;
        self.initial_gyro_bias = [0.0; 3];
        self.initial_accel_bias = [0.0; 3];
        self.outlier_fraction = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad("duration must be positive".into());
        }
        if !(self.imu_rate.is_finite() && self.imu_rate > 0.0) {
            return bad("imu_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must lie in [0, 1)".into());
        }
        if !self.noise.is_valid() {
            return bad("noise sigmas must be positive".into());
        }
        let fov = &self.field_of_view;
        if !(fov.azimuth > 0.0 && fov.azimuth <= PI && fov.elevation >= 0.0 && fov.elevation <= PI / 2.0) {
            return bad("field of view out of range".into());
        }
        if !(fov.min_range > 0.0 && fov.max_range >= fov.min_range) {
            return bad("range limits out of order".into());
        }
        let mut ids = std::collections::HashSet::new();
        for r in &self.radars {
            if !(r.rate.is_finite() && r.rate > 0.0) {
                return bad(format!("radar `{}` rate must be positive", r.sensor_id));
            }
            if r.min_targets > r.max_targets {
                return bad(format!("radar `{}` min_targets exceeds max_targets", r.sensor_id));
            }
            if !ids.insert(r.sensor_id.as_str()) {
                return bad(format!("duplicate radar id `{}`", r.sensor_id));
            }
        }
        match &self.trajectory {
            TrajectorySpec::FigureEight {
                half_length,
                half_width,
                motion,
                ..
            } => {
                if !(*half_length > 0.0 && *half_width > 0.0) {
                    return bad("figure-eight extents must be positive".into());
                }
                check_motion(motion)?;
            }
            TrajectorySpec::Waypoints { points, motion } => {
                if points.len() < 3 {
                    return bad("at least three waypoints are required".into());
                }
                check_motion(motion)?;
            }
            TrajectorySpec::ConstantTwist { .. } => {}
        }
        Ok(())
    }
}

fn check_motion(m: &Motion) -> Result<(), SimError> {
    if m.speed >= 0.0 && m.stationary >= 0.0 && m.ramp > 0.0 {
        Ok(())
    } else {
        Err(SimError::InvalidConfig("motion parameters out of range".into()))
    }
}

/// Position and its first two derivatives with respect to time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub pose: Pose,
    pub velocity_w: Vec3,
    pub accel_w: Vec3,
    /// Body-frame angular velocity.
    pub omega_v: Vec3,
}

impl TruthState {
    pub fn kinematics(&self, gravity_w: &Vec3) -> BodyKinematics {
        let rt = self.pose.rotation.matrix().transpose();
        BodyKinematics {
            v_v: rt * self.velocity_w,
            omega_v: self.omega_v,
            a_v: rt * (self.accel_w + gravity_w),
        }
    }
}

#[derive(Debug, Clone)]
enum Path {
    Twist { xi: Twist, t0: Pose },
    Curve { curve: Curve, motion: Motion, rate: f64, anchor: Pose },
}

#[derive(Debug, Clone)]
enum Curve {
    FigureEight { a: f64, b: f64, h: f64 },
    Periodic { points: Vec<Vec3> },
}

/// Cardinal B-spline of degree `k` on `[0, k+1)` and its first two derivatives.
fn cardinal(k: usize, x: f64) -> f64 {
    if k == 0 {
        return if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    (x * cardinal(k - 1, x) + (kf + 1.0 - x) * cardinal(k - 1, x - 1.0)) / kf
}

fn cardinal_d1(k: usize, x: f64) -> f64 {
    cardinal(k - 1, x) - cardinal(k - 1, x - 1.0)
}

fn cardinal_d2(k: usize, x: f64) -> f64 {
    cardinal(k - 2, x) - 2.0 * cardinal(k - 2, x - 1.0) + cardinal(k - 2, x - 2.0)
}

impl Curve {
    /// `(P, P', P'')` with respect to the path parameter.
    fn eval(&self, s: f64) -> (Vec3, Vec3, Vec3) {
        match self {
            Curve::FigureEight { a, b, h } => {
                let (ss, cs) = s.sin_cos();
                let (s2, c2) = (2.0 * s).sin_cos();
                (
                    Vec3::new(a * ss, b * s2, 0.5 * h * (1.0 - cs)),
                    Vec3::new(a * cs, 2.0 * b * c2, 0.5 * h * ss),
                    Vec3::new(-a * ss, -4.0 * b * s2, 0.5 * h * cs),
                )
            }
            Curve::Periodic { points } => {
                let n = points.len();
                let s = s.rem_euclid(n as f64);
                let k = s.floor() as i64;
                let mut p = Vec3::zeros();
                let mut d1 = Vec3::zeros();
                let mut d2 = Vec3::zeros();
                for j in k..k + 6 {
                    let x = s - j as f64 + 5.0;
                    let c = points[j.rem_euclid(n as i64) as usize];
                    p += c * cardinal(5, x);
                    d1 += c * cardinal_d1(5, x);
                    d2 += c * cardinal_d2(5, x);
                }
                (p, d1, d2)
            }
        }
    }

    /// Path-parameter rate that gives roughly `speed` m/s.
    fn rate_for(&self, speed: f64) -> f64 {
        let (period, n) = match self {
            Curve::FigureEight { .. } => (TAU, 720),
            Curve::Periodic { points } => (points.len() as f64, 120 * points.len()),
        };
        let mean: f64 = (0..n)
            .map(|i| self.eval(period * i as f64 / n as f64).1.norm())
            .sum::<f64>()
            / n as f64;
        if mean > 0.0 {
            speed / mean
        } else {
            0.0
        }
    }
}

/// Heading from the horizontal tangent and pitch from the climb angle; zero roll.
fn tangent_frame(d1: &Vec3, d2: &Vec3, sdot: f64) -> (f64, f64, Vec3) {
    let hh = d1.x * d1.x + d1.y * d1.y;
    let h = hh.sqrt();
    let yaw = d1.y.atan2(d1.x);
    let pitch = -d1.z.atan2(h);
    let yaw_rate = (d1.x * d2.y - d1.y * d2.x) / hh * sdot;
    let dh = (d1.x * d2.x + d1.y * d2.y) / h;
    let pitch_rate = -(h * d2.z - d1.z * dh) / (hh + d1.z * d1.z) * sdot;
    let omega = Vec3::new(-yaw_rate * pitch.sin(), pitch_rate, yaw_rate * pitch.cos());
    (yaw, pitch, omega)
}

/// Analytic ground-truth trajectory and the injected IMU biases.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    path: Path,
    pub duration: f64,
    /// `(t, gyro bias, accel bias)` at every IMU sample.
    pub biases: Vec<(f64, Vec3, Vec3)>,
}

impl GroundTruth {
    pub fn new(spec: &TrajectorySpec, duration: f64) -> Self {
        let path = match spec {
            TrajectorySpec::ConstantTwist {
                omega,
                velocity,
                initial_translation,
                initial_rpy,
            } => Path::Twist {
                xi: Twist::new(Vec3::from(*omega), Vec3::from(*velocity)),
                t0: Pose::new(
                    Rotation::from_rpy(initial_rpy[0], initial_rpy[1], initial_rpy[2]),
                    Vec3::from(*initial_translation),
                ),
            },
            TrajectorySpec::FigureEight {
                half_length,
                half_width,
                altitude,
                motion,
            } => Self::curve_path(
                Curve::FigureEight {
                    a: *half_length,
                    b: *half_width,
                    h: *altitude,
                },
                *motion,
            ),
            TrajectorySpec::Waypoints { points, motion } => Self::curve_path(
                Curve::Periodic {
                    points: points.iter().map(|p| Vec3::from(*p)).collect(),
                },
                *motion,
            ),
        };
        GroundTruth {
            path,
            duration,
            biases: Vec::new(),
        }
    }

    /// World frame anchored at the start position with zero initial yaw.
    fn curve_path(curve: Curve, motion: Motion) -> Path {
        let rate = curve.rate_for(motion.speed);
        let (p0, d1, d2) = curve.eval(0.0);
        let (yaw, _, _) = tangent_frame(&d1, &d2, 0.0);
        let anchor = Pose::new(Rotation::from_rpy(0.0, 0.0, yaw), p0).inverse();
        Path::Curve {
            curve,
            motion,
            rate,
            anchor,
        }
    }

    pub fn state(&self, t: f64) -> TruthState {
        match &self.path {
            Path::Twist { xi, t0 } => {
                let pose = se3_exp(&xi.scaled(t)) * *t0;
                let w = xi.rotation;
                let velocity_w = w.cross(&pose.translation) + xi.translation;
                TruthState {
                    pose,
                    velocity_w,
                    accel_w: w.cross(&velocity_w),
                    omega_v: pose.rotation.matrix().transpose() * w,
                }
            }
            Path::Curve {
                curve,
                motion,
                rate,
                anchor,
            } => {
                let (s, sdot, sddot) = motion.warp(t, *rate);
                let (p, d1, d2) = curve.eval(s);
                let (yaw, pitch, omega) = tangent_frame(&d1, &d2, sdot);
                let local = Pose::new(Rotation::from_rpy(0.0, pitch, yaw), p);
                let pose = *anchor * local;
                let ra = anchor.rotation.matrix();
                TruthState {
                    pose,
                    velocity_w: ra * (d1 * sdot),
                    accel_w: ra * (d2 * sdot * sdot + d1 * sddot),
                    omega_v: omega,
                }
            }
        }
    }

    /// Injected biases at `t` (last IMU sample at or before `t`).
    pub fn bias_at(&self, t: f64) -> (Vec3, Vec3) {
        let k = self.biases.partition_point(|b| b.0 <= t);
        match k {
            0 => self.biases.first().map(|b| (b.1, b.2)).unwrap_or_default(),
            _ => (self.biases[k - 1].1, self.biases[k - 1].2),
        }
    }

    /// Records sampled every `1/rate` seconds over the whole duration.
    pub fn records(&self, rate: f64) -> Vec<TrajectoryRecord> {
        let n = (self.duration * rate + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| {
                let t = quantize(k as f64 / rate);
                let s = self.state(t);
                let v_v = s.pose.rotation.matrix().transpose() * s.velocity_w;
                TrajectoryRecord::new(t, s.pose, v_v)
            })
            .collect()
    }
}

/// Pose, body velocity, and `[roll, pitch, yaw]` at `t`.
pub fn sample_ground_truth(gt: &GroundTruth, t: f64) -> Result<(Pose, Vec3, Vec3), SimError> {
    if !(0.0..=gt.duration).contains(&t) {
        return Err(SimError::OutOfRange {
            t,
            duration: gt.duration,
        });
    }
    let s = gt.state(t);
    let v_v = s.pose.rotation.matrix().transpose() * s.velocity_w;
    Ok((s.pose, v_v, s.pose.rotation.to_rpy()))
}

/// Rounds to whole nanoseconds.
fn quantize(t: f64) -> f64 {
    (t * 1e9).round() / 1e9
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub truth: GroundTruth,
    pub imu: Vec<ImuMeasurement>,
    pub scans: Vec<RadarScan>,
    /// Per scan, which targets carry a moving-object velocity offset.
    pub outlier_masks: Vec<Vec<bool>>,
    pub extrinsics: Vec<RadarExtrinsics>,
    pub noise: NoiseModel,
}

impl Simulation {
    /// All measurements merged by time; IMU first on ties, then radars in
    /// configuration order.
    pub fn measurements(&self) -> Vec<Measurement> {
        let mut out: Vec<Measurement> = self.imu.iter().copied().map(Measurement::Imu).collect();
        out.extend(self.scans.iter().cloned().map(Measurement::Radar));
        out.sort_by(|a, b| a.t().total_cmp(&b.t()));
        out
    }

    pub fn to_log(&self) -> SensorLog {
        SensorLog {
            header: LogHeader::new(&self.extrinsics, self.noise),
            records: self.measurements(),
            skipped: 0,
        }
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma.max(0.0)).expect("finite sigma")
}

fn noise3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    let d = normal(sigma);
    Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng))
}

pub fn generate(config: &ScenarioConfig) -> Result<Simulation, SimError> {
    config.validate()?;
    let mut truth = GroundTruth::new(&config.trajectory, config.duration);
    let gravity = config.noise.gravity();
    let noise = &config.noise;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut bg = Vec3::from(config.initial_gyro_bias);
    let mut ba = Vec3::from(config.initial_accel_bias);
    let n_imu = (config.duration * config.imu_rate + 1e-9).floor() as usize;
    let mut imu = Vec::with_capacity(n_imu + 1);
    for k in 0..=n_imu {
        let t = quantize(k as f64 / config.imu_rate);
        if k > 0 && config.bias_random_walk {
            bg += noise3(&mut rng, noise.sigma_bg);
            ba += noise3(&mut rng, noise.sigma_ba);
        }
        truth.biases.push((t, bg, ba));
        let kin = truth.state(t).kinematics(&gravity);
        let mut gyro = kin.omega_v + bg;
        let mut accel = kin.a_v + ba;
        if config.add_noise {
            gyro += noise3(&mut rng, noise.sigma_gyro);
            accel += noise3(&mut rng, noise.sigma_accel);
        }
        imu.push(ImuMeasurement { t, gyro, accel });
    }

    let fov = &config.field_of_view;
    let mut scans = Vec::new();
    let mut extrinsics = Vec::new();
    for (idx, radar) in config.radars.iter().enumerate() {
        let ext = radar.extrinsics();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(idx as u64 + 1);
        let period = 1.0 / radar.rate;
        let mut j = 0usize;
        loop {
            let t = quantize(radar.phase + j as f64 * period);
            j += 1;
            if t > config.duration {
                break;
            }
            if t < 0.0 {
                continue;
            }
            let kin = truth.state(t).kinematics(&gravity);
            let v_s = sensor_velocity(&kin.v_v, &kin.omega_v, &ext);
            let count = rng.random_range(radar.min_targets..=radar.max_targets);
            let mut targets = Vec::with_capacity(count);
            let mut mask = Vec::with_capacity(count);
            for _ in 0..count {
                let azimuth = rng.random_range(-fov.azimuth..=fov.azimuth);
                let elevation = rng.random_range(-fov.elevation..=fov.elevation);
                let range = rng.random_range(fov.min_range..=fov.max_range);
                let mut target = RadarTarget {
                    range,
                    radial_velocity: 0.0,
                    azimuth,
                    elevation,
                };
                target.radial_velocity = -v_s.dot(&target.direction());
                let outlier = config.outlier_fraction > 0.0 && rng.random::<f64>() < config.outlier_fraction;
                if outlier {
                    let b = config.outlier_velocity_bias;
                    let offset = Normal::new(b, 0.2 * b.abs()).expect("finite outlier bias");
                    target.radial_velocity += offset.sample(&mut rng);
                }
                if config.add_noise {
                    target.radial_velocity += normal(noise.sigma_vr).sample(&mut rng);
                    let sr = (config.range_sigma_fraction * range).max(config.range_sigma_min);
                    target.range = (range + normal(sr).sample(&mut rng)).max(fov.min_range * 0.5);
                    target.azimuth = (azimuth + normal(config.azimuth_sigma).sample(&mut rng)).clamp(-PI, PI);
                    target.elevation = (elevation + normal(config.elevation_sigma).sample(&mut rng))
                        .clamp(-PI / 2.0, PI / 2.0);
                }
                targets.push(target);
                mask.push(outlier);
            }
            scans.push((
                RadarScan {
                    t,
                    sensor_id: radar.sensor_id.clone(),
                    targets,
                },
                mask,
            ));
        }
        extrinsics.push(ext);
    }
    scans.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));
    let (scans, outlier_masks) = scans.into_iter().unzip();

    Ok(Simulation {
        truth,
        imu,
        scans,
        outlier_masks,
        extrinsics,
        noise: *noise,
    })
}
