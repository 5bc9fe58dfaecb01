#![allow(dead_code)]

use ctrio::estimator::{BufferedScan, EstimatorConfig, ImuBias, WindowState};
use ctrio::geometry::{se3_exp, Pose, Twist, Vec3, Vec6};
use ctrio::simulator::{generate, ScenarioConfig, Simulation, TrajectorySpec};
use ctrio::spline::{knot_time, ControlPose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCREW_OMEGA: [f64; 3] = [0.02, -0.05, 0.3];
pub const SCREW_VELOCITY: [f64; 3] = [9.0, 0.4, 0.2];

pub fn screw_scenario(duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        duration,
        trajectory: TrajectorySpec::ConstantTwist {
            omega: SCREW_OMEGA,
            velocity: SCREW_VELOCITY,
            initial_translation: [0.0; 3],
            initial_rpy: [0.0; 3],
        },
        ..ScenarioConfig::default()
    }
}

pub fn screw_twist() -> Twist {
    Twist::new(Vec3::from(SCREW_OMEGA), Vec3::from(SCREW_VELOCITY))
}

pub fn estimator_config(sim: &Simulation) -> EstimatorConfig {
    EstimatorConfig {
        extrinsics: sim.extrinsics.clone(),
        noise: sim.noise,
        ..EstimatorConfig::default()
    }
}

/// Window at `boundary` whose control poses sample `pose_at` at the knots,
/// loaded with the simulated measurements that fall inside it.
pub fn window_at(
    sim: &Simulation,
    config: &EstimatorConfig,
    boundary: i64,
    pose_at: impl Fn(f64) -> Pose,
    bias: ImuBias,
) -> WindowState {
    let dt = config.delta_t;
    let n = config.segments();
    let first = boundary - n - 1;
    let mut s = WindowState::new(config, first, Pose::identity(), bias).unwrap();
    let mut look = ControlPose::new(boundary + 1, dt, Pose::identity());
    look.gyro_bias = bias.gyro;
    look.accel_bias = bias.accel;
    s.trajectory.insert_control_pose(look).unwrap();
    s.boundary = boundary;
    for i in first..=boundary + 1 {
        s.trajectory.get_mut(i).unwrap().pose = pose_at(knot_time(i, dt));
    }
    let (t0, t1) = s.interval();
    s.imu = sim.imu.iter().copied().filter(|m| m.t >= t0 && m.t < t1).collect();
    s.scans = sim
        .scans
        .iter()
        .filter(|sc| sc.t >= t0 && sc.t < t1)
        .map(|sc| BufferedScan {
            scan: sc.clone(),
            sensor: sim.extrinsics.iter().position(|e| e.sensor_id == sc.sensor_id).unwrap(),
            gate_weight: 1.0,
        })
        .collect();
    s
}

pub fn screw_window(sim: &Simulation, config: &EstimatorConfig, boundary: i64) -> WindowState {
    let xi = screw_twist();
    window_at(sim, config, boundary, |t| se3_exp(&xi.scaled(t)), ImuBias::default())
}

pub fn random_twist(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Twist {
    let v = Vec6::from_fn(|_, _| rng.random_range(-1.0..1.0));
    Twist::new(v.fixed_rows::<3>(0) * rot, v.fixed_rows::<3>(3) * trans)
}

/// Window with randomized control poses and biases over the noisy default scenario.
pub fn random_window(seed: u64) -> (WindowState, EstimatorConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = generate(&ScenarioConfig {
        duration: 3.0,
        seed,
        ..screw_scenario(3.0)
    })
    .unwrap();
    let config = estimator_config(&sim);
    let xi = screw_twist();
    let base = se3_exp(&random_twist(&mut rng, 1.0, 5.0));
    let jitter: Vec<Twist> = (0..8).map(|_| random_twist(&mut rng, 0.05, 0.2)).collect();
    let dt = config.delta_t;
    let boundary = rng.random_range(5..12);
    let bias = ImuBias {
        gyro: Vec3::from_fn(|_, _| rng.random_range(-0.01..0.01)),
        accel: Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1)),
    };
    let first = boundary - config.segments() - 1;
    let mut s = window_at(
        &sim,
        &config,
        boundary,
        |t| {
            let k = ((t / dt).round() as i64 - first) as usize;
            base * se3_exp(&xi.scaled(t)) * se3_exp(&jitter[k])
        },
        bias,
    );
    let start = s.window_start_index();
    let end = s.boundary;
    s.trajectory.get_mut(end).unwrap().gyro_bias += Vec3::from_fn(|_, _| rng.random_range(-1e-4..1e-4));
    s.trajectory.get_mut(end).unwrap().accel_bias += Vec3::from_fn(|_, _| rng.random_range(-1e-3..1e-3));
    s.trajectory.get_mut(start).unwrap().accel_bias += Vec3::from_fn(|_, _| rng.random_range(-1e-3..1e-3));
    (s, config)
}
