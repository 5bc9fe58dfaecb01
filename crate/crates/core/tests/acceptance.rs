mod common;

use std::time::Instant;

use common::*;
use ctrio::estimator::{
    build_cost, ego_velocity_lsq, run, solve, EstimatorConfig, SolverConfig, WindowProblem,
};
use ctrio::eval::{kitti_errors, read_log, rmse, write_log, MetricsReport, SensorLog, TrajectoryRecord};
use ctrio::geometry::{se3_exp, se3_log, Mat4, Pose, Twist, Vec3};
use ctrio::sensors::{body_kinematics, imu_residuals, predict_radial_velocity, RadarScan, RadarTarget};
use ctrio::simulator::{default_radars, generate, RadarConfig, ScenarioConfig};
use ctrio::spline::{basis, Trajectory};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: &Mat4, b: &Mat4) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

fn spline_derivatives() -> Outcome {
    let start = Instant::now();
    let dt = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst1, mut worst2): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let mut pose = se3_exp(&random_twist(&mut rng, 2.0, 10.0));
        let mut poses = vec![pose];
        for _ in 0..3 {
            pose = pose * se3_exp(&random_twist(&mut rng, 0.6, 2.0));
            poses.push(pose);
        }
        let traj = Trajectory::from_poses(dt, 0, &poses);
        let t = dt * (1.0 + rng.random_range(0.05..0.95));
        let d = traj.evaluate_derivatives(t).unwrap();
        let at = |s: f64| traj.evaluate_pose(s).unwrap().matrix();
        let h = 1e-5;
        worst1 = worst1.max(rel_err(&d.d_pose, &((at(t + h) - at(t - h)) / (2.0 * h))));
        let h = 1e-4;
        worst2 = worst2.max(rel_err(&d.dd_pose, &((at(t + h) - 2.0 * at(t) + at(t - h)) / (h * h))));
    }
    let p = se3_exp(&Twist::new(Vec3::new(0.3, -0.2, 1.0), Vec3::new(4.0, 1.0, -2.0)));
    let still = Trajectory::from_poses(dt, 0, &[p; 4]);
    let mut worst0: f64 = 0.0;
    for k in 0..50 {
        let d = still.evaluate_derivatives(dt * (1.0 + k as f64 / 50.0)).unwrap();
        worst0 = worst0.max(d.d_pose.amax()).max(d.dd_pose.amax());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst1 < 1e-5 && worst2 < 1e-4 && worst0 < 1e-12 && secs < 5.0,
        format!("200 segments: d/dt {worst1:.1e}, d2/dt2 {worst2:.1e}, constant {worst0:.1e}, {secs:.2} s"),
    )
}

fn basis_values() -> Outcome {
    let b = basis(0.0, 1.0).b;
    let exact = b.as_slice() == [1.0, 5.0 / 6.0, 1.0 / 6.0, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut pose = Pose::identity();
        let mut poses = vec![pose];
        for _ in 0..7 {
            pose = pose * se3_exp(&random_twist(&mut rng, 0.6, 2.0));
            poses.push(pose);
        }
        let traj = Trajectory::from_poses(0.2, 0, &poses);
        for knot in 2..6 {
            let l = traj.evaluate_segment(knot - 1, 1.0).unwrap();
            let r = traj.evaluate_segment(knot, 0.0).unwrap();
            worst = worst
                .max((l.pose.matrix() - r.pose.matrix()).amax())
                .max((l.d_pose - r.d_pose).amax() / l.d_pose.amax().max(1.0))
                .max((l.dd_pose - r.dd_pose).amax() / l.dd_pose.amax().max(1.0));
        }
    }
    check(
        exact && worst < 1e-9,
        format!("basis(0) = {:?}, knot discontinuity {worst:.1e}", b.as_slice()),
    )
}

fn generative_model() -> Outcome {
    let g = Vec3::new(0.0, 0.0, 9.80665);
    let dt = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut ew, mut ev, mut ea): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..20 {
        let t0 = se3_exp(&random_twist(&mut rng, 2.0, 20.0));
        let xi = random_twist(&mut rng, 0.8, 15.0);
        let poses: Vec<Pose> = (0..12).map(|i| t0 * se3_exp(&xi.scaled(i as f64 * dt))).collect();
        let traj = Trajectory::from_poses(dt, 0, &poses);
        for k in 0..40 {
            let t = dt * (1.0 + 8.0 * k as f64 / 40.0);
            let kin = body_kinematics(&traj, t, &g).unwrap();
            let r = *(t0 * se3_exp(&xi.scaled(t))).rotation.matrix();
            let (w, rho) = (xi.rotation, xi.translation);
            ew = ew.max((kin.omega_v - w).norm());
            ev = ev.max((kin.v_v - rho).norm() / rho.norm());
            let a = w.cross(&rho) + r.transpose() * g;
            ea = ea.max((kin.a_v - a).norm() / a.norm());
        }
    }
    check(
        ew < 1e-9 && ev < 1e-6 && ea < 1e-6,
        format!("omega {ew:.1e}, v rel {ev:.1e}, a rel {ea:.1e}"),
    )
}

fn zero_residual_oracle() -> Outcome {
    let sim = generate(&ScenarioConfig::default().noiseless()).unwrap();
    let g = sim.noise.gravity();
    let mut worst: f64 = 0.0;
    for m in &sim.imu {
        let kin = sim.truth.state(m.t).kinematics(&g);
        let (eg, ea) = imu_residuals(m, &kin, &Vec3::zeros(), &Vec3::zeros());
        worst = worst.max(eg.amax()).max(ea.amax());
    }
    let mut targets = 0usize;
    for scan in &sim.scans {
        let kin = sim.truth.state(scan.t).kinematics(&g);
        let ext = sim.extrinsics.iter().find(|e| e.sensor_id == scan.sensor_id).unwrap();
        for tg in &scan.targets {
            worst = worst.max((tg.radial_velocity - predict_radial_velocity(&kin, ext, tg)).abs());
            targets += 1;
        }
    }
    // The spline reproduces a screw exactly, so the window cost at truth vanishes too.
    let screw = generate(&screw_scenario(4.0).noiseless()).unwrap();
    let config = estimator_config(&screw);
    let window = screw_window(&screw, &config, 10);
    let sys = build_cost(&window, &config).unwrap();
    let sigma = |label: &str| {
        if label.starts_with("radar") {
            config.noise.sigma_vr
        } else {
            config.noise.sigma_gyro.min(config.noise.sigma_accel)
        }
    };
    let spline_worst = sys
        .blocks
        .iter()
        .filter(|b| !b.label.starts_with("bias"))
        .map(|b| b.residual.amax() * sigma(&b.label))
        .fold(0.0, f64::max);
    check(
        worst < 1e-9 && spline_worst < 1e-9,
        format!(
            "{} IMU samples, {targets} targets: max {worst:.1e}; spline window max {spline_worst:.1e}",
            sim.imu.len()
        ),
    )
}

fn synthetic_scan(
    rng: &mut ChaCha8Rng,
    v_s: &Vec3,
    n: usize,
    max_el: f64,
    sigma: f64,
    outliers: f64,
) -> RadarScan {
    let noise = Normal::new(0.0, sigma).unwrap();
    let moving = Normal::new(5.0, 1.0).unwrap();
    let targets = (0..n)
        .map(|_| {
            let mut t = RadarTarget {
                range: rng.random_range(1.0..100.0),
                radial_velocity: 0.0,
                azimuth: rng.random_range(-60f64.to_radians()..60f64.to_radians()),
                elevation: rng.random_range(-max_el..max_el),
            };
            t.radial_velocity = -v_s.dot(&t.direction());
            if sigma > 0.0 {
                t.radial_velocity += noise.sample(rng);
            }
            if rng.random::<f64>() < outliers {
                t.radial_velocity += moving.sample(rng);
            }
            t
        })
        .collect();
    RadarScan {
        t: rng.random_range(0.0..100.0),
        sensor_id: "mc".into(),
        targets,
    }
}

fn random_velocity(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.random_range(2.0..15.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0))
}

/// Fraction of 500 noisy, outlier-laden scans with ego-velocity error below 0.05 m/s.
fn monte_carlo(max_el: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let good = (0..500)
        .filter(|_| {
            let v = random_velocity(&mut rng);
            let scan = synthetic_scan(&mut rng, &v, 255, max_el, 0.1, 0.3);
            ego_velocity_lsq(&scan, 0.1).is_ok_and(|f| (f.v_s - v).norm() < 0.05)
        })
        .count();
    good as f64 / 500.0
}

fn ego_velocity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut noiseless: f64 = 0.0;
    for _ in 0..50 {
        let v = random_velocity(&mut rng);
        let scan = synthetic_scan(&mut rng, &v, 64, 45f64.to_radians(), 0.0, 0.0);
        let fit = ego_velocity_lsq(&scan, 0.1).map_err(|e| e.to_string())?;
        noiseless = noiseless.max((fit.v_s - v).norm());
    }
    let wide = monte_carlo(45f64.to_radians(), 6);
    let narrow = monte_carlo(15f64.to_radians(), 6);
    check(
        noiseless < 1e-9 && wide >= 0.95,
        format!(
            "noiseless {noiseless:.1e}; 500 scans within 0.05 m/s: {:.1}% (+-45 deg elevation), {:.1}% (+-15 deg, info)",
            100.0 * wide,
            100.0 * narrow
        ),
    )
}

fn jacobian_audit() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (s, config) = random_window(100 + seed);
        let jac = build_cost(&s, &config).unwrap().weighted_jacobian();
        let n = s.num_variables();
        let h = 1e-6;
        for c in 0..n {
            let mut delta = DVector::zeros(n);
            delta[c] = h;
            let mut plus = s.clone();
            plus.retract(&delta);
            let mut minus = s.clone();
            minus.retract(&-delta);
            let rp = build_cost(&plus, &config).unwrap().weighted_residuals();
            let rm = build_cost(&minus, &config).unwrap().weighted_residuals();
            let fd = (rp - rm) / (2.0 * h);
            let col = jac.column(c);
            let scale = fd.amax().max(col.amax()).max(1e-6);
            worst = worst.max((fd - col).amax() / scale);
        }
    }
    check(worst < 1e-4, format!("20 windows x 42 columns: worst relative error {worst:.1e}"))
}

fn solver_contract() -> Outcome {
    let sim = generate(&screw_scenario(5.0).noiseless()).unwrap();
    let config = EstimatorConfig {
        solver: SolverConfig {
            max_iterations: 50,
            cost_tolerance: 1e-15,
            step_tolerance: 1e-13,
            ..SolverConfig::default()
        },
        ..estimator_config(&sim)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut monotone, mut rot, mut trans): (bool, f64, f64) = (true, 0.0, 0.0);
    for boundary in [6, 9, 12, 15, 18] {
        let truth = screw_window(&sim, &config, boundary);
        let mut s = truth.clone();
        for i in s.free_poses() {
            let cp = s.trajectory.get_mut(i).unwrap();
            cp.pose = cp.pose * se3_exp(&random_twist(&mut rng, 0.02, 0.1));
        }
        let report = solve(
            &mut WindowProblem {
                state: &mut s,
                config: &config,
            },
            &config.solver,
        )
        .map_err(|e| e.to_string())?;
        monotone &= report.cost_history.windows(2).all(|w| w[1] < w[0]);
        for i in truth.free_poses() {
            let a = truth.trajectory.get(i).unwrap().pose;
            let b = s.trajectory.get(i).unwrap().pose;
            rot = rot.max(se3_log(&(a.inverse() * b)).map_err(|e| e.to_string())?.rotation.norm());
            trans = trans.max((a.translation - b.translation).norm());
        }
    }
    check(
        monotone && rot < 1e-6 && trans < 1e-6,
        format!("5 windows: monotone {monotone}, rotation {rot:.1e} rad, translation {trans:.1e} m"),
    )
}

struct EndToEnd {
    seconds: f64,
    mean_solve_ms: f64,
    outcome: Outcome,
}

fn end_to_end() -> EndToEnd {
    let sim = generate(&ScenarioConfig::default()).unwrap();
    let truth = sim.truth.records(100.0);
    let start = Instant::now();
    let result = run(estimator_config(&sim), &sim.imu, &sim.scans);
    let seconds = start.elapsed().as_secs_f64();
    let (records, stats) = match result {
        Ok(r) => r,
        Err(e) => {
            return EndToEnd {
                seconds,
                mean_solve_ms: f64::NAN,
                outcome: Err(e.to_string()),
            }
        }
    };
    let lengths: Vec<f64> = (1..=8).map(|k| 10.0 * k as f64).collect();
    let outcome = match MetricsReport::compute(&records, &truth, &lengths) {
        Ok(m) => {
            let v = m.rmse.velocity;
            check(
                v[0] <= 0.15 && v[1] <= 0.15 && v[2] <= 0.35 && m.kitti.translation_2d_pct <= 2.0 && seconds < 120.0,
                format!(
                    "velocity RMSE [{:.4}, {:.4}, {:.4}] m/s, 2D error {:.3}%, runtime {seconds:.1} s",
                    v[0], v[1], v[2], m.kitti.translation_2d_pct
                ),
            )
        }
        Err(e) => Err(e.to_string()),
    };
    EndToEnd {
        seconds,
        mean_solve_ms: stats.mean_solve_time_ms(),
        outcome,
    }
}

fn variable_count() -> Outcome {
    let base = ScenarioConfig {
        duration: 4.0,
        ..ScenarioConfig::default()
    };
    let mut radars = default_radars();
    let doubled: Vec<RadarConfig> = radars
        .iter()
        .map(|r| RadarConfig {
            sensor_id: format!("{}_2", r.sensor_id),
            phase: r.phase + 0.00625,
            ..r.clone()
        })
        .collect();
    radars.extend(doubled);
    let counts = |cfg: &ScenarioConfig| -> Result<Vec<usize>, String> {
        let sim = generate(cfg).map_err(|e| e.to_string())?;
        let (_, stats) = run(estimator_config(&sim), &sim.imu, &sim.scans).map_err(|e| e.to_string())?;
        Ok(stats.windows.iter().map(|w| w.variables).collect())
    };
    let four = counts(&base)?;
    let eight = counts(&ScenarioConfig { radars, ..base })?;
    let same = !four.is_empty() && four.iter().chain(eight.iter()).all(|&v| v == four[0]);
    check(
        same,
        format!("4 radars: {} variables, 8 radars: {} variables", four[0], eight.first().copied().unwrap_or(0)),
    )
}

fn metrics() -> Outcome {
    let line = |scale: f64| -> Vec<TrajectoryRecord> {
        (0..=100)
            .map(|i| {
                TrajectoryRecord::new(
                    0.1 * i as f64,
                    Pose::from_translation(Vec3::new(scale * i as f64, 0.0, 0.0)),
                    Vec3::new(10.0, 0.0, 0.0),
                )
            })
            .collect()
    };
    let truth = line(1.0);
    let self_err = kitti_errors(&truth, &truth, &[10.0, 50.0, 100.0]).map_err(|e| e.to_string())?;
    let scaled = kitti_errors(&line(1.01), &truth, &[100.0]).map_err(|e| e.to_string())?;
    let mut still = truth.clone();
    for r in &mut still {
        r.v_v = Vec3::zeros();
    }
    let mut offset = still.clone();
    for r in &mut offset {
        r.v_v = Vec3::new(0.1, -0.2, 0.3);
    }
    let r = rmse(&offset, &still).map_err(|e| e.to_string())?;
    let zero = self_err.translation_2d_pct == 0.0 && self_err.rotation_deg_per_m == 0.0;
    let one = (scaled.translation_2d_pct - 1.0).abs() < 1e-9;
    let off = r.velocity == [0.1, 0.2, 0.3];
    check(
        zero && one && off,
        format!(
            "truth vs truth {:.1e}%, scaled line {:.12}%, offset RMSE {:?}",
            self_err.translation_2d_pct, scaled.translation_2d_pct, r.velocity
        ),
    )
}

fn determinism() -> Outcome {
    let cfg = ScenarioConfig {
        duration: 10.0,
        ..ScenarioConfig::default()
    };
    let a = generate(&cfg).map_err(|e| e.to_string())?.to_log();
    let b = generate(&cfg).map_err(|e| e.to_string())?.to_log();
    let (ta, tb) = (a.to_text(), b.to_text());
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("sim.jsonl");
    write_log(&a, &path).map_err(|e| e.to_string())?;
    let back: SensorLog = read_log(&path).map_err(|e| e.to_string())?;
    let bytes = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let lossless = back.records == a.records && back.to_text() == bytes && bytes == ta;
    check(
        ta == tb && lossless,
        format!("{} bytes identical across runs: {}, round trip lossless: {lossless}", ta.len(), ta == tb),
    )
}

fn main() {
    let e2e = end_to_end();
    let perf = check(
        e2e.mean_solve_ms < 200.0,
        format!("mean window solve {:.1} ms over the 60 s run ({:.1} s total)", e2e.mean_solve_ms, e2e.seconds),
    );
    let results: Vec<(&str, Outcome)> = vec![
        ("spline derivatives", spline_derivatives()),
        ("basis values and continuity", basis_values()),
        ("generative model", generative_model()),
        ("zero-residual oracle", zero_residual_oracle()),
        ("ego-velocity baseline", ego_velocity()),
        ("jacobian audit", jacobian_audit()),
        ("solver contract", solver_contract()),
        ("end-to-end odometry", e2e.outcome),
        ("variable-count invariance", variable_count()),
        ("solve-time performance", perf),
        ("metrics correctness", metrics()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
