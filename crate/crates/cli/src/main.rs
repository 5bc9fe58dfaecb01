use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctrio::estimator::{run, run_baseline, EstimatorConfig, EstimatorError};
use ctrio::eval::{
    read_log, read_trajectory, write_log, write_plots, write_trajectory, EvalError, MetricsReport, SensorLog,
};
use ctrio::simulator::{generate, ScenarioConfig, SimError};
use thiserror::Error;

const DEFAULT_LENGTHS: &str = "100,200,300,400,500,600,700,800";

#[derive(Parser)]
#[command(name = "ctrio", version, about = "Continuous-time radar-inertial odometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sensor log and its ground-truth trajectory.
    Simulate {
        /// Scenario JSON; defaults are used for missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario duration, seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Ground-truth sample rate, Hz.
        #[arg(long, default_value_t = 100.0)]
        truth_rate: f64,
    },
    /// Run the continuous-time estimator over a sensor log.
    Run {
        #[arg(long)]
        log: PathBuf,
        /// Estimator JSON; the log header noise model is used unless `noise` is given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-window solve statistics as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Dead-reckon from per-scan ego-velocity fits and gyro attitude.
    Baseline {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an estimated trajectory against ground truth.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Comma-separated segment lengths, meters.
        #[arg(long, default_value = DEFAULT_LENGTHS)]
        lengths: String,
        /// Report JSON; printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write CSV series and SVG charts for a trajectory.
    Plot {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Spline(_) | EstimatorError::Solver(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value, path: &Path) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_log(path: &Path) -> Result<SensorLog, CliError> {
    let log = read_log(path)?;
    if log.skipped > 0 {
        eprintln!("warning: skipped {} records of unknown type in {}", log.skipped, path.display());
    }
    Ok(log)
}

/// Estimator settings from an optional file, with the log header supplying
/// extrinsics and, unless overridden, the noise model.
fn estimator_config(config: Option<&Path>, log: &SensorLog) -> Result<EstimatorConfig, CliError> {
    let mut cfg = match config {
        Some(path) => {
            let value = read_json(path)?;
            let has_noise = value.get("noise").is_some();
            let mut cfg: EstimatorConfig = from_value(value, path)?;
            if !has_noise {
                cfg.noise = log.header.noise;
            }
            cfg
        }
        None => EstimatorConfig {
            noise: log.header.noise,
            ..EstimatorConfig::default()
        },
    };
    cfg.extrinsics = log.header.radar_extrinsics()?;
    Ok(cfg)
}

fn parse_lengths(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| CliError::Validation(format!("invalid segment length `{s}`")))
        })
        .collect()
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            config,
            out,
            truth,
            seed,
            duration,
            truth_rate,
        } => {
            let mut scenario: ScenarioConfig = match &config {
                Some(path) => from_value(read_json(path)?, path)?,
                None => ScenarioConfig::default(),
            };
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            if let Some(d) = duration {
                scenario.duration = d;
            }
            if !(truth_rate.is_finite() && truth_rate > 0.0) {
                return Err(CliError::Validation("truth rate must be positive".into()));
            }
            let sim = generate(&scenario)?;
            write_log(&sim.to_log(), &out)?;
            write_trajectory(&sim.truth.records(truth_rate), &truth)?;
            eprintln!(
                "simulated {:.1} s: {} IMU samples, {} radar scans",
                scenario.duration,
                sim.imu.len(),
                sim.scans.len()
            );
        }
        Command::Run {
            log,
            config,
            out,
            stats,
        } => {
            let sensor_log = load_log(&log)?;
            let cfg = estimator_config(config.as_deref(), &sensor_log)?;
            let (records, st) = run(cfg, &sensor_log.imu(), &sensor_log.scans())?;
            write_trajectory(&records, &out)?;
            eprintln!(
                "{} windows, mean solve {:.2} ms, mean iterations {:.2}, {} records",
                st.windows.len(),
                st.mean_solve_time_ms(),
                st.mean_iterations(),
                records.len()
            );
            if let Some(path) = stats {
                let doc = serde_json::json!({
                    "mean_solve_time_ms": st.mean_solve_time_ms(),
                    "mean_iterations": st.mean_iterations(),
                    "dropped_measurements": st.dropped_measurements,
                    "gated_scans": st.gated_scans,
                    "failed_ego_fits": st.failed_ego_fits,
                    "windows": st.windows,
                });
                write_json(&path, &doc)?;
            }
        }
        Command::Baseline { log, config, out } => {
            let sensor_log = load_log(&log)?;
            let cfg = estimator_config(config.as_deref(), &sensor_log)?;
            let records = run_baseline(&cfg, &sensor_log.imu(), &sensor_log.scans())?;
            write_trajectory(&records, &out)?;
            eprintln!("{} records", records.len());
        }
        Command::Evaluate {
            estimate,
            truth,
            lengths,
            report,
        } => {
            let lengths = parse_lengths(&lengths)?;
            let est = read_trajectory(&estimate)?;
            let gt = read_trajectory(&truth)?;
            let metrics = MetricsReport::compute(&est, &gt, &lengths)?;
            match report {
                Some(path) => write_json(&path, &metrics)?,
                None => println!(
                    "{}",
                    serde_json::to_string_pretty(&metrics).map_err(|e| CliError::Numerical(e.to_string()))?
                ),
            }
            let v = metrics.rmse.velocity;
            let a = metrics.rmse.attitude_deg;
            eprintln!(
                "velocity RMSE [{:.4}, {:.4}, {:.4}] m/s, attitude RMSE [{:.3}, {:.3}, {:.3}] deg, 2D {:.3}%, 3D {:.3}%, {:.5} deg/m",
                v[0],
                v[1],
                v[2],
                a[0],
                a[1],
                a[2],
                metrics.kitti.translation_2d_pct,
                metrics.kitti.translation_3d_pct,
                metrics.kitti.rotation_deg_per_m
            );
        }
        Command::Plot { estimate, truth, out } => {
            let est = read_trajectory(&estimate)?;
            let gt = truth.as_deref().map(read_trajectory).transpose()?;
            let files = write_plots(&est, gt.as_deref(), &out)?;
            eprintln!("wrote {} files to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
