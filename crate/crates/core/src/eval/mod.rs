//! Log and trajectory files, accuracy metrics, and plot output.

mod sensor_log;
mod metrics;
mod plot;
mod trajectory;

pub use sensor_log::{read_log, write_log, LogExtrinsics, LogHeader, SensorLog, LOG_VERSION};
pub use metrics::{kitti_errors, rmse, KittiErrors, LengthErrors, MetricsReport, RmseReport};
pub use plot::write_plots;
pub use trajectory::{read_trajectory, write_trajectory, TrajectoryRecord};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported log version {found}, expected {expected}")]
    Version { found: u64, expected: u64 },
    #[error("line {line}: unknown sensor_id `{sensor_id}`")]
    UnknownSensor { line: usize, sensor_id: String },
    #[error("{0}")]
    Validation(String),
    #[error("estimate and truth do not overlap in time")]
    NoOverlap,
    #[error("trajectory length {length:.3} m is shorter than the smallest segment length {min:.3} m")]
    InsufficientLength { length: f64, min: f64 },
}

impl EvalError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Shortest round-trip decimal form of a float.
pub(crate) fn fmt_f64(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "null".into())
}

pub(crate) fn fmt_array(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
    format!("[{}]", parts.join(","))
}

pub(crate) fn fmt_time(t: f64) -> String {
    format!("{t:.9}")
}
