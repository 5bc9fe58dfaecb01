use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use super::{fmt_array, fmt_f64, fmt_time, EvalError};
use crate::estimator::Measurement;
use crate::geometry::{Pose, Quaternion, Vec3};
use crate::sensors::{ImuMeasurement, NoiseModel, RadarExtrinsics, RadarScan, RadarTarget};

pub const LOG_VERSION: u64 = 1;

/// Extrinsics as stored in the log header. The quaternion is kept exactly as
/// written so that rewriting a log reproduces it bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogExtrinsics {
    pub sensor_id: String,
    pub translation: [f64; 3],
    /// `[qx, qy, qz, qw]`, Hamilton convention.
    pub quaternion: [f64; 4],
}

impl LogExtrinsics {
    pub fn from_extrinsics(e: &RadarExtrinsics) -> Self {
        let t = e.pose.translation;
        LogExtrinsics {
            sensor_id: e.sensor_id.clone(),
            translation: [t.x, t.y, t.z],
            quaternion: Quaternion::from_rotation(&e.pose.rotation).to_xyzw(),
        }
    }

    pub fn to_extrinsics(&self) -> Result<RadarExtrinsics, EvalError> {
        let q = Quaternion::from_xyzw(self.quaternion).ok_or_else(|| {
            EvalError::Validation(format!("sensor `{}` has a zero quaternion", self.sensor_id))
        })?;
        Ok(RadarExtrinsics {
            sensor_id: self.sensor_id.clone(),
            pose: Pose::new(q.to_rotation(), Vec3::from(self.translation)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogHeader {
    pub version: u64,
    pub extrinsics: Vec<LogExtrinsics>,
    pub noise: NoiseModel,
}

impl LogHeader {
    pub fn new(extrinsics: &[RadarExtrinsics], noise: NoiseModel) -> Self {
        LogHeader {
            version: LOG_VERSION,
            extrinsics: extrinsics.iter().map(LogExtrinsics::from_extrinsics).collect(),
            noise,
        }
    }

    pub fn radar_extrinsics(&self) -> Result<Vec<RadarExtrinsics>, EvalError> {
        self.extrinsics.iter().map(|e| e.to_extrinsics()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorLog {
    pub header: LogHeader,
    pub records: Vec<Measurement>,
    /// Records of unrecognized type skipped while reading.
    pub skipped: usize,
}

impl PartialEq for Measurement {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Measurement::Imu(a), Measurement::Imu(b)) => a == b,
            (Measurement::Radar(a), Measurement::Radar(b)) => a == b,
            _ => false,
        }
    }
}

impl SensorLog {
    pub fn imu(&self) -> Vec<ImuMeasurement> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Measurement::Imu(m) => Some(*m),
                _ => None,
            })
            .collect()
    }

    pub fn scans(&self) -> Vec<RadarScan> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Measurement::Radar(s) => Some(s.clone()),
                _ => None,
            })
            .collect()
    }

    /// Canonical text form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let ext: Vec<String> = self
            .header
            .extrinsics
            .iter()
            .map(|e| {
                format!(
                    "{{\"sensor_id\":{},\"translation\":{},\"quaternion\":{}}}",
                    Value::String(e.sensor_id.clone()),
                    fmt_array(&e.translation),
                    fmt_array(&e.quaternion)
                )
            })
            .collect();
        let noise = serde_json::to_string(&self.header.noise).unwrap_or_default();
        let _ = writeln!(
            out,
            "{{\"type\":\"header\",\"version\":{},\"extrinsics\":[{}],\"noise\":{}}}",
            self.header.version,
            ext.join(","),
            noise
        );
        for r in &self.records {
            match r {
                Measurement::Imu(m) => {
                    let _ = writeln!(
                        out,
                        "{{\"type\":\"imu\",\"t\":{},\"gyro\":{},\"accel\":{}}}",
                        fmt_time(m.t),
                        fmt_array(m.gyro.as_slice()),
                        fmt_array(m.accel.as_slice())
                    );
                }
                Measurement::Radar(s) => {
                    let targets: Vec<String> = s
                        .targets
                        .iter()
                        .map(|t| {
                            format!(
                                "[{},{},{},{}]",
                                fmt_f64(t.range),
                                fmt_f64(t.radial_velocity),
                                fmt_f64(t.azimuth),
                                fmt_f64(t.elevation)
                            )
                        })
                        .collect();
                    let _ = writeln!(
                        out,
                        "{{\"type\":\"radar\",\"t\":{},\"sensor_id\":{},\"targets\":[{}]}}",
                        fmt_time(s.t),
                        Value::String(s.sensor_id.clone()),
                        targets.join(",")
                    );
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<SensorLog, EvalError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let Some((line_no, first)) = lines.next() else {
            return Err(EvalError::Parse {
                line: 1,
                message: "missing header".into(),
            });
        };
        let header = parse_header(line_no, first)?;
        let known: HashSet<&str> = header.extrinsics.iter().map(|e| e.sensor_id.as_str()).collect();
        let mut records = Vec::new();
        let mut skipped = 0;
        let mut last_t = f64::NEG_INFINITY;
        for (line_no, line) in lines {
            let v = parse_json(line_no, line)?;
            let kind = get_str(line_no, &v, "type")?;
            let record = match kind {
                "imu" => Measurement::Imu(ImuMeasurement {
                    t: get_f64(line_no, &v, "t")?,
                    gyro: Vec3::from(get_array::<3>(line_no, &v, "gyro")?),
                    accel: Vec3::from(get_array::<3>(line_no, &v, "accel")?),
                }),
                "radar" => {
                    let sensor_id = get_str(line_no, &v, "sensor_id")?.to_string();
                    if !known.contains(sensor_id.as_str()) {
                        return Err(EvalError::UnknownSensor {
                            line: line_no,
                            sensor_id,
                        });
                    }
                    let raw = v
                        .get("targets")
                        .and_then(Value::as_array)
                        .ok_or_else(|| field_error(line_no, "targets"))?;
                    let mut targets = Vec::with_capacity(raw.len());
                    for item in raw {
                        let a = float_array::<4>(item).ok_or_else(|| field_error(line_no, "targets"))?;
                        targets.push(RadarTarget {
                            range: a[0],
                            radial_velocity: a[1],
                            azimuth: a[2],
                            elevation: a[3],
                        });
                    }
                    Measurement::Radar(RadarScan {
                        t: get_f64(line_no, &v, "t")?,
                        sensor_id,
                        targets,
                    })
                }
                "header" => {
                    return Err(EvalError::Parse {
                        line: line_no,
                        message: "duplicate header".into(),
                    })
                }
                other => {
                    log::warn!("line {line_no}: skipping record of unknown type `{other}`");
                    skipped += 1;
                    continue;
                }
            };
            let t = record.t();
            if t < last_t {
                return Err(EvalError::Validation(format!(
                    "line {line_no}: timestamp {t} precedes {last_t}"
                )));
            }
            last_t = t;
            records.push(record);
        }
        Ok(SensorLog {
            header,
            records,
            skipped,
        })
    }
}

fn parse_json(line: usize, text: &str) -> Result<Value, EvalError> {
    serde_json::from_str(text).map_err(|e| EvalError::Parse {
        line,
        message: e.to_string(),
    })
}

fn field_error(line: usize, field: &str) -> EvalError {
    EvalError::Parse {
        line,
        message: format!("missing or malformed field `{field}`"),
    }
}

fn get_str<'a>(line: usize, v: &'a Value, key: &str) -> Result<&'a str, EvalError> {
    v.get(key).and_then(Value::as_str).ok_or_else(|| field_error(line, key))
}

fn get_f64(line: usize, v: &Value, key: &str) -> Result<f64, EvalError> {
    v.get(key)
        .and_then(Value::as_f64)
        .filter(|x| x.is_finite())
        .ok_or_else(|| field_error(line, key))
}

fn float_array<const N: usize>(v: &Value) -> Option<[f64; N]> {
    let a = v.as_array()?;
    if a.len() != N {
        return None;
    }
    let mut out = [0.0; N];
    for (o, x) in out.iter_mut().zip(a) {
        *o = x.as_f64().filter(|x| x.is_finite())?;
    }
    Some(out)
}

fn get_array<const N: usize>(line: usize, v: &Value, key: &str) -> Result<[f64; N], EvalError> {
    v.get(key).and_then(float_array::<N>).ok_or_else(|| field_error(line, key))
}

fn parse_header(line: usize, text: &str) -> Result<LogHeader, EvalError> {
    let v = parse_json(line, text)?;
    if get_str(line, &v, "type")? != "header" {
        return Err(EvalError::Parse {
            line,
            message: "first record must be the header".into(),
        });
    }
    let version = v
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| field_error(line, "version"))?;
    if version != LOG_VERSION {
        return Err(EvalError::Version {
            found: version,
            expected: LOG_VERSION,
        });
    }
    let mut extrinsics = Vec::new();
    let raw = v
        .get("extrinsics")
        .and_then(Value::as_array)
        .ok_or_else(|| field_error(line, "extrinsics"))?;
    let mut seen = HashSet::new();
    for e in raw {
        let sensor_id = get_str(line, e, "sensor_id")?.to_string();
        if !seen.insert(sensor_id.clone()) {
            return Err(EvalError::Validation(format!("duplicate sensor_id `{sensor_id}`")));
        }
        let ext = LogExtrinsics {
            sensor_id,
            translation: get_array::<3>(line, e, "translation")?,
            quaternion: get_array::<4>(line, e, "quaternion")?,
        };
        ext.to_extrinsics()?;
        extrinsics.push(ext);
    }
    let noise = match v.get("noise") {
        Some(n) => serde_json::from_value(n.clone()).map_err(|e| EvalError::Parse {
            line,
            message: format!("noise: {e}"),
        })?,
        None => NoiseModel::default(),
    };
    Ok(LogHeader {
        version,
        extrinsics,
        noise,
    })
}

pub fn read_log(path: &Path) -> Result<SensorLog, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    SensorLog::from_text(&text)
}

pub fn write_log(log: &SensorLog, path: &Path) -> Result<(), EvalError> {
    std::fs::write(path, log.to_text()).map_err(|e| EvalError::io(path, e))
}
