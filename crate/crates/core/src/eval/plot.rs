//! CSV series and static SVG line charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{EvalError, TrajectoryRecord};

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

struct Series<'a> {
    name: &'a str,
    records: &'a [TrajectoryRecord],
}

type Extract = fn(&TrajectoryRecord) -> f64;

struct Figure {
    file: &'static str,
    columns: [&'static str; 3],
    fields: [Extract; 3],
}

const FIGURES: [Figure; 3] = [
    Figure {
        file: "translation",
        columns: ["x", "y", "z"],
        fields: [|r| r.pose.translation.x, |r| r.pose.translation.y, |r| r.pose.translation.z],
    },
    Figure {
        file: "velocity",
        columns: ["vx", "vy", "vz"],
        fields: [|r| r.v_v.x, |r| r.v_v.y, |r| r.v_v.z],
    },
    Figure {
        file: "attitude",
        columns: ["roll_deg", "pitch_deg", "yaw_deg"],
        fields: [
            |r| r.attitude.x.to_degrees(),
            |r| r.attitude.y.to_degrees(),
            |r| r.attitude.z.to_degrees(),
        ],
    },
];

fn write(path: PathBuf, text: String) -> Result<PathBuf, EvalError> {
    std::fs::write(&path, text).map_err(|e| EvalError::io(&path, e))?;
    Ok(path)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let mut s = String::from("<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"");
    s.push_str(color);
    s.push_str("\" points=\"");
    for (x, y) in points {
        let _ = write!(s, "{x:.2},{y:.2} ");
    }
    s.push_str("\"/>\n");
    s
}

/// One axes box with labelled range and one polyline per series.
fn panel(
    svg: &mut String,
    top: f64,
    height: f64,
    label: &str,
    series: &[Vec<(f64, f64)>],
    equal_aspect: bool,
) {
    let (mut x0, mut x1) = bounds(series.iter().flatten().map(|p| p.0));
    let (mut y0, mut y1) = bounds(series.iter().flatten().map(|p| p.1));
    let w = WIDTH - 2.0 * MARGIN;
    let h = height - 2.0 * MARGIN;
    if equal_aspect {
        let scale = ((x1 - x0) / w).max((y1 - y0) / h);
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        x0 = cx - 0.5 * scale * w;
        x1 = cx + 0.5 * scale * w;
        y0 = cy - 0.5 * scale * h;
        y1 = cy + 0.5 * scale * h;
    }
    let map = |(x, y): (f64, f64)| {
        (
            MARGIN + (x - x0) / (x1 - x0) * w,
            top + MARGIN + (1.0 - (y - y0) / (y1 - y0)) * h,
        )
    };
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{:.1}\" width=\"{w:.1}\" height=\"{h:.1}\" fill=\"none\" stroke=\"#888\"/>",
        top + MARGIN
    );
    let _ = writeln!(
        svg,
        "<text x=\"{MARGIN}\" y=\"{:.1}\" font-size=\"13\">{label}</text>",
        top + MARGIN - 8.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{y1:.3}</text>",
        MARGIN - 4.0,
        top + MARGIN + 10.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{y0:.3}</text>",
        MARGIN - 4.0,
        top + MARGIN + h
    );
    let _ = writeln!(
        svg,
        "<text x=\"{MARGIN}\" y=\"{:.1}\" font-size=\"10\">{x0:.2}</text>",
        top + MARGIN + h + 14.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{x1:.2}</text>",
        MARGIN + w,
        top + MARGIN + h + 14.0
    );
    for (i, pts) in series.iter().enumerate() {
        let mapped: Vec<(f64, f64)> = pts.iter().map(|p| map(*p)).collect();
        svg.push_str(&polyline(&mapped, COLORS[i % COLORS.len()]));
    }
}

fn svg_document(height: f64, body: &str, legend: &[&str]) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    s.push_str(body);
    for (i, name) in legend.iter().enumerate() {
        let y = 16.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{y:.1}\" font-size=\"12\" fill=\"{}\" text-anchor=\"end\">{name}</text>",
            WIDTH - 10.0,
            COLORS[i % COLORS.len()]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `track_xy`, `translation`, `velocity`, and `attitude` as CSV and SVG.
pub fn write_plots(
    estimate: &[TrajectoryRecord],
    truth: Option<&[TrajectoryRecord]>,
    dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    let mut series = vec![Series {
        name: "estimate",
        records: estimate,
    }];
    if let Some(t) = truth {
        series.push(Series {
            name: "truth",
            records: t,
        });
    }
    let legend: Vec<&str> = series.iter().map(|s| s.name).collect();
    let mut written = Vec::new();

    let mut csv = String::from("source,t,x,y\n");
    for s in &series {
        for r in s.records {
            let p = r.pose.translation;
            let _ = writeln!(csv, "{},{:.9},{},{}", s.name, r.t, p.x, p.y);
        }
    }
    written.push(write(dir.join("track_xy.csv"), csv)?);
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.records.iter().map(|r| (r.pose.translation.x, r.pose.translation.y)).collect())
        .collect();
    let height = 2.0 * PANEL_HEIGHT + 2.0 * MARGIN;
    let mut body = String::new();
    panel(&mut body, 0.0, height, "x-y track [m]", &pts, true);
    written.push(write(dir.join("track_xy.svg"), svg_document(height, &body, &legend))?);

    for fig in &FIGURES {
        let mut csv = format!("source,t,{}\n", fig.columns.join(","));
        for s in &series {
            for r in s.records {
                let _ = write!(csv, "{},{:.9}", s.name, r.t);
                for f in &fig.fields {
                    let _ = write!(csv, ",{}", f(r));
                }
                csv.push('\n');
            }
        }
        written.push(write(dir.join(format!("{}.csv", fig.file)), csv)?);

        let mut body = String::new();
        for (k, (col, f)) in fig.columns.iter().zip(fig.fields.iter()).enumerate() {
            let pts: Vec<Vec<(f64, f64)>> = series
                .iter()
                .map(|s| s.records.iter().map(|r| (r.t, f(r))).collect())
                .collect();
            panel(&mut body, k as f64 * PANEL_HEIGHT, PANEL_HEIGHT, &format!("{col} vs t [s]"), &pts, false);
        }
        written.push(write(
            dir.join(format!("{}.svg", fig.file)),
            svg_document(3.0 * PANEL_HEIGHT, &body, &legend),
        )?);
    }
    Ok(written)
}
