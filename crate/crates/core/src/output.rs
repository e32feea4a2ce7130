//! Run artefacts: per-tick CSV, JSON summary, SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::contact::support_polygon;
use crate::model::ContactWrench;
use crate::sim::{RunLog, TickRecord};

pub const CSV_SCHEMA_VERSION: u32 = 1;

const WRENCH_AXES: [&str; 6] = ["fx", "fy", "fz", "tx", "ty", "tz"];

pub fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = [
        "t", "com_x", "com_y", "com_z", "vx", "vy", "vz", "hx", "hy", "hz",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["cmd", "real"] {
        for foot in ["fl", "fr"] {
            for axis in WRENCH_AXES {
                cols.push(format!("{prefix}_{foot}_{axis}"));
            }
        }
    }
    cols.extend(
        ["k_impact", "trigger", "solve_ms", "solve_iters", "solve_status", "phase", "r_contact"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols
}

fn push_wrench(row: &mut Vec<String>, w: &ContactWrench) {
    row.extend(w.to_vector().iter().map(|v| format!("{v:.9e}")));
}

pub fn csv_row(t: &TickRecord) -> String {
    let mut row: Vec<String> = vec![format!("{:.6}", t.time)];
    row.extend(t.state.to_vector().iter().map(|v| format!("{v:.9e}")));
    push_wrench(&mut row, &t.commanded.left);
    push_wrench(&mut row, &t.commanded.right);
    push_wrench(&mut row, &t.realized.left);
    push_wrench(&mut row, &t.realized.right);
    row.push(t.k_impact.to_string());
    row.push(u8::from(t.trigger).to_string());
    row.push(format!("{:.4}", t.solve_ms));
    row.push(t.solve_iterations.to_string());
    row.push(serde_json::to_value(t.solve_status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
    row.push(t.phase.as_str().to_string());
    row.push(u8::from(t.right_contact).to_string());
    row.join(",")
}

pub fn csv_string(ticks: &[TickRecord]) -> String {
    let mut out = csv_header().join(",");
    out.push('\n');
    for t in ticks {
        out.push_str(&csv_row(t));
        out.push('\n');
    }
    out
}

/// Writes `run.csv`, `summary.json` and the enabled plots into `dir`.
pub fn write_run(log: &RunLog, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let out = &log.config.output;
    if out.csv {
        let path = dir.join("run.csv");
        fs::write(&path, csv_string(&log.ticks))?;
        written.push(path);
    }
    let summary = serde_json::json!({
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "summary": log.summary,
    });
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?)?;
    written.push(path);

    written.extend(emit_plots(log, dir)?);
    Ok(written)
}

/// Writes the SVG plots enabled in the output config.
pub fn emit_plots(log: &RunLog, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let out = &log.config.output;
    let mut written = Vec::new();
    let plots: [(bool, &str, fn(&RunLog) -> String); 4] = [
        (out.plots.com_xy, "com_xy.svg", plot_com_xy),
        (out.plots.com_z, "com_z.svg", plot_com_z),
        (out.plots.forces_z, "forces_z.svg", plot_forces_z),
        (out.plots.trigger_timeline, "trigger_timeline.svg", plot_trigger_timeline),
    ];
    for (enabled, name, render) in plots {
        if enabled {
            let path = dir.join(name);
            fs::write(&path, render(log))?;
            written.push(path);
        }
    }
    Ok(written)
}

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in series.iter().flat_map(|s| s.points.iter()) {
        b.0 = b.0.min(*x);
        b.1 = b.1.max(*x);
        b.2 = b.2.min(*y);
        b.3 = b.3.max(*y);
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(1e-9);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (x0, x1) = pad(b.0, b.1);
    let (y0, y1) = pad(b.2, b.3);
    (x0, x1, y0, y1)
}

fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(fx), HEIGHT - MARGIN + 16.0, tick_label(fx));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN - 6.0, sy(fy) + 4.0, tick_label(fy));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s.points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, s.color, pts.join(" "));
        let ly = MARGIN + 14.0 + 14.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{ly:.1}" fill="{}">{}</text>"#, WIDTH - MARGIN - 110.0, s.color, s.label);
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn polygon_series<'a>(label: &'a str, color: &'a str, feet: &[nalgebra::Vector3<f64>], log: &RunLog) -> Option<Series<'a>> {
    let polygon = support_polygon(feet, &log.config.robot.foot).ok()?;
    let mut points: Vec<(f64, f64)> = polygon.vertices().iter().map(|v| (v.y, v.x)).collect();
    points.push(points[0]);
    Some(Series { label, color, points })
}

/// Transverse CoM path (lateral axis horizontal) over the initial and final support polygons.
pub fn plot_com_xy(log: &RunLog) -> String {
    let left = log.config.left_foot();
    let mut series = Vec::new();
    series.extend(polygon_series("initial support", "#7f7f7f", &[left], log));
    if let Some([x, y]) = log.summary.step_target {
        let target = nalgebra::Vector3::new(x, y, 0.0);
        series.extend(polygon_series("final support", "#2ca02c", &[left, target], log));
    }
    let points = log.ticks.iter().map(|t| (t.state.com_position.y, t.state.com_position.x)).collect();
    series.push(Series { label: "CoM", color: "#1f77b4", points });
    line_chart("CoM transverse path", "y [m]", "x [m]", &series)
}

pub fn plot_com_z(log: &RunLog) -> String {
    let points = log.ticks.iter().map(|t| (t.time, t.state.com_position.z)).collect();
    line_chart("CoM height", "t [s]", "z [m]", &[Series { label: "CoM z", color: "#1f77b4", points }])
}

pub fn plot_forces_z(log: &RunLog) -> String {
    let series = [
        Series {
            label: "left cmd",
            color: "#1f77b4",
            points: log.ticks.iter().map(|t| (t.time, t.commanded.left.force.z)).collect(),
        },
        Series {
            label: "right cmd",
            color: "#d62728",
            points: log.ticks.iter().map(|t| (t.time, t.commanded.right.force.z)).collect(),
        },
        Series {
            label: "left real",
            color: "#aec7e8",
            points: log.ticks.iter().map(|t| (t.time, t.realized.left.force.z)).collect(),
        },
        Series {
            label: "right real",
            color: "#ff9896",
            points: log.ticks.iter().map(|t| (t.time, t.realized.right.force.z)).collect(),
        },
    ];
    line_chart("Vertical contact forces", "t [s]", "f_z [N]", &series)
}

pub fn plot_trigger_timeline(log: &RunLog) -> String {
    let mut fired = false;
    let series = [
        Series {
            label: "k_impact",
            color: "#2ca02c",
            points: log.ticks.iter().map(|t| (t.time, t.k_impact as f64)).collect(),
        },
        Series {
            label: "step planned x10",
            color: "#9467bd",
            points: log
                .ticks
                .iter()
                .map(|t| {
                    fired |= t.trigger;
                    (t.time, if fired { 10.0 } else { 0.0 })
                })
                .collect(),
        },
        Series {
            label: "right contact x10",
            color: "#ff7f0e",
            points: log.ticks.iter().map(|t| (t.time, if t.right_contact { 10.0 } else { 0.0 })).collect(),
        },
    ];
    line_chart("Step trigger timeline", "t [s]", "stage", &series)
}
