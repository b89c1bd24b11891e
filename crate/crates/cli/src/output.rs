//! CSV logs and SVG charts for a finished simulation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use convoy_core::fleet_sim::TrajectoryLog;
use plotters::prelude::*;

use crate::config::ScenarioConfig;

/// Formats `v` with 9 significant digits.
pub fn sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

fn row(t: f64, values: impl IntoIterator<Item = f64>) -> String {
    let mut line = sig9(t);
    for v in values {
        line.push(',');
        line.push_str(&sig9(v));
    }
    line.push('\n');
    line
}

pub fn trajectories_csv(cfg: &ScenarioConfig, log: &TrajectoryLog) -> String {
    let mut out = String::from("t");
    for id in &cfg.ids {
        for c in ["qx", "qy", "vx", "vy", "ux", "uy"] {
            let _ = write!(out, ",{c}_{id}");
        }
    }
    if log.leader.is_some() {
        out.push_str(",qx_leader,qy_leader");
    }
    out.push('\n');
    for s in 0..log.times.len() {
        let mut values = Vec::new();
        for i in 0..cfg.ids.len() {
            values.extend(log.q[s][i]);
            values.extend(log.v[s][i]);
            values.extend(log.u[s][i]);
        }
        if let Some(l) = &log.leader {
            values.extend(l[s]);
        }
        out.push_str(&row(log.times[s], values));
    }
    out
}

fn edge_labels(cfg: &ScenarioConfig, log: &TrajectoryLog) -> Vec<String> {
    let m = cfg.ids.len();
    log.edges
        .iter()
        .map(|&(t, h)| {
            let name = |i: usize| {
                if i < m {
                    cfg.ids[i].to_string()
                } else {
                    "leader".into()
                }
            };
            format!("{}_{}", name(t), name(h))
        })
        .collect()
}

pub fn relative_csv(cfg: &ScenarioConfig, log: &TrajectoryLog) -> String {
    let labels = edge_labels(cfg, log);
    let n = labels.len();
    let mut out = String::from("t");
    for l in &labels {
        for c in ["x_x", "x_y", "xdot_x", "xdot_y", "e_x", "e_y"] {
            let _ = write!(out, ",{c}_{l}");
        }
    }
    out.push('\n');
    for s in 0..log.times.len() {
        let (x, e) = (&log.x[s], &log.e[s]);
        let values = (0..n).flat_map(|k| {
            [
                x[2 * k],
                x[2 * k + 1],
                x[2 * (n + k)],
                x[2 * (n + k) + 1],
                e[2 * k],
                e[2 * k + 1],
            ]
        });
        out.push_str(&row(log.times[s], values));
    }
    out
}

pub fn distances_csv(cfg: &ScenarioConfig, log: &TrajectoryLog) -> String {
    let mut out = String::from("t");
    for &(i, j) in &log.pairs {
        let _ = write!(out, ",d_{}_{}", cfg.ids[i], cfg.ids[j]);
    }
    out.push('\n');
    for s in 0..log.times.len() {
        out.push_str(&row(log.times[s], log.distances[s].iter().copied()));
    }
    out
}

type Series = (String, Vec<(f64, f64)>);

fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-3);
    ((x0, x1), (y0 - pad, y1 + pad))
}

fn line_chart(path: &Path, title: &str, y_label: &str, series: &[Series]) -> Result<(), String> {
    let ((x0, x1), (y0, y1)) = bounds(series);
    let root = SVGBackend::new(path, (800, 480)).into_drawing_area();
    let err = |e: &dyn std::fmt::Display| format!("{}: {e}", path.display());
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .y_desc(y_label)
        .draw()
        .map_err(|e| err(&e))?;
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| err(&e))?
            .label(name.as_str())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
            });
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))
}

/// Writes the position and distance charts; returns the files created.
pub fn write_plots(
    dir: &Path,
    cfg: &ScenarioConfig,
    log: &TrajectoryLog,
) -> Result<Vec<PathBuf>, String> {
    let mut files = Vec::new();
    for (axis, file, title, label) in [
        (
            0,
            "positions_lateral.svg",
            "Lateral positions",
            "lateral [m]",
        ),
        (
            1,
            "positions_longitudinal.svg",
            "Longitudinal positions",
            "longitudinal [m]",
        ),
    ] {
        let mut series: Vec<Series> = cfg
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                (
                    format!("vehicle {id}"),
                    log.times
                        .iter()
                        .zip(&log.q)
                        .map(|(&t, q)| (t, q[i][axis]))
                        .collect(),
                )
            })
            .collect();
        if let Some(l) = &log.leader {
            series.push((
                "virtual leader".into(),
                log.times
                    .iter()
                    .zip(l)
                    .map(|(&t, q)| (t, q[axis]))
                    .collect(),
            ));
        }
        let path = dir.join(file);
        line_chart(&path, title, label, &series)?;
        files.push(path);
    }
    let series: Vec<Series> = log
        .pairs
        .iter()
        .enumerate()
        .map(|(p, &(i, j))| {
            (
                format!("{}-{}", cfg.ids[i], cfg.ids[j]),
                log.times
                    .iter()
                    .zip(&log.distances)
                    .map(|(&t, d)| (t, d[p]))
                    .collect(),
            )
        })
        .collect();
    if !series.is_empty() {
        let path = dir.join("distances.svg");
        line_chart(&path, "Pairwise distances", "distance [m]", &series)?;
        files.push(path);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(-2.5), "-2.5");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123456.789012), "123456.789");
        assert_eq!(sig9(1.0e-7), "1.00000000e-7");
        assert_eq!(sig9(2.0e12), "2.00000000e12");
        assert_eq!(sig9(0.1 + 0.2), "0.3");
    }
}
