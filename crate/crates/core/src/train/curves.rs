//! Convergence-curve emitters: one CSV and one SVG line plot per run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::EpochStats;
use crate::error::{Error, Result};

const SVG_WIDTH: f64 = 800.0;
const SVG_HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 70.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

pub struct CurvePaths {
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Writes `epoch,mean_mae_wm2,mean_mse_wm2,wall_seconds,diverged,frozen`.
/// Floats are written in shortest round-trippable form.
pub fn write_curve_csv(path: &Path, stats: &[EpochStats]) -> Result<()> {
    if stats.is_empty() {
        return Err(Error::validation("no epoch stats to write"));
    }
    let mut out = String::from("epoch,mean_mae_wm2,mean_mse_wm2,wall_seconds,diverged,frozen\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.epoch_index, s.mean_train_mae, s.mean_train_mse, s.wall_seconds, s.diverged, s.frozen
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_curve_csv`].
pub fn read_curve_csv(path: &Path) -> Result<Vec<EpochStats>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "epoch,mean_mae_wm2,mean_mse_wm2,wall_seconds,diverged,frozen" {
        return Err(Error::Format(format!("unexpected curve header `{header}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(Error::Format(format!("curve row {} malformed", i + 1)));
        }
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("curve row {}: {e}", i + 1)))
        };
        out.push(EpochStats {
            epoch_index: cols[0]
                .parse()
                .map_err(|e| Error::Format(format!("curve row {}: {e}", i + 1)))?,
            mean_train_mae: parse_f(cols[1])?,
            mean_train_mse: parse_f(cols[2])?,
            wall_seconds: parse_f(cols[3])?,
            diverged: cols[4] == "true",
            frozen: cols[5] == "true",
        });
    }
    Ok(out)
}

fn polyline(points: &[(f64, f64)], color: &str, label: &str) -> String {
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" data-series="{label}" points="{}"/>"#,
        coords.join(" ")
    )
}

fn scale(
    values: impl Iterator<Item = (usize, f64)>,
    max_epoch: f64,
    max_value: f64,
) -> Vec<(f64, f64)> {
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    values
        .map(|(epoch, v)| {
            let x = MARGIN_LEFT + (epoch as f64 / max_epoch) * plot_w;
            let y = MARGIN_TOP + (1.0 - v / max_value) * plot_h;
            (x, y)
        })
        .collect()
}

/// Renders the MAE series (left axis) and the MSE series (right axis) as
/// polylines. Non-finite values are dropped from the plot.
pub fn write_curve_svg(path: &Path, title: &str, stats: &[EpochStats]) -> Result<()> {
    if stats.is_empty() {
        return Err(Error::validation("no epoch stats to plot"));
    }
    let finite = |v: f64| v.is_finite();
    let max_epoch = stats.last().map(|s| s.epoch_index).unwrap_or(1).max(1) as f64;
    let max_mae = stats
        .iter()
        .map(|s| s.mean_train_mae)
        .filter(|&v| finite(v))
        .fold(f64::MIN_POSITIVE, f64::max);
    let max_mse = stats
        .iter()
        .map(|s| s.mean_train_mse)
        .filter(|&v| finite(v))
        .fold(f64::MIN_POSITIVE, f64::max);

    let mae_points = scale(
        stats
            .iter()
            .filter(|s| finite(s.mean_train_mae))
            .map(|s| (s.epoch_index, s.mean_train_mae)),
        max_epoch,
        max_mae,
    );
    let mse_points = scale(
        stats
            .iter()
            .filter(|s| finite(s.mean_train_mse))
            .map(|s| (s.epoch_index, s.mean_train_mse)),
        max_epoch,
        max_mse,
    );

    let plot_bottom = SVG_HEIGHT - MARGIN_BOTTOM;
    let plot_right = SVG_WIDTH - MARGIN_RIGHT;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.0}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        SVG_WIDTH / 2.0,
        xml_escape(title)
    );
    // Axes.
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{plot_bottom}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_LEFT}" y1="{plot_bottom}" x2="{plot_right}" y2="{plot_bottom}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="12" text-anchor="middle">epoch</text>"#,
        SVG_WIDTH / 2.0,
        SVG_HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.0}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 18 {:.0})">watts per square meter</text>"#,
        SVG_HEIGHT / 2.0,
        SVG_HEIGHT / 2.0
    );
    // Scale annotations.
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN_LEFT}" y="{:.0}" font-family="sans-serif" font-size="10" text-anchor="end">{max_mae:.3}</text>"#,
        MARGIN_TOP + 10.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{plot_right}" y="{:.0}" font-family="sans-serif" font-size="10" fill="#b22222">{max_mse:.3}</text>"##,
        MARGIN_TOP + 10.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="11" fill="#1f77b4">mae</text>"##,
        MARGIN_LEFT + 8.0,
        MARGIN_TOP + 14.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="11" fill="#b22222">mse (right scale)</text>"##,
        MARGIN_LEFT + 8.0,
        MARGIN_TOP + 28.0
    );
    let _ = writeln!(svg, "{}", polyline(&mae_points, "#1f77b4", "mae"));
    let _ = writeln!(svg, "{}", polyline(&mse_points, "#b22222", "mse"));
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<run_name>.csv` and `<run_name>.svg` under `dir`.
pub fn emit_curves(dir: &Path, run_name: &str, stats: &[EpochStats]) -> Result<CurvePaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{run_name}.csv"));
    let svg = dir.join(format!("{run_name}.svg"));
    write_curve_csv(&csv, stats)?;
    write_curve_svg(&svg, run_name, stats)?;
    Ok(CurvePaths { csv, svg })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(n: usize) -> Vec<EpochStats> {
        (1..=n)
            .map(|e| EpochStats {
                epoch_index: e,
                mean_train_mae: 100.0 / e as f64,
                mean_train_mse: 10_000.0 / (e * e) as f64,
                wall_seconds: 0.01 * e as f64,
                diverged: false,
                frozen: false,
            })
            .collect()
    }

    #[test]
    fn csv_has_header_plus_one_row_per_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        write_curve_csv(&path, &stats(100)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 101);
        assert!(text.starts_with("epoch,mean_mae_wm2,"));
    }

    #[test]
    fn csv_round_trips_to_the_same_stats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let input = stats(37);
        write_curve_csv(&path, &input).unwrap();
        let output = read_curve_csv(&path).unwrap();
        assert_eq!(input, output);
    }

    #[test]
    fn svg_is_well_formed_xml_with_one_polyline_per_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.svg");
        write_curve_svg(&path, "run", &stats(50)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let doc = roxmltree::Document::parse(&text).expect("well-formed XML");
        let polylines: Vec<_> = doc
            .descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .collect();
        assert_eq!(polylines.len(), 2);
        let series: Vec<_> = polylines
            .iter()
            .filter_map(|n| n.attribute("data-series"))
            .collect();
        assert_eq!(series, ["mae", "mse"]);
        // Axis label promised by the figure contract.
        assert!(text.contains("watts per square meter"));
    }

    #[test]
    fn empty_stats_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_curve_csv(&dir.path().join("x.csv"), &[]).is_err());
        assert!(write_curve_svg(&dir.path().join("x.svg"), "x", &[]).is_err());
    }
}
