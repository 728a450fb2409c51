//! CSV and SVG output for precision-recall curves.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{EvalError, EvalReport};

/// One labelled curve as `(recall, precision)` pairs in threshold order.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn from_report(label: impl Into<String>, report: &EvalReport) -> Self {
        Self {
            label: label.into(),
            points: report.curve.iter().map(|p| (p.recall, p.precision)).collect(),
        }
    }
}

pub fn write_curve_csv<W: Write>(report: &EvalReport, w: W) -> Result<(), EvalError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(["threshold", "precision", "recall", "tp", "fp", "fn"])?;
    for p in &report.curve {
        out.serialize(p)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CurveRow {
    #[allow(dead_code)]
    threshold: f64,
    precision: f64,
    recall: f64,
}

/// Reads the `(recall, precision)` pairs from a curve CSV.
pub fn read_curve_csv<R: Read>(label: impl Into<String>, r: R) -> Result<Series, EvalError> {
    let mut points = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: CurveRow = row?;
        points.push((row.recall, row.precision));
    }
    Ok(Series {
        label: label.into(),
        points,
    })
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn px(recall: f64) -> f64 {
    LEFT + recall.clamp(0.0, 1.0) * (WIDTH - LEFT - RIGHT)
}

fn py(precision: f64) -> f64 {
    HEIGHT - BOTTOM - precision.clamp(0.0, 1.0) * (HEIGHT - TOP - BOTTOM)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standalone SVG with recall on x and precision on y, both over [0, 1].
pub fn render_svg(series: &[Series]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (px(0.0), px(1.0), py(0.0), py(1.0));
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/><line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/></g>"#
    );
    s.push_str(r#"<g font-family="sans-serif" font-size="11" fill="black">"#);
    s.push('\n');
    for t in 0..=5 {
        let v = t as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y:.2}" stroke="black"/><text x="{x:.2}" y="{ty:.2}" text-anchor="middle">{v:.1}</text>"#,
            x = px(v),
            y = y0 + 4.0,
            ty = y0 + 16.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{x0:.2}" y1="{y:.2}" x2="{x:.2}" y2="{y:.2}" stroke="black"/><text x="{tx:.2}" y="{ty:.2}" text-anchor="end">{v:.1}</text>"#,
            y = py(v),
            x = x0 - 4.0,
            tx = x0 - 6.0,
            ty = py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Recall</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">Precision</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    s.push_str("</g>\n");

    for (i, series) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if !series.points.is_empty() {
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(r, p)| format!("{:.2},{:.2}", px(r), py(p)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<g font-family="sans-serif" font-size="11"><line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            x1 - 130.0,
            x1 - 110.0,
            x1 - 104.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<prefix>.csv` and `<prefix>.svg`, returning both paths.
pub fn emit_plot(report: &EvalReport, label: &str, prefix: impl AsRef<Path>) -> Result<(PathBuf, PathBuf), EvalError> {
    let prefix = prefix.as_ref();
    let csv_path = prefix.with_extension("csv");
    let svg_path = prefix.with_extension("svg");
    let mut csv_buf = Vec::new();
    write_curve_csv(report, &mut csv_buf)?;
    fs::write(&csv_path, csv_buf)?;
    fs::write(&svg_path, render_svg(&[Series::from_report(label, report)]))?;
    Ok((csv_path, svg_path))
}
