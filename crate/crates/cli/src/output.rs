//! Plot data and report files.

use std::fmt::Write as _;
use std::path::Path;

use hazardscope::optical_flow::FlowSummary;
use hazardscope::reaction::ReactionSeries;
use hazardscope::signals::MotionSeries;

use crate::error::PipelineError;

pub fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| PipelineError::io(path, e))
}

/// `frame_index,value`
pub fn signal_csv(series: &MotionSeries<f64>) -> String {
    let mut out = String::from("frame_index,value\n");
    for (i, v) in series.values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}

/// `frame_index,magnitude_mean,angle_mean`
pub fn flow_csv(summaries: &[FlowSummary<f64>]) -> String {
    let mut out = String::from("frame_index,magnitude_mean,angle_mean\n");
    for s in summaries {
        let _ = writeln!(out, "{},{},{}", s.frame_index, s.magnitude_mean, s.angle_mean);
    }
    out
}

/// `frame_index,driver_state_changed`
pub fn reaction_csv(series: &ReactionSeries) -> String {
    let mut out = String::from("frame_index,driver_state_changed\n");
    for (i, v) in series.values().iter().enumerate() {
        let _ = writeln!(out, "{i},{}", u8::from(*v));
    }
    out
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One line per series, each min-max scaled to the plot height, with dashed
/// vertical markers at each breakpoint.
pub fn signal_svg(title: &str, series: &[(&str, &[f64], &[usize])]) -> String {
    let (w, h, pad) = (640.0_f64, 240.0_f64, 30.0_f64);
    let n = series.iter().map(|(_, v, _)| v.len()).max().unwrap_or(0);
    let x_of = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (n.max(2) - 1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{pad}" y="18" font-family="sans-serif" font-size="12">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    for (k, (name, values, breakpoints)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let y_of = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / span;
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        for &bp in breakpoints.iter() {
            let x = x_of(bp);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{pad}" x2="{x:.2}" y2="{}" stroke="{color}" stroke-dasharray="4 3"/>"#,
                h - pad
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            w - pad - 140.0,
            18.0 + 12.0 * k as f64,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
