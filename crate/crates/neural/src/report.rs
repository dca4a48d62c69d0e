//! Side-by-side rendering of a series and its heatmaps.

use std::fmt::Write as _;

use crate::cam::Heatmap;
use crate::{NeuralError, Result};

const WIDTH: f64 = 800.0;
const SERIES_HEIGHT: f64 = 160.0;
const TRACK_HEIGHT: f64 = 24.0;
const GAP: f64 = 8.0;
const MARGIN: f64 = 10.0;
const LABEL_WIDTH: f64 = 80.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapReport {
    pub svg: String,
    pub csv: String,
    pub tracks: usize,
}

fn colour(method_index: usize) -> &'static str {
    ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"][method_index % 4]
}

/// Series plot with one aligned intensity track per heatmap, plus a CSV with
/// one column per method.
pub fn render_heatmap_report(series: &[f64], heatmaps: &[Heatmap]) -> Result<HeatmapReport> {
    let n = series.len();
    if n == 0 {
        return Err(NeuralError::Shape("empty series".into()));
    }
    if let Some(h) = heatmaps.iter().find(|h| h.values.len() != n) {
        return Err(NeuralError::Shape(format!("{} heatmap has {} values, series has {n}", h.method, h.values.len())));
    }
    let plot_width = WIDTH - LABEL_WIDTH - 2.0 * MARGIN;
    let step = plot_width / n as f64;
    let x = |t: usize| MARGIN + LABEL_WIDTH + (t as f64 + 0.5) * step;
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let y = |v: f64| MARGIN + SERIES_HEIGHT - (v - lo) / span * SERIES_HEIGHT;
    let height = 2.0 * MARGIN + SERIES_HEIGHT + heatmaps.len() as f64 * (TRACK_HEIGHT + GAP);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}" font-size="12" font-family="sans-serif">series</text>"#, MARGIN + 14.0);
    let points: Vec<String> = series.iter().enumerate().map(|(t, v)| format!("{:.2},{:.2}", x(t), y(*v))).collect();
    let _ = writeln!(svg, r#"<polyline class="series" fill="none" stroke="black" stroke-width="1" points="{}"/>"#, points.join(" "));
    for (i, h) in heatmaps.iter().enumerate() {
        let top = MARGIN + SERIES_HEIGHT + GAP + i as f64 * (TRACK_HEIGHT + GAP);
        let _ = writeln!(svg, r#"<g class="track" data-method="{}">"#, h.method);
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="{:.2}" font-size="12" font-family="sans-serif">{}</text>"#,
            top + TRACK_HEIGHT * 0.7,
            h.method
        );
        for (t, v) in h.values.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{TRACK_HEIGHT}" fill="{}" fill-opacity="{v:.4}"/>"#,
                x(t) - step / 2.0,
                step,
                colour(i)
            );
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");

    let mut csv = String::from("t,value");
    for h in heatmaps {
        let _ = write!(csv, ",{}", h.method);
    }
    csv.push('\n');
    for t in 0..n {
        let _ = write!(csv, "{t},{}", series[t]);
        for h in heatmaps {
            let _ = write!(csv, ",{}", h.values[t]);
        }
        csv.push('\n');
    }
    Ok(HeatmapReport { svg, csv, tracks: heatmaps.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cam::CamMethod;

    fn heatmap(method: CamMethod, n: usize) -> Heatmap {
        Heatmap { values: (0..n).map(|i| i as f64 / (n - 1) as f64).collect(), method, target_class: 0 }
    }

    #[test]
    fn two_tracks() {
        let series: Vec<f64> = (0..128).map(|i| (i as f64 / 10.0).sin()).collect();
        let r = render_heatmap_report(&series, &[heatmap(CamMethod::GradCam, 128), heatmap(CamMethod::HiResCam, 128)]).unwrap();
        assert_eq!(r.tracks, 2);
        assert_eq!(r.svg.matches(r#"class="track""#).count(), 2);
        assert_eq!(r.svg.matches("<rect x=").count(), 256);
        assert_eq!(r.csv.lines().count(), 129);
        assert_eq!(r.csv.lines().next().unwrap(), "t,value,grad-cam,hires-cam");
    }

    #[test]
    fn series_only() {
        let r = render_heatmap_report(&[1.0, 2.0, 3.0], &[]).unwrap();
        assert_eq!(r.tracks, 0);
        assert!(r.svg.contains("polyline"));
    }

    #[test]
    fn mismatched_lengths() {
        assert!(matches!(render_heatmap_report(&[1.0; 10], &[heatmap(CamMethod::GradCam, 9)]), Err(NeuralError::Shape(_))));
    }
}
