//! Static SVG figures: signal/energy overlays with cut markers and
//! confusion-matrix heatmaps.

use std::fmt::Write;

use crate::imu::SignalMatrix;
use crate::segmentation::{CutSet, EnergySeries};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;
const CUT_COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn polyline(values: &[f64], lo: f64, hi: f64, style: &str) -> String {
    let n = values.len().max(2) - 1;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut pts = String::new();
    for (i, v) in values.iter().enumerate() {
        let x = MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / n as f64;
        let y = HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / span;
        let _ = write!(pts, "{x:.2},{y:.2} ");
    }
    format!("<polyline fill=\"none\" {style} points=\"{}\"/>\n", pts.trim_end())
}

fn range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Accelerometer magnitude (black), energy (dashed) and one colored
/// vertical line per cut. Both curves are scaled to the full plot height.
pub fn energy_overlay_svg(signal: &SignalMatrix, energy: &EnergySeries, cuts: &CutSet, title: &str) -> String {
    let magnitude: Vec<f64> = (0..signal.len())
        .map(|i| {
            let c = signal.column(i);
            (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
        })
        .collect();
    let (mlo, mhi) = range(&magnitude);
    let (elo, ehi) = range(&energy.values);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        escape(title)
    );
    svg += &polyline(&magnitude, mlo, mhi, "stroke=\"black\" stroke-width=\"1\"");
    svg += &polyline(&energy.values, elo, ehi, "stroke=\"#555555\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"");
    let n = signal.len().max(2) - 1;
    for (k, &c) in cuts.cuts.iter().enumerate() {
        let x = MARGIN + (WIDTH - 2.0 * MARGIN) * c as f64 / n as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{MARGIN}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"{}\" stroke-width=\"2\"/>",
            HEIGHT - MARGIN,
            CUT_COLORS[k % CUT_COLORS.len()]
        );
    }
    svg += "</svg>\n";
    svg
}

/// Row-normalised heatmap; `matrix[true][predicted]` holds counts.
pub fn confusion_svg(matrix: &[Vec<usize>], labels: &[String], title: &str) -> String {
    let k = matrix.len();
    let cell = 56.0;
    let left = 80.0;
    let top = 60.0;
    let size = left + cell * k as f64 + 20.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"10\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        escape(title)
    );
    for (r, row) in matrix.iter().enumerate() {
        let total: usize = row.iter().sum();
        for (c, &count) in row.iter().enumerate() {
            let frac = if total > 0 { count as f64 / total as f64 } else { 0.0 };
            let shade = (255.0 * (1.0 - frac)).round() as u8;
            let (x, y) = (left + cell * c as f64, top + cell * r as f64);
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#999\"/>\n\
                 <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{count}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for (i, label) in labels.iter().enumerate().take(k) {
        let pos = cell * i as f64 + cell / 2.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            left - 8.0,
            top + pos + 4.0,
            escape(label),
            left + pos,
            top - 8.0,
            escape(label)
        );
    }
    svg += "</svg>\n";
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_draws_one_line_per_cut() {
        let sig = SignalMatrix::from_rows(&std::array::from_fn(|c| (0..100).map(|i| (i * c) as f64).collect())).unwrap();
        let e = EnergySeries {
            values: (0..100).map(|i| i as f64).collect(),
            half_window: 1,
        };
        let cuts = CutSet::auto("r", vec![20, 50, 80]);
        let svg = energy_overlay_svg(&sig, &e, &cuts, "a<b");
        assert_eq!(svg.matches("<line").count(), 3);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn confusion_has_one_cell_per_entry() {
        let m = vec![vec![3, 1], vec![0, 4]];
        let svg = confusion_svg(&m, &["30".into(), "60".into()], "cm");
        assert_eq!(svg.matches("<rect x=").count(), 4);
        assert!(svg.starts_with("<svg"));
    }
}
