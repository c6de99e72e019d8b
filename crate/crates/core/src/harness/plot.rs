//! Static SVG figures. Display only: nothing downstream reads them.

use std::fmt::Write;

use super::MetricReport;
use crate::analysis::Classification;
use crate::corruption::{Family, Severity};
use crate::model::{EmbeddingBatch, Modality};

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    }
}

fn axes(svg: &mut String, x_label: &str, y_label: &str, y: (f64, f64)) {
    let _ = writeln!(
        svg,
        "<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/><line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>",
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>",
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{y_label}</text>",
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.2}</text><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.2}</text>",
        PAD - 4.0,
        H - PAD,
        y.0,
        PAD - 4.0,
        PAD + 4.0,
        y.1
    );
}

fn sx(v: f64, r: (f64, f64)) -> f64 {
    PAD + (v - r.0) / (r.1 - r.0) * (W - 2.0 * PAD)
}

fn sy(v: f64, r: (f64, f64)) -> f64 {
    H - PAD - (v - r.0) / (r.1 - r.0) * (H - 2.0 * PAD)
}

/// Mean corrupted-input PSNR against severity, one line per family.
pub fn severity_curves(report: &MetricReport, families: &[Family], severities: &[Severity]) -> String {
    let series: Vec<(Family, Vec<f64>)> = families
        .iter()
        .map(|&f| {
            let ys = severities
                .iter()
                .map(|&s| {
                    report
                        .aggregate_for(&format!("{f}/{s}"), "psnr")
                        .and_then(|a| a.mean.as_f64())
                        .unwrap_or(f64::NAN)
                })
                .collect();
            (f, ys)
        })
        .collect();
    let yr = range(series.iter().flat_map(|(_, ys)| ys.iter().copied()));
    let xr = (-0.5, severities.len() as f64 - 0.5);
    let mut svg = open(W, H);
    axes(&mut svg, "severity", "mean PSNR (dB)", yr);
    for (i, s) in severities.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{s}</text>",
            sx(i as f64, xr),
            H - PAD + 14.0
        );
    }
    for (k, (f, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .filter(|(_, y)| y.is_finite())
            .map(|(i, &y)| format!("{:.1},{:.1}", sx(i as f64, xr), sy(y, yr)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{f}</text>",
            W - PAD - 70.0,
            PAD + 14.0 * k as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// First two principal coordinates, colored by modality.
pub fn pca_scatter(batch: &EmbeddingBatch, coords: &[Vec<f64>]) -> String {
    let x = |c: &Vec<f64>| c.first().copied().unwrap_or(0.0);
    let y = |c: &Vec<f64>| c.get(1).copied().unwrap_or(0.0);
    let xr = range(coords.iter().map(x));
    let yr = range(coords.iter().map(y));
    let mut svg = open(W, H);
    axes(&mut svg, "PC1", "PC2", yr);
    for (item, c) in batch.items().iter().zip(coords) {
        let color = COLORS[item.modality.ordinal() % COLORS.len()];
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.7\"/>",
            sx(x(c), xr),
            sy(y(c), yr)
        );
    }
    for (k, m) in batch.modalities().iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{}\">{m}</text>",
            W - PAD - 40.0,
            PAD + 14.0 * k as f64,
            COLORS[m.ordinal() % COLORS.len()]
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Items × classes probability matrix as a grayscale heatmap.
pub fn probability_heatmap(batch: &EmbeddingBatch, cls: &Classification) -> String {
    let n = cls.probabilities.len().max(1);
    let c = cls.classes.len().max(1);
    let cell_w = 40.0;
    let cell_h = (600.0 / n as f64).clamp(1.0, 12.0);
    let (w, h) = (PAD + cell_w * c as f64 + 10.0, PAD + cell_h * n as f64 + 10.0);
    let mut svg = open(w, h);
    for (j, m) in cls.classes.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{m}</text>",
            PAD + cell_w * (j as f64 + 0.5),
            PAD - 8.0
        );
    }
    for (i, row) in cls.probabilities.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            let g = (255.0 * (1.0 - p.clamp(0.0, 1.0))).round() as u8;
            let _ = writeln!(
                svg,
                "<rect x=\"{:.1}\" y=\"{:.2}\" width=\"{cell_w}\" height=\"{cell_h:.2}\" fill=\"rgb({g},{g},{g})\"/>",
                PAD + cell_w * j as f64,
                PAD + cell_h * i as f64
            );
        }
        let m: Modality = batch.items()[i].modality;
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"{:.2}\" width=\"6\" height=\"{cell_h:.2}\" fill=\"{}\"/>",
            PAD - 10.0,
            PAD + cell_h * i as f64,
            COLORS[m.ordinal() % COLORS.len()]
        );
    }
    svg.push_str("</svg>\n");
    svg
}
