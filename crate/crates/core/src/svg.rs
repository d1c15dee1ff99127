//! Minimal static SVG scatter/trajectory figures for reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn color(idx: usize) -> &'static str {
    PALETTE[idx % PALETTE.len()]
}

pub struct ScatterPlot {
    title: String,
    x_label: String,
    y_label: String,
    /// (x, y, color index)
    points: Vec<(f64, f64, usize)>,
    /// polyline in point order, drawn under the points
    connect: bool,
}

impl ScatterPlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        ScatterPlot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            points: Vec::new(),
            connect: false,
        }
    }

    pub fn connect_points(mut self) -> Self {
        self.connect = true;
        self
    }

    pub fn push(&mut self, x: f64, y: f64, color_idx: usize) {
        self.points.push((x, y, color_idx));
    }

    pub fn render(&self) -> String {
        const W: f64 = 760.0;
        const H: f64 = 560.0;
        const M: f64 = 60.0;

        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y, _) in &self.points {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        if !min_x.is_finite() {
            min_x = 0.0;
            max_x = 1.0;
            min_y = 0.0;
            max_y = 1.0;
        }
        if max_x - min_x < 1e-12 {
            max_x = min_x + 1.0;
        }
        if max_y - min_y < 1e-12 {
            max_y = min_y + 1.0;
        }
        let sx = |x: f64| M + (x - min_x) / (max_x - min_x) * (W - 2.0 * M);
        let sy = |y: f64| H - M - (y - min_y) / (max_y - min_y) * (H - 2.0 * M);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            W / 2.0,
            xml_escape(&self.title)
        );
        // axes
        let _ = writeln!(
            out,
            r#"<line x1="{M}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
            H - M,
            W - M
        );
        let _ = writeln!(
            out,
            r#"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#,
            H - M
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            W / 2.0,
            H - 16.0,
            xml_escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {0})">{1}</text>"#,
            H / 2.0,
            xml_escape(&self.y_label)
        );

        if self.connect && self.points.len() > 1 {
            let path: Vec<String> = self
                .points
                .iter()
                .map(|&(x, y, _)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                out,
                r##"<polyline points="{}" fill="none" stroke="#999999" stroke-width="0.7"/>"##,
                path.join(" ")
            );
        }
        for &(x, y, c) in &self.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.7"/>"#,
                sx(x),
                sy(y),
                color(c)
            );
        }
        out.push_str("</svg>\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
