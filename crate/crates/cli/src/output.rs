//! CSV writing, 2-D point files and a minimal SVG line renderer.

use crate::error::{CliError, CliResult};
use std::fmt::Write as _;
use std::path::Path;

/// Formats a float with the shortest round-trip representation (exponent
/// form for very small or large magnitudes); `None` is an empty cell.
pub fn cell(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn num(x: f64) -> String {
    if x != 0.0 && x.is_finite() && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> CliResult<()> {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    write_file(path, &s)
}

/// Reads `x,y` rows; a non-numeric first line is treated as a header.
pub fn read_points(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(p) if p.len() == 2 => out.push(p),
            Err(_) if i == 0 => continue,
            _ => {
                return Err(CliError::Config(format!(
                    "{}: line {}: expected two numeric columns, got '{line}'",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

pub fn points_csv(points: &[Vec<f64>]) -> Vec<Vec<String>> {
    points.iter().map(|p| p.iter().map(|&v| num(v)).collect()).collect()
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// A highlighted point drawn as a hollow circle.
pub struct Marker {
    pub label: String,
    pub at: (f64, f64),
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
    pub markers: Vec<Marker>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;

impl Plot {
    pub fn render(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let finite = |(x, y): (f64, f64)| tx(x).is_finite() && y.is_finite();
        let all: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .chain(self.markers.iter().map(|m| m.at))
            .filter(|&p| finite(p))
            .map(|(x, y)| (tx(x), y))
            .collect();
        let (mut x0, mut x1, mut y0, mut y1) = all.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        );
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - pad, y1 + pad);
        let sx = |x: f64| MARGIN + (tx(x) - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<path d="M{m} {t} L{m} {b} L{r} {b}" stroke="black" fill="none"/>"#,
            m = MARGIN,
            t = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let px = MARGIN + (W - 2.0 * MARGIN) * i as f64 / 4.0;
            let py = H - MARGIN - (H - 2.0 * MARGIN) * i as f64 / 4.0;
            let xl = if self.log_x { 10f64.powf(fx) } else { fx };
            let _ = writeln!(s, r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#, H - MARGIN + 18.0, tick(xl));
            let _ = writeln!(s, r#"<text x="{}" y="{py}" text-anchor="end">{}</text>"#, MARGIN - 6.0, tick(fy));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let path: Vec<String> = series
                .points
                .iter()
                .filter(|&&p| finite(p))
                .enumerate()
                .map(|(i, &(x, y))| format!("{}{:.2} {:.2}", if i == 0 { 'M' } else { 'L' }, sx(x), sy(y)))
                .collect();
            let _ = writeln!(s, r#"<path d="{}" stroke="{color}" stroke-width="1.8" fill="none"/>"#, path.join(" "));
            let ly = MARGIN + 16.0 * k as f64;
            let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, W - MARGIN - 150.0, W - MARGIN - 130.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - MARGIN - 125.0, ly + 4.0, escape(&series.label));
        }
        for m in self.markers.iter().filter(|m| finite(m.at)) {
            let (px, py) = (sx(m.at.0), sy(m.at.1));
            let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="6" stroke="red" stroke-width="2" fill="none"/>"#);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" fill="red">{}</text>"#, px + 8.0, py - 8.0, escape(&m.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_markers() {
        let plot = Plot {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: false,
            series: vec![Series { label: "s".into(), points: vec![(0.0, 0.0), (1.0, 2.0), (2.0, f64::INFINITY)] }],
            markers: vec![Marker { label: "m".into(), at: (1.0, 2.0) }],
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn empty_plot_is_still_valid() {
        let plot = Plot { title: String::new(), x_label: String::new(), y_label: String::new(), log_x: true, series: vec![], markers: vec![] };
        assert!(plot.render().contains("</svg>"));
    }

    #[test]
    fn cells_round_trip() {
        assert_eq!(cell(None), "");
        let v = 0.1 + 0.2;
        assert_eq!(cell(Some(v)).parse::<f64>().unwrap(), v);
        assert_eq!(cell(Some(f64::INFINITY)), "inf");
        for v in [2.5e-11, -7.0e20, 0.004] {
            assert_eq!(cell(Some(v)).parse::<f64>().unwrap(), v);
        }
        assert_eq!(cell(Some(2.5e-11)), "2.5e-11");
    }
}
