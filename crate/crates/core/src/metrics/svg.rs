//! Minimal standalone SVG charts. Output depends only on the inputs, and all
//! coordinates are printed with two decimals.

use std::fmt::Write as _;
use std::path::Path;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 400.0;
pub const MARGIN_LEFT: f64 = 60.0;
pub const MARGIN_RIGHT: f64 = 20.0;
pub const MARGIN_TOP: f64 = 40.0;
pub const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const TICKS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }
}

/// Affine map from data ranges onto the plot area, y pointing up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mapping {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

impl Mapping {
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a (f64, f64)>, y_from_zero: bool) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = if y_from_zero {
            (0.0, 0.0)
        } else {
            (f64::INFINITY, f64::NEG_INFINITY)
        };
        for &(px, py) in points {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        if !x.0.is_finite() {
            x = (0.0, 1.0);
        }
        if !y.0.is_finite() {
            y = (0.0, 1.0);
        }
        Self {
            x_range: widen(x),
            y_range: widen(y),
        }
    }

    pub fn plot_width() -> f64 {
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    pub fn plot_height() -> f64 {
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }

    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        (
            MARGIN_LEFT + (x - x0) / (x1 - x0) * Self::plot_width(),
            MARGIN_TOP + Self::plot_height() - (y - y0) / (y1 - y0) * Self::plot_height(),
        )
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == v.round() && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(title: &str, x_label: &str, y_label: &str, mapping: Option<&Mapping>) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            out,
            r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="24.00" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        let (left, top) = (MARGIN_LEFT, MARGIN_TOP);
        let (right, bottom) = (WIDTH - MARGIN_RIGHT, HEIGHT - MARGIN_BOTTOM);
        let _ = writeln!(
            out,
            r#"<path d="M{left:.2},{top:.2} L{left:.2},{bottom:.2} L{right:.2},{bottom:.2}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            HEIGHT - 10.0,
            escape(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16.00" y="{:.2}" text-anchor="middle" transform="rotate(-90 16.00 {:.2})">{}</text>"#,
            (top + bottom) / 2.0,
            (top + bottom) / 2.0,
            escape(y_label)
        );
        if let Some(m) = mapping {
            for i in 0..=TICKS {
                let f = i as f64 / TICKS as f64;
                let xv = m.x_range.0 + f * (m.x_range.1 - m.x_range.0);
                let yv = m.y_range.0 + f * (m.y_range.1 - m.y_range.0);
                let (px, _) = m.map(xv, m.y_range.0);
                let (_, py) = m.map(m.x_range.0, yv);
                let _ = writeln!(
                    out,
                    r#"<line x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                    bottom + 4.0,
                    bottom + 18.0,
                    tick_label(xv)
                );
                let _ = writeln!(
                    out,
                    r#"<line x1="{:.2}" y1="{py:.2}" x2="{left:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                    left - 4.0,
                    left - 6.0,
                    py + 4.0,
                    tick_label(yv)
                );
            }
        }
        Self { out }
    }

    fn no_data(&mut self) {
        let _ = writeln!(
            self.out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="gray">no data</text>"#,
            MARGIN_LEFT + Mapping::plot_width() / 2.0,
            MARGIN_TOP + Mapping::plot_height() / 2.0
        );
    }

    fn legend(&mut self, names: &[&str]) {
        for (i, name) in names.iter().enumerate() {
            let x = WIDTH - MARGIN_RIGHT - 150.0;
            let y = MARGIN_TOP + 10.0 + 16.0 * i as f64;
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                self.out,
                r#"<rect x="{x:.2}" y="{:.2}" width="10.00" height="10.00" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                y - 9.0,
                x + 14.0,
                y,
                escape(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Line chart with one polyline per series and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all: Vec<&(f64, f64)> = series.iter().flat_map(|s| &s.points).collect();
    if all.is_empty() {
        let mut c = Canvas::new(title, x_label, y_label, None);
        c.no_data();
        return c.finish();
    }
    let m = Mapping::fit(all, false);
    let mut c = Canvas::new(title, x_label, y_label, Some(&m));
    for (i, s) in series.iter().enumerate() {
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| {
                let (px, py) = m.map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            c.out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            coords.join(" "),
            PALETTE[i % PALETTE.len()]
        );
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    c.legend(&names);
    c.finish()
}

pub fn scatter_chart(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    if points.is_empty() {
        let mut c = Canvas::new(title, x_label, y_label, None);
        c.no_data();
        return c.finish();
    }
    let m = Mapping::fit(points, false);
    let mut c = Canvas::new(title, x_label, y_label, Some(&m));
    for &(x, y) in points {
        let (px, py) = m.map(x, y);
        let _ = writeln!(
            c.out,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.00" fill="{}"/>"#,
            PALETTE[0]
        );
    }
    c.finish()
}

/// Bar chart of `(bin center, count)` pairs; bars are as wide as the
/// narrowest gap between adjacent centers.
pub fn histogram_chart(title: &str, x_label: &str, y_label: &str, bins: &[(f64, f64)]) -> String {
    if bins.is_empty() {
        let mut c = Canvas::new(title, x_label, y_label, None);
        c.no_data();
        return c.finish();
    }
    let mut centers: Vec<f64> = bins.iter().map(|b| b.0).collect();
    centers.sort_by(f64::total_cmp);
    let step = centers
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let step = if step.is_finite() { step } else { 1.0 };
    let edges: Vec<(f64, f64)> = bins
        .iter()
        .flat_map(|&(x, y)| [(x - step / 2.0, y), (x + step / 2.0, y)])
        .collect();
    let m = Mapping::fit(&edges, true);
    let mut c = Canvas::new(title, x_label, y_label, Some(&m));
    for &(x, y) in bins {
        let (x0, top) = m.map(x - step / 2.0, y);
        let (x1, base) = m.map(x + step / 2.0, 0.0);
        let _ = writeln!(
            c.out,
            r#"<rect x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="white"/>"#,
            x1 - x0,
            base - top,
            PALETTE[0]
        );
    }
    c.finish()
}

pub fn save_svg(path: impl AsRef<Path>, svg: &str) -> std::io::Result<()> {
    std::fs::write(path, svg)
}
