//! Minimal SVG charts: line charts with an optional log axis, and labelled heatmaps.

use std::fmt::Write;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
const FONT: &str = "font-family=\"sans-serif\"";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log10,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub y_scale: Scale,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick positions at 1, 2 or 5 times a power of ten, about `target` of them.
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|f| f * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e5 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl LineChart {
    pub fn render(&self) -> String {
        let (w, h) = (760.0, 460.0);
        let (left, right, top, bottom) = (80.0, 180.0, 40.0, 60.0);
        let (pw, ph) = (w - left - right, h - top - bottom);

        let series: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter_map(|&(x, y)| match self.y_scale {
                        Scale::Log10 if y > 0.0 && y.is_finite() => Some((x, y.log10())),
                        Scale::Linear if y.is_finite() => Some((x, y)),
                        _ => None,
                    })
                    .filter(|(x, _)| x.is_finite())
                    .collect()
            })
            .collect();
        let all = series.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            (x0, x1) = (x0 - 0.5, x1 + 0.5);
        }
        match self.y_scale {
            Scale::Log10 => {
                y0 = y0.floor();
                y1 = y1.ceil();
                if y1 == y0 {
                    y1 += 1.0;
                }
            }
            Scale::Linear => {
                if y1 == y0 {
                    (y0, y1) = (y0 - 1.0, y1 + 1.0);
                } else {
                    let pad = 0.05 * (y1 - y0);
                    (y0, y1) = (y0 - pad, y1 + pad);
                }
            }
        }
        let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="16" {FONT}>{}</text>"#,
            left + pw / 2.0,
            escape(&self.title)
        );

        for t in nice_ticks(x0, x1, 8) {
            let x = px(t);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{}" stroke="#e6e6e6"/>"##, top + ph);
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-size="11" {FONT}>{}</text>"#,
                top + ph + 16.0,
                tick_label(t)
            );
        }
        let y_ticks: Vec<(f64, String)> = match self.y_scale {
            Scale::Log10 => {
                let decades = (y1 - y0) as i64;
                let stride = (decades / 10 + 1).max(1);
                (y0 as i64..=y1 as i64).filter(|k| (k - y0 as i64) % stride == 0).map(|k| (k as f64, format!("1e{k}"))).collect()
            }
            Scale::Linear => nice_ticks(y0, y1, 6).into_iter().map(|t| (t, tick_label(t))).collect(),
        };
        for (t, label) in y_ticks {
            let y = py(t);
            let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#e6e6e6"/>"##, left + pw);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="11" {FONT}>{label}</text>"#,
                left - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13" {FONT}>{}</text>"#,
            left + pw / 2.0,
            h - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{0}" text-anchor="middle" font-size="13" {FONT} transform="rotate(-90 18 {0})">{1}</text>"#,
            top + ph / 2.0,
            escape(&self.y_label)
        );

        for (i, pts) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if pts.len() > 1 {
                let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#, path.join(" "));
            }
            if pts.len() <= 80 {
                for &(x, y) in pts {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="{color}"/>"#, px(x), py(y));
                }
            }
            let ly = top + 10.0 + 20.0 * i as f64;
            let lx = left + pw + 16.0;
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, lx + 22.0);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="12" {FONT}>{}</text>"#,
                lx + 28.0,
                ly + 4.0,
                escape(&self.series[i].name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorScale {
    /// Diverging around 1 on a log2 scale: blue below, red above.
    Ratio,
    /// White to blue on a log scale between the smallest and largest entry.
    Magnitude,
}

#[derive(Debug, Clone)]
pub struct Heatmap {
    pub title: String,
    pub row_label: String,
    pub col_label: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// `values[row][col]`; `None` cells are drawn grey.
    pub values: Vec<Vec<Option<f64>>>,
    pub scale: ColorScale,
}

fn blend(t: f64, to: (f64, f64, f64)) -> String {
    let t = t.clamp(0.0, 1.0);
    let c = |v: f64| (255.0 + t * (v - 255.0)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(to.0), c(to.1), c(to.2))
}

fn cell_text(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e7 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

impl Heatmap {
    pub fn render(&self) -> String {
        let (cw, ch) = (84.0, 34.0);
        let (left, top) = (120.0, 70.0);
        let w = left + cw * self.cols.len() as f64 + 30.0;
        let h = top + ch * self.rows.len() as f64 + 50.0;
        let finite: Vec<f64> = self.values.iter().flatten().flatten().copied().filter(|v| v.is_finite() && *v > 0.0).collect();
        let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v.ln()), b.max(v.ln())));
        let color = |v: f64| -> String {
            if !(v.is_finite() && v > 0.0) {
                return "#bbbbbb".into();
            }
            match self.scale {
                ColorScale::Ratio => {
                    let t = v.log2();
                    if t < 0.0 {
                        blend(-t, (49.0, 104.0, 181.0))
                    } else {
                        blend(t, (200.0, 40.0, 40.0))
                    }
                }
                ColorScale::Magnitude => {
                    let t = if hi > lo { (v.ln() - lo) / (hi - lo) } else { 0.5 };
                    blend(0.15 + 0.7 * t, (31.0, 80.0, 160.0))
                }
            }
        };

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="16" {FONT}>{}</text>"#,
            w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="48" text-anchor="middle" font-size="12" {FONT}>{}</text>"#,
            left + cw * self.cols.len() as f64 / 2.0,
            escape(&self.col_label)
        );
        for (j, c) in self.cols.iter().enumerate() {
            let x = left + cw * (j as f64 + 0.5);
            let _ =
                writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle" font-size="12" {FONT}>{}</text>"#, top - 6.0, escape(c));
        }
        for (i, r) in self.rows.iter().enumerate() {
            let y = top + ch * i as f64;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end" font-size="12" {FONT}>{}</text>"#,
                left - 8.0,
                y + ch / 2.0 + 4.0,
                escape(r)
            );
            for j in 0..self.cols.len() {
                let x = left + cw * j as f64;
                let v = self.values.get(i).and_then(|row| row.get(j)).copied().flatten();
                let (fill, text) = match v {
                    Some(v) => (color(v), cell_text(v)),
                    None => ("#bbbbbb".into(), "n/a".into()),
                };
                let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="white"/>"#);
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" {FONT}>{text}</text>"#,
                    x + cw / 2.0,
                    y + ch / 2.0 + 4.0
                );
            }
        }
        let _ = writeln!(s, r#"<text x="14" y="{}" font-size="12" {FONT}>{}</text>"#, top - 6.0, escape(&self.row_label));
        s.push_str("</svg>\n");
        s
    }
}
