//! Self-contained SVG charts. Each file carries its plotted data as a CSV
//! block inside a leading comment.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Comment bodies may not contain `--`.
fn data_comment(csv: &str) -> String {
    format!("<!-- data\n{}-->\n", csv.replace("--", "- -"))
}

fn open(out: &mut String, csv: &str, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    out.push_str(&data_comment(csv));
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/><text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axis_labels(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, x1, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (TOP + y1) / 2.0,
        (TOP + y1) / 2.0,
        escape(y_label)
    );
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        return (lo - 0.5, lo + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log2_x: bool,
    pub series: Vec<Series>,
}

impl LineChart {
    pub fn render(&self) -> String {
        let mut csv = String::from("series,x,y\n");
        for s in &self.series {
            for (x, y) in &s.points {
                let _ = writeln!(csv, "{},{x},{y}", s.name);
            }
        }
        let mut out = String::new();
        open(&mut out, &csv, &self.title);
        let tx = |x: f64| if self.log2_x { x.max(f64::MIN_POSITIVE).log2() } else { x };
        let all: Vec<(f64, f64)> = self.series.iter().flat_map(|s| s.points.iter().copied()).collect();
        if all.is_empty() {
            out.push_str("</svg>\n");
            return out;
        }
        let fold = |f: fn(f64, f64) -> f64, init: f64, pick: &dyn Fn(&(f64, f64)) -> f64| {
            all.iter().map(pick).fold(init, f)
        };
        let (xmin, xmax) = nice_range(
            fold(f64::min, f64::INFINITY, &|p| tx(p.0)),
            fold(f64::max, f64::NEG_INFINITY, &|p| tx(p.0)),
        );
        let (ymin, ymax) = nice_range(
            fold(f64::min, f64::INFINITY, &|p| p.1),
            fold(f64::max, f64::NEG_INFINITY, &|p| p.1),
        );
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let px = |x: f64| x0 + (tx(x) - xmin) / (xmax - xmin) * (x1 - x0);
        let py = |y: f64| y1 - (y - ymin) / (ymax - ymin) * (y1 - y0);
        let _ = writeln!(
            out,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
        for i in 0..=4 {
            let y = ymin + (ymax - ymin) * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r##"<line x1="{x0}" x2="{x1}" y1="{py:.1}" y2="{py:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{y:.3}</text>"##,
                x0 - 5.0,
                py(y) + 4.0,
                py = py(y)
            );
        }
        let mut xs: Vec<f64> = all.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        for x in xs {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#,
                px(x),
                y1 + 16.0
            );
        }
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                pts.join(" ")
            );
            for &(x, y) in &s.points {
                let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(x), py(y));
            }
            let ly = y0 + 10.0 + 18.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
                x1 + 10.0,
                ly - 10.0,
                x1 + 28.0,
                ly,
                escape(&s.name)
            );
        }
        axis_labels(&mut out, &self.x_label, &self.y_label);
        out.push_str("</svg>\n");
        out
    }
}

/// Cells keyed by integer coordinates; absent cells are left blank.
#[derive(Clone, Debug)]
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// `(x, y, value, count)`, values in [0, 1].
    pub cells: Vec<(i64, i64, f64, usize)>,
}

fn shade(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 * (1.0 - v) + 33.0 * v).round() as u8;
    let g = (255.0 * (1.0 - v) + 102.0 * v).round() as u8;
    let b = (255.0 * (1.0 - v) + 172.0 * v).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

impl Heatmap {
    pub fn render(&self) -> String {
        let mut csv = String::from("x,y,value,count\n");
        for (x, y, v, n) in &self.cells {
            let _ = writeln!(csv, "{x},{y},{v},{n}");
        }
        let mut out = String::new();
        open(&mut out, &csv, &self.title);
        if let (Some(xmin), Some(xmax), Some(ymin), Some(ymax)) = (
            self.cells.iter().map(|c| c.0).min(),
            self.cells.iter().map(|c| c.0).max(),
            self.cells.iter().map(|c| c.1).min(),
            self.cells.iter().map(|c| c.1).max(),
        ) {
            let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
            let cw = (x1 - x0) / (xmax - xmin + 1) as f64;
            let ch = (y1 - y0) / (ymax - ymin + 1) as f64;
            for &(x, y, v, _) in &self.cells {
                let cx = x0 + (x - xmin) as f64 * cw;
                let cy = y1 - (y - ymin + 1) as f64 * ch;
                let _ = writeln!(
                    out,
                    r#"<rect x="{cx:.1}" y="{cy:.1}" width="{cw:.1}" height="{ch:.1}" fill="{}"><title>{x},{y}: {v:.3}</title></rect>"#,
                    shade(v)
                );
            }
            for x in xmin..=xmax {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#,
                    x0 + (x - xmin) as f64 * cw + cw / 2.0,
                    y1 + 16.0
                );
            }
            for y in ymin..=ymax {
                let _ = writeln!(
                    out,
                    r#"<text x="{}" y="{:.1}" text-anchor="end">{y}</text>"#,
                    x0 - 5.0,
                    y1 - (y - ymin) as f64 * ch - ch / 2.0 + 4.0
                );
            }
            for (i, v) in [0.0, 0.5, 1.0].iter().enumerate() {
                let ly = y0 + 20.0 * i as f64;
                let _ = writeln!(
                    out,
                    r##"<rect x="{}" y="{ly}" width="14" height="14" fill="{}" stroke="#999"/><text x="{}" y="{}">{v}</text>"##,
                    x1 + 10.0,
                    shade(*v),
                    x1 + 30.0,
                    ly + 12.0
                );
            }
        }
        axis_labels(&mut out, &self.x_label, &self.y_label);
        out.push_str("</svg>\n");
        out
    }
}

/// Grouped bars: one group per category, one bar per series.
#[derive(Clone, Debug)]
pub struct BarChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub categories: Vec<String>,
    pub series: Vec<(String, Vec<f64>)>,
}

impl BarChart {
    pub fn render(&self) -> String {
        let mut csv = String::from("series,category,value\n");
        for (name, vals) in &self.series {
            for (c, v) in self.categories.iter().zip(vals) {
                let _ = writeln!(csv, "{name},{c},{v}");
            }
        }
        let mut out = String::new();
        open(&mut out, &csv, &self.title);
        let vals: Vec<f64> = self.series.iter().flat_map(|s| s.1.iter().copied()).collect();
        if !vals.is_empty() && !self.categories.is_empty() {
            let lo = vals.iter().copied().fold(0.0, f64::min);
            let hi = vals.iter().copied().fold(0.0, f64::max);
            let (lo, hi) = if hi > lo { (lo, hi) } else { (lo, lo + 1.0) };
            let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
            let py = |y: f64| y1 - (y - lo) / (hi - lo) * (y1 - y0);
            let gw = (x1 - x0) / self.categories.len() as f64;
            let bw = 0.8 * gw / self.series.len().max(1) as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{x0}" x2="{x1}" y1="{z:.1}" y2="{z:.1}" stroke="black"/>"#,
                z = py(0.0)
            );
            for i in 0..=4 {
                let y = lo + (hi - lo) * i as f64 / 4.0;
                let _ = writeln!(
                    out,
                    r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.3}</text>"#,
                    x0 - 5.0,
                    py(y) + 4.0
                );
            }
            for (ci, c) in self.categories.iter().enumerate() {
                let gx = x0 + gw * ci as f64 + 0.1 * gw;
                for (si, (_, v)) in self.series.iter().enumerate() {
                    let Some(&v) = v.get(ci) else { continue };
                    let (top, h) = if v >= 0.0 { (py(v), py(0.0) - py(v)) } else { (py(0.0), py(v) - py(0.0)) };
                    let _ = writeln!(
                        out,
                        r#"<rect x="{:.1}" y="{top:.1}" width="{bw:.1}" height="{h:.1}" fill="{}"><title>{}: {v:.4}</title></rect>"#,
                        gx + bw * si as f64,
                        PALETTE[si % PALETTE.len()],
                        escape(c)
                    );
                }
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
                    gx + 0.4 * gw,
                    y1 + 16.0,
                    escape(c)
                );
            }
            for (si, (name, _)) in self.series.iter().enumerate() {
                let ly = y0 + 10.0 + 18.0 * si as f64;
                let _ = writeln!(
                    out,
                    r#"<rect x="{}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                    x1 + 10.0,
                    ly - 10.0,
                    PALETTE[si % PALETTE.len()],
                    x1 + 28.0,
                    ly,
                    escape(name)
                );
            }
        }
        axis_labels(&mut out, &self.x_label, &self.y_label);
        out.push_str("</svg>\n");
        out
    }
}
