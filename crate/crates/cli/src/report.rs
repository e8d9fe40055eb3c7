//! CSV tables and the SVG plots drawn from them.
//!
//! Plots are rendered from parsed CSV text only, so a figure can never show
//! data that is missing from its table.

use std::fmt::Write as _;

use anyhow::{Context, Result};

/// A CSV table held as strings, in column order.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner()?)
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("table has no column {name:?}"))
    }

    /// Numeric column; entries that do not parse (censoring marks, blanks)
    /// are returned as `None`.
    pub fn floats(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let c = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[c].parse().ok()).collect())
    }

    pub fn strings(&self, name: &str) -> Result<Vec<String>> {
        let c = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[c].clone()).collect())
    }
}

/// Formats a float for a table: shortest round-trip form.
pub fn num(v: f64) -> String {
    format!("{v}")
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let widen = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = widen(x0, x1);
        let (y0, y1) = widen(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str, x_label: &str, y_label: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"11\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    );
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        "<path d=\"M{l} {t}V{b}H{r}\" fill=\"none\" stroke=\"black\"/>"
    );
    for k in 0..=4 {
        let xv = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let yv = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            f.px(xv),
            b + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            l - 4.0,
            f.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, n) in names.iter().enumerate() {
        let y = MARGIN + 4.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\
             <text x=\"{}\" y=\"{}\">{}</text>",
            WIDTH - MARGIN - 120.0,
            y - 9.0,
            colour(i),
            WIDTH - MARGIN - 106.0,
            y,
            escape(n)
        );
    }
}

/// Line plot with one polyline per series.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let f = Frame::new(x0, x1, y0.min(0.0), y1);
    let mut s = open(title, x_label, y_label, &f);
    for (i, (_, p)) in series.iter().enumerate() {
        if p.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (k, &(x, y)) in p.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if k == 0 { "M" } else { "L" }, f.px(x), f.py(y));
        }
        let _ = writeln!(s, "<path d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>", colour(i));
    }
    let names: Vec<&str> = series.iter().map(|(n, _)| n.as_str()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Overlaid histograms sharing one set of bin edges.
pub fn histogram_plot(title: &str, x_label: &str, edges: &[f64], groups: &[(String, Vec<f64>)]) -> String {
    let top = groups
        .iter()
        .flat_map(|(_, c)| c.iter().copied())
        .fold(0.0, f64::max);
    let (lo, hi) = match (edges.first(), edges.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0.0, 1.0),
    };
    let f = Frame::new(lo, hi, 0.0, top.max(1.0));
    let mut s = open(title, x_label, "count", &f);
    for (i, (_, counts)) in groups.iter().enumerate() {
        for (k, &c) in counts.iter().enumerate() {
            if c <= 0.0 || k + 1 >= edges.len() {
                continue;
            }
            let (xa, xb) = (f.px(edges[k]), f.px(edges[k + 1]));
            let (ya, yb) = (f.py(c), f.py(0.0));
            let _ = writeln!(
                s,
                "<rect x=\"{xa:.2}\" y=\"{ya:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\" fill-opacity=\"0.5\"/>",
                (xb - xa).max(0.5),
                yb - ya,
                colour(i)
            );
        }
    }
    let names: Vec<&str> = groups.iter().map(|(n, _)| n.as_str()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Equal-width bins over `[lo, hi]` and per-group counts.
pub fn bin(values: &[(String, Vec<f64>)], lo: f64, hi: f64, bins: usize) -> (Vec<f64>, Vec<(String, Vec<f64>)>) {
    let edges: Vec<f64> = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
    let groups = values
        .iter()
        .map(|(name, vs)| {
            let mut c = vec![0.0; bins];
            for &v in vs {
                if hi > lo && v >= lo && v <= hi {
                    let k = (((v - lo) / (hi - lo)) * bins as f64) as usize;
                    c[k.min(bins - 1)] += 1.0;
                }
            }
            (name.clone(), c)
        })
        .collect();
    (edges, groups)
}

/// Angles on a unit quarter circle: angle θ is drawn at (cos θ, sin θ),
/// so π/2 (orthogonal incidence) sits at the top.
pub fn quarter_circle(title: &str, groups: &[(String, Vec<f64>)]) -> String {
    let f = Frame::new(0.0, 1.05, 0.0, 1.05);
    let mut s = open(title, "cos(angle)", "sin(angle)", &f);
    let mut arc = String::new();
    for k in 0..=90 {
        let a = std::f64::consts::FRAC_PI_2 * k as f64 / 90.0;
        let _ = write!(arc, "{}{:.2} {:.2}", if k == 0 { "M" } else { "L" }, f.px(a.cos()), f.py(a.sin()));
    }
    let _ = writeln!(s, "<path d=\"{arc}\" fill=\"none\" stroke=\"#999\"/>");
    for (i, (_, angles)) in groups.iter().enumerate() {
        for &a in angles {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.6\"/>",
                f.px(a.cos()),
                f.py(a.sin()),
                colour(i)
            );
        }
    }
    let names: Vec<&str> = groups.iter().map(|(n, _)| n.as_str()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Groups the float column `value` by the string column `key`, skipping
/// entries that do not parse. Group order follows first appearance.
pub fn group_by(table: &Table, key: &str, value: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let keys = table.strings(key)?;
    let vals = table.floats(value)?;
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for (k, v) in keys.into_iter().zip(vals) {
        let Some(v) = v else { continue };
        match out.iter_mut().find(|(n, _)| *n == k) {
            Some((_, vs)) => vs.push(v),
            None => out.push((k, vec![v])),
        }
    }
    Ok(out)
}
