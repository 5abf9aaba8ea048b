//! Line charts with confidence bands as standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use purl_core::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// One CSV and the name its series appear under.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartInput {
    pub label: String,
    pub path: std::path::PathBuf,
}

impl ChartInput {
    /// Labels a file by its parent directory, which is where `run` puts it.
    pub fn from_path(path: &Path) -> Self {
        let label = path
            .parent()
            .and_then(|p| p.file_name())
            .or_else(|| path.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self { label, path: path.to_path_buf() }
    }
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
    band: Option<Vec<(f64, f64, f64)>>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r.records().map(|rec| rec.map(|r| r.iter().map(str::to_string).collect())).collect::<Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn cell(row: &[String], i: usize) -> Option<f64> {
        row.get(i).and_then(|v| v.parse().ok())
    }
}

/// Reads every `y` column (or its `_mean/_lo/_hi` triple) against `x` from
/// each input and writes a line chart. Missing columns are a usage error.
pub fn emit_chart(inputs: &[ChartInput], x: &str, ys: &[&str], out: &Path) -> Result<()> {
    if inputs.is_empty() || ys.is_empty() {
        return Err(Error::usage("a chart needs at least one input and one y column"));
    }
    let mut series = Vec::new();
    for input in inputs {
        let table = Table::read(&input.path)?;
        let missing = |c: &str| Error::usage(format!("{} has no column {c:?}", input.path.display()));
        let xi = table.index(x).ok_or_else(|| missing(x))?;
        for &y in ys {
            let name = if ys.len() == 1 { input.label.clone() } else { format!("{} {y}", input.label) };
            let s = if let Some(mi) = table.index(&format!("{y}_mean")) {
                let lo = table.index(&format!("{y}_lo")).ok_or_else(|| missing(&format!("{y}_lo")))?;
                let hi = table.index(&format!("{y}_hi")).ok_or_else(|| missing(&format!("{y}_hi")))?;
                let band: Vec<(f64, f64, f64)> = table
                    .rows
                    .iter()
                    .filter_map(|r| Some((Table::cell(r, xi)?, Table::cell(r, lo)?, Table::cell(r, hi)?)))
                    .collect();
                let points = table.rows.iter().filter_map(|r| Some((Table::cell(r, xi)?, Table::cell(r, mi)?))).collect();
                Series { name, points, band: Some(band) }
            } else {
                let yi = table.index(y).ok_or_else(|| missing(y))?;
                let points = table.rows.iter().filter_map(|r| Some((Table::cell(r, xi)?, Table::cell(r, yi)?))).collect();
                Series { name, points, band: None }
            };
            series.push(s);
        }
    }
    let title = ys.join(", ");
    std::fs::write(out, render(&series, x, &title))?;
    Ok(())
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn render(series: &[Series], x_label: &str, title: &str) -> String {
    let (x0, x1) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = extent(series.iter().flat_map(|s| {
        let band = s.band.iter().flatten().flat_map(|b| [b.1, b.2]);
        s.points.iter().map(|p| p.1).chain(band)
    }));
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |v: f64| LEFT + (v - x0) / (x1 - x0) * pw;
    let sy = |v: f64| TOP + ph - (v - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<g class="axes" stroke="black">"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#, TOP + ph, LEFT + pw, TOP + ph);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/>"#, TOP + ph);
    let _ = writeln!(s, "</g>");
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text class="xtick" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(xv),
            TOP + ph + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text class="ytick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if let Some(band) = ser.band.as_ref().filter(|b| !b.is_empty()) {
            let mut d = String::new();
            for (i, (x, _, hi)) in band.iter().enumerate() {
                let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, sx(*x), sy(*hi));
            }
            for (x, lo, _) in band.iter().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", sx(*x), sy(*lo));
            }
            let _ = writeln!(s, r#"<path class="band" d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, d);
        }
        let pts: Vec<String> = ser.points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text class="legend" x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
