//! Self-contained SVG plots. Every plot is written together with a `.csv`
//! companion holding exactly the values that were drawn.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{companion_path, create, csv_writer};
use crate::error::{Error, Result};
use crate::stats::{NullDistribution, SensitivityResult};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;

const BLUE: &str = "#1f77b4";
const YELLOW: &str = "#e6b400";
const RED: &str = "#d62728";

/// Largest number of points drawn on a cumulative curve.
pub const MAX_CDF_POINTS: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatterOrder {
    ByIndex,
    BySize,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Frame {
            x: widen(x),
            y: widen(y),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (-1.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = (hi - lo) * 0.04;
    (lo - pad, hi + pad)
}

fn finite_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last)
        .map(|i| if i == 0 { 0.0 } else { i as f64 * step })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn open_svg(title: &str, x_label: &str, y_label: &str, frame: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for t in nice_ticks(frame.x.0, frame.x.1, 8) {
        let px = frame.px(t);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 4.0,
            y0 + 18.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(frame.y.0, frame.y.1, 6) {
        let py = frame.py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{x1}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            x0,
            x0 - 6.0,
            py + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    s
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn legend(s: &mut String, entries: &[(&str, &str)]) {
    for (i, (color, label)) in entries.iter().enumerate() {
        let y = TOP + 14.0 + i as f64 * 16.0;
        let x = WIDTH - RIGHT - 150.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{x}" cy="{y}" r="4" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            x + 10.0,
            y + 4.0,
            escape(label)
        );
    }
}

fn write_svg(path: &Path, body: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Indices of the sorted sample drawn on the curve.
fn cdf_indices(n: usize) -> Vec<usize> {
    if n <= MAX_CDF_POINTS {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..MAX_CDF_POINTS)
        .map(|j| ((j as f64) * (n - 1) as f64 / (MAX_CDF_POINTS - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

#[derive(Serialize)]
struct CdfRow {
    kind: &'static str,
    x: f64,
    cdf: f64,
}

/// Empirical CDF of the null log-probabilities with the observed value marked.
pub fn emit_cumulative_plot(
    null: &NullDistribution,
    observed: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let n = null.log_p_samples.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty null distribution".into()));
    }
    let points: Vec<(f64, f64)> = cdf_indices(n)
        .into_iter()
        .map(|i| (null.log_p_samples[i], (i + 1) as f64 / n as f64))
        .collect();
    let observed_cdf = null.ecdf(observed);

    let data_path = companion_path(path);
    let mut w = csv_writer(&data_path)?;
    for &(x, cdf) in &points {
        w.serialize(CdfRow {
            kind: "null",
            x,
            cdf,
        })
        .map_err(|e| Error::csv(&data_path, e))?;
    }
    w.serialize(CdfRow {
        kind: "observed",
        x: observed,
        cdf: observed_cdf,
    })
    .map_err(|e| Error::csv(&data_path, e))?;
    w.flush().map_err(|e| Error::io(&data_path, e))?;

    let frame = Frame::new(
        finite_range(points.iter().map(|p| p.0).chain([observed])),
        (0.0, 1.0),
    );
    let mut s = open_svg(
        &format!("Null distribution ({n} samples)"),
        "log P(C | p_cat)",
        "cumulative fraction",
        &frame,
    );
    s.push_str(r#"<polyline fill="none" stroke=""#);
    s.push_str(YELLOW);
    s.push_str(r#"" stroke-width="1.5" points=""#);
    for &(x, cdf) in &points {
        let _ = write!(s, "{:.2},{:.2} ", frame.px(x), frame.py(cdf));
    }
    s.push_str("\"/>\n");
    if observed.is_finite() {
        let ox = frame.px(observed);
        let _ = writeln!(
            s,
            r#"<line x1="{ox:.2}" y1="{:.2}" x2="{ox:.2}" y2="{:.2}" stroke="{RED}" stroke-dasharray="4 3"/><circle cx="{ox:.2}" cy="{:.2}" r="5" fill="{RED}"/>"#,
            frame.py(0.0),
            frame.py(1.0),
            frame.py(observed_cdf)
        );
    }
    legend(&mut s, &[(YELLOW, "null samples"), (RED, "observed")]);
    s.push_str("</svg>\n");
    write_svg(path, &s)
}

#[derive(Serialize)]
struct ScatterRow {
    position: usize,
    cluster_id: usize,
    size: usize,
    observed_log_p: f64,
    null_min: f64,
    sensitive: bool,
}

/// Observed log-probability and null minimum of every cluster for one
/// attribute, ordered by cluster index or by cluster size.
pub fn emit_cluster_scatter(
    results: &[SensitivityResult],
    sizes: &[usize],
    order: ScatterOrder,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let attribute = results.first().map(|r| r.attribute.as_str()).unwrap_or("");
    if results.iter().any(|r| r.attribute != attribute) {
        return Err(Error::InvalidArgument(
            "scatter results mix attributes".into(),
        ));
    }
    let size_of = |r: &SensitivityResult| {
        sizes
            .get(r.cluster_id)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no size for cluster {}", r.cluster_id)))
    };
    let mut ordered: Vec<(&SensitivityResult, usize)> = results
        .iter()
        .map(|r| size_of(r).map(|s| (r, s)))
        .collect::<Result<_>>()?;
    match order {
        ScatterOrder::ByIndex => ordered.sort_by_key(|(r, _)| r.cluster_id),
        ScatterOrder::BySize => ordered.sort_by_key(|(r, s)| (*s, r.cluster_id)),
    }

    let data_path = companion_path(path);
    let mut w = csv_writer(&data_path)?;
    for (pos, (r, size)) in ordered.iter().enumerate() {
        w.serialize(ScatterRow {
            position: pos,
            cluster_id: r.cluster_id,
            size: *size,
            observed_log_p: r.observed_log_p,
            null_min: r.null_min,
            sensitive: r.sensitive,
        })
        .map_err(|e| Error::csv(&data_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&data_path, e))?;

    let frame = Frame::new(
        (0.0, ordered.len().saturating_sub(1) as f64),
        finite_range(
            ordered
                .iter()
                .flat_map(|(r, _)| [r.observed_log_p, r.null_min]),
        ),
    );
    let x_label = match order {
        ScatterOrder::ByIndex => "cluster index",
        ScatterOrder::BySize => "clusters ordered by size",
    };
    let mut s = open_svg(
        &format!("{attribute}: log P(C | p_cat) per cluster"),
        x_label,
        "log P",
        &frame,
    );
    for (pos, (r, _)) in ordered.iter().enumerate() {
        let x = frame.px(pos as f64);
        for (v, color) in [(r.null_min, YELLOW), (r.observed_log_p, BLUE)] {
            if v.is_finite() {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.2}" cy="{:.2}" r="2.5" fill="{color}"><title>cluster {}</title></circle>"#,
                    frame.py(v),
                    r.cluster_id
                );
            }
        }
    }
    legend(&mut s, &[(BLUE, "observed"), (YELLOW, "null minimum")]);
    s.push_str("</svg>\n");
    write_svg(path, &s)
}
