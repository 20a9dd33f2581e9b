//! Learning-curve SVGs: across-seed mean with a ±1 standard-error band.
//!
//! Every directory under the given root that holds `seed_*.csv` files is
//! one series, labelled by its path relative to the root.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::run::CSV_HEADER;
use crate::stats;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// `metric → [(step, value)]` for one seed file.
pub type SeedMetrics = BTreeMap<String, Vec<(u64, f64)>>;

pub fn parse_csv(path: &Path, text: &str) -> Result<SeedMetrics> {
    let bad = |reason: String| HarnessError::Metrics {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad(format!("header must be {CSV_HEADER:?}")));
    }
    let mut out = SeedMetrics::new();
    for (i, line) in lines.enumerate() {
        let mut cols = line.split(',');
        let (Some(step), Some(metric), Some(value), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
            return Err(bad(format!("line {} does not have three columns", i + 2)));
        };
        let step: u64 = step.parse().map_err(|_| bad(format!("line {}: bad step {step:?}", i + 2)))?;
        let value: f64 = value.parse().map_err(|_| bad(format!("line {}: bad value {value:?}", i + 2)))?;
        out.entry(metric.to_string()).or_default().push((step, value));
    }
    Ok(out)
}

/// Series label → (seed file name → metrics).
pub type Collection = BTreeMap<String, BTreeMap<String, SeedMetrics>>;

pub fn collect(root: &Path) -> Result<Collection> {
    let mut out = Collection::new();
    visit(root, root, &mut out)?;
    if out.is_empty() {
        return Err(HarnessError::Empty(format!("no seed_*.csv files under {}", root.display())));
    }
    Ok(out)
}

fn visit(root: &Path, dir: &Path, out: &mut Collection) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if path.is_dir() {
            if name != "plots" {
                visit(root, &path, out)?;
            }
        } else if name.starts_with("seed_") && name.ends_with(".csv") {
            let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            let label = match dir.strip_prefix(root) {
                Ok(rel) if !rel.as_os_str().is_empty() => rel.display().to_string(),
                _ => root.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string(),
            };
            out.entry(label).or_default().insert(name, parse_csv(&path, &text)?);
        }
    }
    Ok(())
}

/// Mean and standard error per step; non-finite values are left out of
/// that step's statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Aggregates one metric of one series. Every seed must log the metric on
/// the same step grid.
pub fn aggregate(label: &str, seeds: &BTreeMap<String, SeedMetrics>, metric: &str) -> Result<Option<Curve>> {
    let present: Vec<(&String, &Vec<(u64, f64)>)> = seeds.iter().filter_map(|(f, m)| m.get(metric).map(|v| (f, v))).collect();
    let Some((_, reference)) = present.first() else {
        return Ok(None);
    };
    let grid: Vec<u64> = reference.iter().map(|p| p.0).collect();
    let offenders: Vec<String> = seeds
        .iter()
        .filter(|(_, m)| m.get(metric).is_none_or(|v| v.iter().map(|p| p.0).ne(grid.iter().copied())))
        .map(|(f, _)| format!("{label}/{f}"))
        .collect();
    if !offenders.is_empty() {
        return Err(HarnessError::StepGrid {
            metric: metric.to_string(),
            offenders,
        });
    }
    let mut mean = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let vals: Vec<f64> = present.iter().map(|(_, v)| v[i].1).filter(|x| x.is_finite()).collect();
        mean.push(stats::mean(&vals));
        stderr.push(if vals.is_empty() { f64::NAN } else { stats::stderr(&vals) });
    }
    Ok(Some(Curve {
        label: label.to_string(),
        steps: grid,
        mean,
        stderr,
    }))
}

pub fn render_svg(metric: &str, curves: &[Curve]) -> String {
    let points = || curves.iter().flat_map(|c| (0..c.steps.len()).map(move |i| (c.steps[i], c.mean[i], c.stderr[i])));
    let finite = || points().filter(|p| p.1.is_finite());
    let x_lo = finite().map(|p| p.0).min().unwrap_or(0) as f64;
    let x_hi = finite().map(|p| p.0).max().unwrap_or(1) as f64;
    let mut y_lo = finite().map(|p| p.1 - p.2).fold(f64::INFINITY, f64::min);
    let mut y_hi = finite().map(|p| p.1 + p.2).fold(f64::NEG_INFINITY, f64::max);
    if !y_lo.is_finite() || !y_hi.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if y_hi - y_lo < 1e-12 {
        (y_lo, y_hi) = (y_lo - 0.5, y_hi + 0.5);
    }
    let x_span = (x_hi - x_lo).max(1.0);
    let sx = |x: f64| MARGIN + (x - x_lo) / x_span * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(metric));
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
    );
    for (x, y, anchor, label) in [
        (left, bottom + 16.0, "start", format!("{x_lo}")),
        (right, bottom + 16.0, "end", format!("{x_hi}")),
        (left - 4.0, bottom, "end", format!("{y_lo:.4}")),
        (left - 4.0, top + 4.0, "end", format!("{y_hi:.4}")),
        (WIDTH / 2.0, HEIGHT - 12.0, "middle", "step".to_string()),
    ] {
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{label}</text>"#);
    }
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let idx: Vec<usize> = (0..c.steps.len()).filter(|i| c.mean[*i].is_finite()).collect();
        if idx.is_empty() {
            continue;
        }
        let upper = idx.iter().map(|&i| (sx(c.steps[i] as f64), sy(c.mean[i] + c.stderr[i])));
        let lower = idx.iter().rev().map(|&i| (sx(c.steps[i] as f64), sy(c.mean[i] - c.stderr[i])));
        let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = idx.iter().map(|&i| format!("{:.2},{:.2}", sx(c.steps[i] as f64), sy(c.mean[i]))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" text-anchor="end" fill="{color}">{}</text>"#,
            right - 4.0,
            escape(&c.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes one SVG per metric into `<root>/plots/` and returns their paths.
pub fn plot(root: &Path) -> Result<Vec<PathBuf>> {
    let collection = collect(root)?;
    let metrics: std::collections::BTreeSet<String> =
        collection.values().flat_map(|seeds| seeds.values().flat_map(|m| m.keys().cloned())).collect();
    let out_dir = root.join("plots");
    std::fs::create_dir_all(&out_dir).map_err(|e| HarnessError::io(&out_dir, e))?;
    let mut written = Vec::new();
    for metric in metrics {
        let mut curves = Vec::new();
        for (label, seeds) in &collection {
            if let Some(c) = aggregate(label, seeds, &metric)? {
                curves.push(c);
            }
        }
        let path = out_dir.join(format!("{metric}.svg"));
        std::fs::write(&path, render_svg(&metric, &curves)).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
