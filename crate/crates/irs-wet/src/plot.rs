//! Minimal standalone SVG line charts from the runner's CSV tables. Never on
//! any correctness path; figures only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    pub series: Option<String>,
    pub title: Option<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub width: u32,
    pub height: u32,
}

impl PlotSpec {
    pub fn new(x: &str, y: &str) -> Self {
        PlotSpec {
            x: x.to_string(),
            y: y.to_string(),
            series: None,
            title: None,
            log_x: false,
            log_y: false,
            width: 720,
            height: 480,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("CSV is empty".into()))?;
    let headers: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(line.split(',').map(|s| s.trim().to_string()).collect());
    }
    Ok((headers, rows))
}

/// Round the raw span outward to pleasant tick positions.
fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let span = hi - lo;
    let raw_step = span / 5.0;
    let mag = 10f64.powf(raw_step.log10().floor());
    let norm = raw_step / mag;
    let step = mag * if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    let start = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = start;
    while t <= hi + 1e-12 * span {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let mut ticks = Vec::new();
    let mut d = lo.log10().floor() as i32;
    while 10f64.powi(d) <= hi * (1.0 + 1e-12) {
        let t = 10f64.powi(d);
        if t >= lo * (1.0 - 1e-12) {
            ticks.push(t);
        }
        d += 1;
    }
    if ticks.is_empty() {
        ticks.push(lo);
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders one line chart from the CSV to a standalone SVG file. Rows whose
/// x or y cell is not numeric (for example the mean/median aggregate rows
/// when x is the trial column) are skipped; with a log axis, nonpositive
/// values are skipped too.
pub fn emit_plot(csv_path: &Path, spec: &PlotSpec, out_path: &Path) -> Result<()> {
    let text = fs::read_to_string(csv_path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", csv_path.display())))?;
    let (headers, rows) = parse_csv(&text)?;
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Config(format!(
                "column '{name}' not found; available: {}",
                headers.join(", ")
            ))
        })
    };
    let xi = col(&spec.x)?;
    let yi = col(&spec.y)?;
    let si = match &spec.series {
        Some(name) => Some(col(name)?),
        None => None,
    };

    // series name -> polyline points, insertion-ordered
    let mut order: Vec<String> = Vec::new();
    let mut data: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for row in &rows {
        if row.len() != headers.len() {
            continue;
        }
        let (Ok(x), Ok(y)) = (row[xi].parse::<f64>(), row[yi].parse::<f64>()) else {
            continue;
        };
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        if (spec.log_x && x <= 0.0) || (spec.log_y && y <= 0.0) {
            continue;
        }
        let key = match si {
            Some(i) => row[i].clone(),
            None => String::new(),
        };
        if !data.contains_key(&key) {
            order.push(key.clone());
        }
        data.entry(key).or_default().push((x, y));
    }
    if data.is_empty() {
        return Err(Error::Degenerate(
            "no plottable numeric rows in the CSV".into(),
        ));
    }

    let all: Vec<(f64, f64)> = data.values().flatten().copied().collect();
    let (mut x_lo, mut x_hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
    let (mut y_lo, mut y_hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.1), hi.max(p.1))
        });
    if x_lo == x_hi {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if y_lo == y_hi {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    if !spec.log_y {
        let pad = 0.05 * (y_hi - y_lo);
        y_lo -= pad;
        y_hi += pad;
    }

    let (w, h) = (spec.width as f64, spec.height as f64);
    let (ml, mr, mt, mb) = (78.0, 24.0, 40.0, 56.0);
    let to_x = |x: f64| -> f64 {
        let t = if spec.log_x {
            (x.log10() - x_lo.log10()) / (x_hi.log10() - x_lo.log10())
        } else {
            (x - x_lo) / (x_hi - x_lo)
        };
        ml + t * (w - ml - mr)
    };
    let to_y = |y: f64| -> f64 {
        let t = if spec.log_y {
            (y.log10() - y_lo.log10()) / (y_hi.log10() - y_lo.log10())
        } else {
            (y - y_lo) / (y_hi - y_lo)
        };
        h - mb - t * (h - mt - mb)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {w} {h}">"#,
        spec.width, spec.height
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if let Some(title) = &spec.title {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
            w / 2.0,
            xml_escape(title)
        );
    }

    // frame
    let _ = writeln!(
        svg,
        r##"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="#333" stroke-width="1"/>"##,
        w - ml - mr,
        h - mt - mb
    );

    let x_ticks = if spec.log_x {
        log_ticks(x_lo, x_hi)
    } else {
        linear_ticks(x_lo, x_hi)
    };
    for t in &x_ticks {
        let px = to_x(*t);
        let _ = writeln!(
            svg,
            r##"<line x1="{px}" y1="{mt}" x2="{px}" y2="{}" stroke="#ddd" stroke-width="0.7"/>"##,
            h - mb
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            h - mb + 16.0,
            fmt_tick(*t)
        );
    }
    let y_ticks = if spec.log_y {
        log_ticks(y_lo, y_hi)
    } else {
        linear_ticks(y_lo, y_hi)
    };
    for t in &y_ticks {
        let py = to_y(*t);
        let _ = writeln!(
            svg,
            r##"<line x1="{ml}" y1="{py}" x2="{}" y2="{py}" stroke="#ddd" stroke-width="0.7"/>"##,
            w - mr
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            ml - 6.0,
            py + 4.0,
            fmt_tick(*t)
        );
    }

    // axis labels
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (ml + w - mr) / 2.0,
        h - 14.0,
        xml_escape(&spec.x)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
        xml_escape(&spec.y)
    );

    for (idx, key) in order.iter().enumerate() {
        let mut pts = data[key].clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = PALETTE[idx % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", to_x(*x), to_y(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            path.join(" ")
        );
    }

    // legend
    if spec.series.is_some() && order.len() > 1 {
        let lx = ml + 12.0;
        let mut ly = mt + 16.0;
        for (idx, key) in order.iter().enumerate() {
            let color = PALETTE[idx % PALETTE.len()];
            let _ = writeln!(
                svg,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                lx + 22.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{} = {}</text>"#,
                lx + 28.0,
                ly + 4.0,
                xml_escape(spec.series.as_deref().unwrap_or("")),
                xml_escape(key)
            );
            ly += 18.0;
        }
    }
    let _ = writeln!(svg, "</svg>");

    fs::write(out_path, svg)?;
    Ok(())
}
