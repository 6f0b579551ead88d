//! Minimal SVG line and scatter plots for the CSV outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 8] = [
    "#1f4e8c", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#16a085", "#7f8c8d", "#2c3e50",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Lines,
    Markers,
}

fn bounds(series: &[Series]) -> ([f64; 2], [f64; 2]) {
    let (mut x, mut y) = ([f64::INFINITY, f64::NEG_INFINITY], [f64::INFINITY, f64::NEG_INFINITY]);
    for (a, b) in series.iter().flat_map(|s| s.points.iter()) {
        if a.is_finite() && b.is_finite() {
            x = [x[0].min(*a), x[1].max(*a)];
            y = [y[0].min(*b), y[1].max(*b)];
        }
    }
    let widen = |r: [f64; 2]| {
        if !r[0].is_finite() {
            [0.0, 1.0]
        } else if r[1] - r[0] < 1e-12 * (1.0 + r[0].abs()) {
            [r[0] - 0.5, r[1] + 0.5]
        } else {
            r
        }
    };
    (widen(x), widen(y))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render series on shared linear axes.
pub fn render(title: &str, xlabel: &str, ylabel: &str, series: &[Series], style: Style) -> String {
    let (xr, yr) = bounds(series);
    let sx = |x: f64| PAD + (x - xr[0]) / (xr[1] - xr[0]) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - yr[0]) / (yr[1] - yr[0]) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = xr[0] + t * (xr[1] - xr[0]);
        let yv = yr[0] + t * (yr[1] - yr[0]);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.4}</text>"#,
            sx(xv),
            H - PAD + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.4}</text>"#,
            PAD - 4.0,
            sy(yv) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        esc(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    );
    for (k, ser) in series.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64)> = ser
            .points
            .iter()
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|&(a, b)| (sx(a), sy(b)))
            .collect();
        if style == Style::Lines && pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        for (a, b) in &pts {
            let _ = writeln!(s, r#"<circle cx="{a:.2}" cy="{b:.2}" r="2.5" fill="{c}"/>"#);
        }
        if series.len() <= 12 {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{c}">{}</text>"#,
                W - PAD + 4.0 - 120.0,
                PAD + 14.0 * (k as f64 + 1.0),
                esc(&ser.label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Plot a CSV produced by the runner.
///
/// `q0,q1,...` tables become scatter plots; files with a `seed` column get one
/// series per seed; otherwise the first column is the abscissa and every other
/// numeric column a series.
pub fn plot_csv(path: &Path) -> Result<String, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() || headers.len() < 2 {
        return Err(CliError::Usage(format!(
            "{}: need a header and at least one row with two columns",
            path.display()
        )));
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let num = |r: &Vec<String>, c: usize| r.get(c).and_then(|v| v.parse::<f64>().ok());
    let numeric: Vec<usize> = (0..headers.len())
        .filter(|&c| rows.iter().all(|r| num(r, c).is_some()))
        .collect();
    let title = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();

    if let (Some(a), Some(b)) = (col("q0"), col("q1")) {
        let flag = col("extreme").or(col("member"));
        let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for r in &rows {
            let key = flag.map_or("q".to_string(), |c| format!("{}={}", headers[c], r[c]));
            if let (Some(x), Some(y)) = (num(r, a), num(r, b)) {
                groups.entry(key).or_default().push((x, y));
            }
        }
        let series: Vec<Series> = groups.into_iter().map(|(k, v)| Series::new(k, v)).collect();
        return Ok(render(&title, "q0", "q1", &series, Style::Markers));
    }

    if let Some(sc) = col("seed") {
        let x = col("delta").unwrap_or(numeric[0]);
        let y = *numeric.iter().rev().find(|&&c| c != sc && c != x).unwrap_or(&x);
        let mut groups: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
        for r in &rows {
            let seed = r[sc].parse().unwrap_or(0);
            if let (Some(a), Some(b)) = (num(r, x), num(r, y)) {
                groups.entry(seed).or_default().push((a, b));
            }
        }
        let series: Vec<Series> = groups
            .into_iter()
            .map(|(k, v)| Series::new(format!("seed {k}"), v))
            .collect();
        return Ok(render(&title, &headers[x], &headers[y], &series, Style::Lines));
    }

    let x = *numeric
        .first()
        .ok_or_else(|| CliError::Usage(format!("{}: no numeric column", path.display())))?;
    let series: Vec<Series> = numeric
        .iter()
        .filter(|&&c| c != x)
        .map(|&c| {
            Series::new(
                headers[c].clone(),
                rows.iter().filter_map(|r| Some((num(r, x)?, num(r, c)?))).collect(),
            )
        })
        .collect();
    let ylabel = if series.len() == 1 { series[0].label.clone() } else { "value".into() };
    Ok(render(&title, &headers[x], &ylabel, &series, Style::Lines))
}
