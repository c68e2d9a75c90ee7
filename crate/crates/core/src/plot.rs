//! Dependency-free SVG renderers for the figures the lab produces: line
//! plots (loss curves, emergence traces), grayscale heatmaps (attention
//! maps), and bar charts (benchmark accuracy). Every renderer has a CSV
//! twin so the plotted numbers stay machine-readable.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlotError {
    #[error("nothing to plot: {0}")]
    Empty(&'static str),
    #[error("series {name}: {len_x} x values but {len_y} y values")]
    Ragged {
        name: String,
        len_x: usize,
        len_y: usize,
    },
    #[error("csv line {line}: {detail}")]
    Csv { line: usize, detail: String },
    #[error("{path}: {err}")]
    Io { path: String, err: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PlotSeries {
    pub fn new(name: impl Into<String>, points: &[(f64, f64)]) -> Self {
        PlotSeries {
            name: name.into(),
            x: points.iter().map(|p| p.0).collect(),
            y: points.iter().map(|p| p.1).collect(),
        }
    }

    fn check(&self) -> Result<(), PlotError> {
        if self.x.len() != self.y.len() {
            return Err(PlotError::Ragged {
                name: self.name.clone(),
                len_x: self.x.len(),
                len_y: self.y.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<PlotSeries>,
    pub log_y: bool,
    /// Horizontal dashed reference lines (thresholds, chance baselines).
    pub hlines: Vec<(String, f64)>,
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const ML: f64 = 72.0;
const MR: f64 = 24.0;
const MT: f64 = 40.0;
const MB: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Smallest positive y drawn on a log axis; values at or below zero are
/// clamped here so a loss that touches 0.0 stays plottable.
const LOG_FLOOR: f64 = 1e-12;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct YScale {
    log: bool,
    min: f64,
    max: f64,
}

impl YScale {
    fn transform(&self, v: f64) -> f64 {
        if self.log {
            v.max(LOG_FLOOR).log10()
        } else {
            v
        }
    }

    fn to_px(&self, v: f64) -> f64 {
        let t = self.transform(v);
        let frac = (t - self.min) / (self.max - self.min);
        H - MB - frac * (H - MT - MB)
    }

    fn tick_label(&self, t: f64) -> String {
        let v = if self.log { 10f64.powf(t) } else { t };
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

pub fn render_line_svg(plot: &LinePlot) -> Result<String, PlotError> {
    if plot.series.is_empty() {
        return Err(PlotError::Empty("no series"));
    }
    for s in &plot.series {
        s.check()?;
    }
    let points: usize = plot.series.iter().map(|s| s.x.len()).sum();
    if points == 0 {
        return Err(PlotError::Empty("series have no points"));
    }

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    for s in &plot.series {
        for &x in &s.x {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
        }
    }
    if xmin == xmax {
        xmin -= 0.5;
        xmax += 0.5;
    }

    let mut scale = YScale {
        log: plot.log_y,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };
    let see = |v: f64, scale: &mut YScale| {
        let t = scale.transform(v);
        scale.min = scale.min.min(t);
        scale.max = scale.max.max(t);
    };
    for s in &plot.series {
        for &y in &s.y {
            see(y, &mut scale);
        }
    }
    for (_, y) in &plot.hlines {
        see(*y, &mut scale);
    }
    if scale.min == scale.max {
        scale.min -= 0.5;
        scale.max += 0.5;
    } else {
        let pad = 0.05 * (scale.max - scale.min);
        scale.min -= pad;
        scale.max += pad;
    }

    let x_px = |x: f64| ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{W}" height="{H}" fill="white"/><text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        esc(&plot.title)
    );

    // axes
    let _ = write!(
        svg,
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{}" stroke="black"/><line x1="{ML}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        H - MB,
        W - MR,
        y0 = H - MB,
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (ML + W - MR) / 2.0,
        H - 12.0,
        esc(&plot.x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        (MT + H - MB) / 2.0,
        esc(&plot.y_label),
        y = (MT + H - MB) / 2.0,
    );

    // ticks
    const TICKS: usize = 5;
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let xv = xmin + f * (xmax - xmin);
        let xp = x_px(xv);
        let _ = write!(
            svg,
            r#"<line x1="{xp}" y1="{y0}" x2="{xp}" y2="{}" stroke="black"/><text x="{xp}" y="{}" text-anchor="middle">{}</text>"#,
            H - MB + 5.0,
            H - MB + 18.0,
            format!("{xv:.3}")
                .trim_end_matches('0')
                .trim_end_matches('.'),
            y0 = H - MB,
        );
        let tv = scale.min + f * (scale.max - scale.min);
        let yp = H - MB - f * (H - MT - MB);
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{yp}" x2="{ML}" y2="{yp}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            ML - 5.0,
            ML - 8.0,
            yp + 4.0,
            scale.tick_label(tv)
        );
    }

    // reference lines
    for (label, y) in &plot.hlines {
        let yp = scale.to_px(*y);
        let _ = write!(
            svg,
            r##"<line x1="{ML}" y1="{yp}" x2="{}" y2="{yp}" stroke="#555" stroke-dasharray="6 4"/><text x="{}" y="{}" text-anchor="end" fill="#555">{}</text>"##,
            W - MR,
            W - MR - 4.0,
            yp - 4.0,
            esc(label)
        );
    }

    // series
    for (si, s) in plot.series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let pts: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .map(|(&x, &y)| format!("{:.2},{:.2}", x_px(x), scale.to_px(y)))
            .collect();
        let _ = write!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        if s.x.len() <= 64 {
            for p in &pts {
                let (px, py) = p.split_once(',').unwrap();
                let _ = write!(svg, r#"<circle cx="{px}" cy="{py}" r="2.5" fill="{color}"/>"#);
            }
        }
        // legend entry
        let ly = MT + 16.0 * si as f64 + 8.0;
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - MR - 150.0,
            W - MR - 126.0,
            W - MR - 120.0,
            ly + 4.0,
            esc(&s.name)
        );
    }

    svg.push_str("</svg>");
    Ok(svg)
}

/// Long-form CSV of the plotted numbers: one `series,x,y` row per point.
pub fn series_csv(series: &[PlotSeries]) -> String {
    let mut out = String::from("series,x,y\n");
    for s in series {
        for (&x, &y) in s.x.iter().zip(&s.y) {
            let _ = writeln!(out, "{},{x},{y}", s.name.replace(',', ";"));
        }
    }
    out
}

/// Inverse of [`series_csv`]; series come back in first-appearance order.
pub fn parse_series_csv(text: &str) -> Result<Vec<PlotSeries>, PlotError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "series,x,y")) => {}
        other => {
            return Err(PlotError::Csv {
                line: 1,
                detail: format!("expected header 'series,x,y', got {:?}", other.map(|o| o.1)),
            })
        }
    }
    let mut order: Vec<PlotSeries> = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let bad = |detail: String| PlotError::Csv {
            line: i + 1,
            detail,
        };
        let mut parts = line.splitn(3, ',');
        let (name, x, y) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(x), Some(y)) => (n, x, y),
            _ => return Err(bad("expected 3 fields".into())),
        };
        let x: f64 = x.parse().map_err(|_| bad(format!("bad x {x:?}")))?;
        let y: f64 = y.parse().map_err(|_| bad(format!("bad y {y:?}")))?;
        let slot = match order.iter_mut().find(|s| s.name == name) {
            Some(s) => s,
            None => {
                order.push(PlotSeries {
                    name: name.to_string(),
                    x: vec![],
                    y: vec![],
                });
                order.last_mut().unwrap()
            }
        };
        slot.x.push(x);
        slot.y.push(y);
    }
    if order.is_empty() {
        return Err(PlotError::Empty("csv has no data rows"));
    }
    Ok(order)
}

/// Grayscale heatmap: value 0 renders white, 1 renders black; values are
/// clamped to [0,1] (attention weights already live there).
pub fn heatmap_svg(rows: usize, cols: usize, values: &[f64], title: &str) -> Result<String, PlotError> {
    if rows == 0 || cols == 0 || values.len() != rows * cols {
        return Err(PlotError::Empty("heatmap needs a full rows x cols matrix"));
    }
    let cell = (440.0 / rows.max(cols) as f64).clamp(3.0, 36.0);
    let ox = 40.0;
    let oy = 36.0;
    let w = ox + cols as f64 * cell + 16.0;
    let h = oy + rows as f64 * cell + 16.0;
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/><text x="{ox}" y="20">{}</text>"#,
        esc(title)
    );
    for i in 0..rows {
        for j in 0..cols {
            let v = values[i * cols + j].clamp(0.0, 1.0);
            let g = ((1.0 - v) * 255.0).round() as u8;
            let _ = write!(
                svg,
                r#"<rect x="{:.1}" y="{:.1}" width="{cell:.1}" height="{cell:.1}" fill="rgb({g},{g},{g})"/>"#,
                ox + j as f64 * cell,
                oy + i as f64 * cell,
            );
        }
    }
    let _ = write!(
        svg,
        r#"<rect x="{ox}" y="{oy}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        cols as f64 * cell,
        rows as f64 * cell
    );
    svg.push_str("</svg>");
    Ok(svg)
}

/// CSV twin of a heatmap: one comma-separated row of values per matrix row.
pub fn matrix_csv(rows: usize, cols: usize, values: &[f64]) -> String {
    let mut out = String::new();
    for i in 0..rows {
        let row: Vec<String> = (0..cols).map(|j| values[i * cols + j].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Vertical bar chart with dashed horizontal baselines (e.g. random-guess
/// accuracy per formulation).
pub fn bars_svg(
    title: &str,
    y_label: &str,
    bars: &[(String, f64)],
    baselines: &[(String, f64)],
) -> Result<String, PlotError> {
    if bars.is_empty() {
        return Err(PlotError::Empty("no bars"));
    }
    let top = bars
        .iter()
        .map(|b| b.1)
        .chain(baselines.iter().map(|b| b.1))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let ymax = (top * 1.1).max(1.0_f64.min(top * 1.5));
    let y_px = |v: f64| H - MB - (v / ymax) * (H - MT - MB);
    let slot = (W - ML - MR) / bars.len() as f64;
    let bw = slot * 0.6;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{W}" height="{H}" fill="white"/><text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    let _ = write!(
        svg,
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{y0}" stroke="black"/><line x1="{ML}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        W - MR,
        y0 = H - MB,
    );
    let _ = write!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        (MT + H - MB) / 2.0,
        esc(y_label),
        y = (MT + H - MB) / 2.0,
    );
    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let yp = y_px(v);
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{yp}" x2="{ML}" y2="{yp}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#,
            ML - 5.0,
            ML - 8.0,
            yp + 4.0
        );
    }
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = ML + slot * i as f64 + (slot - bw) / 2.0;
        let yp = y_px(*v);
        let _ = write!(
            svg,
            r#"<rect x="{x:.1}" y="{yp:.1}" width="{bw:.1}" height="{:.1}" fill="{}"/>"#,
            (H - MB - yp).max(0.0),
            PALETTE[0]
        );
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x + bw / 2.0,
            H - MB + 18.0,
            esc(label)
        );
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.3}</text>"#,
            x + bw / 2.0,
            yp - 5.0
        );
    }
    for (label, v) in baselines {
        let yp = y_px(*v);
        let _ = write!(
            svg,
            r##"<line x1="{ML}" y1="{yp:.1}" x2="{}" y2="{yp:.1}" stroke="#555" stroke-dasharray="6 4"/><text x="{}" y="{:.1}" text-anchor="end" fill="#555">{}</text>"##,
            W - MR,
            W - MR - 4.0,
            yp - 4.0,
            esc(label)
        );
    }
    svg.push_str("</svg>");
    Ok(svg)
}

pub fn bars_csv(bars: &[(String, f64)], baselines: &[(String, f64)]) -> String {
    let mut out = String::from("label,value,kind\n");
    for (l, v) in bars {
        let _ = writeln!(out, "{},{v},bar", l.replace(',', ";"));
    }
    for (l, v) in baselines {
        let _ = writeln!(out, "{},{v},baseline", l.replace(',', ";"));
    }
    out
}

pub fn write_text(path: &Path, content: &str) -> Result<(), PlotError> {
    std::fs::write(path, content).map_err(|e| PlotError::Io {
        path: path.display().to_string(),
        err: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_series_two_points() {
        let plot = LinePlot {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![PlotSeries::new("a", &[(0.0, 1.0), (1.0, 2.0)])],
            ..Default::default()
        };
        let svg = render_line_svg(&plot).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap();
        let pts = &pts[..pts.find('"').unwrap()];
        assert_eq!(pts.split(' ').count(), 2, "two vertices: {pts}");
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>"));
        assert!(svg.matches("<line").count() >= 2, "axes are line elements");
    }

    #[test]
    fn empty_series_is_an_error() {
        assert!(matches!(
            render_line_svg(&LinePlot::default()),
            Err(PlotError::Empty(_))
        ));
        let plot = LinePlot {
            series: vec![PlotSeries::new("a", &[])],
            ..Default::default()
        };
        assert!(matches!(render_line_svg(&plot), Err(PlotError::Empty(_))));
    }

    #[test]
    fn ragged_series_rejected() {
        let plot = LinePlot {
            series: vec![PlotSeries {
                name: "a".into(),
                x: vec![1.0],
                y: vec![1.0, 2.0],
            }],
            ..Default::default()
        };
        assert!(matches!(render_line_svg(&plot), Err(PlotError::Ragged { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let series = vec![
            PlotSeries::new("loss, ic", &[(0.0, 1.5), (10.0, 0.25)]),
            PlotSeries::new("b", &[(3.0, -0.125)]),
        ];
        let text = series_csv(&series);
        let back = parse_series_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].name, "loss; ic"); // comma sanitized
        assert_eq!(back[0].x, series[0].x);
        assert_eq!(back[0].y, series[0].y);
        assert_eq!(back[1].x, series[1].x);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let err = parse_series_csv("series,x,y\na,1,2\na,nope,3\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(parse_series_csv("bogus\n").is_err());
    }

    #[test]
    fn log_axis_spaces_decades_evenly() {
        let plot = LinePlot {
            series: vec![PlotSeries::new("a", &[(0.0, 1.0), (1.0, 10.0), (2.0, 100.0)])],
            log_y: true,
            ..Default::default()
        };
        let svg = render_line_svg(&plot).unwrap();
        let pts = svg.split("points=\"").nth(1).unwrap();
        let pts = &pts[..pts.find('"').unwrap()];
        let ys: Vec<f64> = pts
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        let d1 = ys[0] - ys[1];
        let d2 = ys[1] - ys[2];
        assert!((d1 - d2).abs() < 0.05, "decades unevenly spaced: {ys:?}");
    }

    #[test]
    fn threshold_is_dashed() {
        let plot = LinePlot {
            series: vec![PlotSeries::new("a", &[(0.0, 0.2), (1.0, 0.8)])],
            hlines: vec![("0.5 threshold".into(), 0.5)],
            ..Default::default()
        };
        let svg = render_line_svg(&plot).unwrap();
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("0.5 threshold"));
    }

    #[test]
    fn heatmap_gray_levels() {
        let svg = heatmap_svg(2, 2, &[0.0, 1.0, 0.5, 0.25], "m").unwrap();
        assert!(svg.contains("rgb(255,255,255)"));
        assert!(svg.contains("rgb(0,0,0)"));
        assert!(svg.contains("rgb(128,128,128)"));
        assert!(svg.contains("rgb(191,191,191)"));
        assert!(heatmap_svg(2, 2, &[0.0; 3], "m").is_err());
        let csv = matrix_csv(2, 2, &[0.0, 1.0, 0.5, 0.25]);
        assert_eq!(csv, "0,1\n0.5,0.25\n");
    }

    #[test]
    fn bars_have_rects_and_dashed_baselines() {
        let bars = vec![("eq".to_string(), 0.9), ("kin".to_string(), 0.4)];
        let base = vec![("chance".to_string(), 0.25)];
        let svg = bars_svg("acc", "accuracy", &bars, &base).unwrap();
        // two bars plus the background rect
        assert_eq!(svg.matches("<rect").count(), 3);
        assert!(svg.contains("stroke-dasharray"));
        assert!(bars_svg("acc", "a", &[], &base).is_err());
        let csv = bars_csv(&bars, &base);
        assert!(csv.contains("eq,0.9,bar"));
        assert!(csv.contains("chance,0.25,baseline"));
    }
}
