//! Box plots of per-frame errors and the SNR versus mean MAE curve, drawn as
//! plain SVG so output depends only on the input CSV.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use eittrack::sim::Method;

use crate::error::{CliError, CliResult};

const HEADER: [&str; 9] = [
    "method", "snr_db", "run", "frame", "true_x", "true_y", "pred_x", "pred_y", "err",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Per-frame errors grouped by SNR (descending) and method.
#[derive(Debug, Default)]
pub struct ResultsTable {
    snrs: Vec<f64>,
    /// (snr index, method) -> run -> errors
    errors: BTreeMap<(usize, Method), BTreeMap<usize, Vec<f64>>>,
}

impl ResultsTable {
    fn methods(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| self.errors.keys().any(|(_, k)| k == m))
            .collect()
    }

    fn frame_errors(&self, snr: usize, method: Method) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .errors
            .get(&(snr, method))
            .map(|runs| runs.values().flatten().copied().collect())
            .unwrap_or_default();
        all.sort_by(f64::total_cmp);
        all
    }

    /// Mean over runs of each run's mean error.
    fn mean_mae(&self, snr: usize, method: Method) -> Option<f64> {
        let runs = self.errors.get(&(snr, method))?;
        let total: f64 = runs
            .values()
            .map(|e| e.iter().sum::<f64>() / e.len() as f64)
            .sum();
        Some(total / runs.len() as f64)
    }
}

pub fn read_results(path: &Path) -> CliResult<ResultsTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(path, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::input(path, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(CliError::input(path, "empty file"));
    }
    if header.iter().ne(HEADER) {
        return Err(CliError::input(
            path,
            format!("row 1: expected header '{}'", HEADER.join(",")),
        ));
    }

    let mut raw: Vec<(f64, Method, usize, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| CliError::input(path, format!("row {row}: {e}")))?;
        let bad = |msg: String| CliError::input(path, format!("row {row}: {msg}"));
        let method: Method = record[0].parse().map_err(|e| bad(format!("{e}")))?;
        let snr: f64 = record[1]
            .parse()
            .map_err(|_| bad(format!("bad snr_db '{}'", &record[1])))?;
        let run: usize = record[2]
            .parse()
            .map_err(|_| bad(format!("bad run '{}'", &record[2])))?;
        let err: f64 = record[8]
            .parse()
            .map_err(|_| bad(format!("bad err '{}'", &record[8])))?;
        if snr.is_nan() || !err.is_finite() || err < 0.0 {
            return Err(bad(
                "snr_db must be a number and err finite and non-negative".into(),
            ));
        }
        raw.push((snr, method, run, err));
    }
    if raw.is_empty() {
        return Err(CliError::input(path, "no result rows"));
    }

    let mut snrs: Vec<f64> = raw.iter().map(|r| r.0).collect();
    snrs.sort_by(|a, b| b.total_cmp(a));
    snrs.dedup();
    let mut table = ResultsTable {
        snrs,
        ..ResultsTable::default()
    };
    for (snr, method, run, err) in raw {
        let si = table
            .snrs
            .iter()
            .position(|&s| s == snr)
            .expect("collected above");
        table
            .errors
            .entry((si, method))
            .or_default()
            .entry(run)
            .or_default()
            .push(err);
    }
    Ok(table)
}

fn snr_label(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        format!("{snr}")
    }
}

fn color(method: Method) -> &'static str {
    match method {
        Method::Jac => "#1f77b4",
        Method::Kf => "#d62728",
        Method::Hmm => "#2ca02c",
    }
}

/// Axis upper bound and tick spacing from the 1-2-5 series.
fn nice_axis(max: f64) -> (f64, f64) {
    let max = if max > 0.0 { max } else { 1.0 };
    let raw = max / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|f| f * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    ((max / step).ceil() * step, step)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

struct BoxStats {
    q1: f64,
    median: f64,
    q3: f64,
    low: f64,
    high: f64,
    outliers: Vec<f64>,
}

/// Tukey box: whiskers reach the most extreme data within 1.5 IQR.
fn box_stats(sorted: &[f64]) -> BoxStats {
    let (q1, median, q3) = (
        quantile(sorted, 0.25),
        quantile(sorted, 0.5),
        quantile(sorted, 0.75),
    );
    let fence = 1.5 * (q3 - q1);
    let low = sorted
        .iter()
        .copied()
        .find(|&v| v >= q1 - fence)
        .unwrap_or(q1);
    let high = sorted
        .iter()
        .rev()
        .copied()
        .find(|&v| v <= q3 + fence)
        .unwrap_or(q3);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < low || v > high)
        .collect();
    BoxStats {
        q1,
        median,
        q3,
        low,
        high,
        outliers,
    }
}

struct Frame {
    svg: String,
    y_max: f64,
}

impl Frame {
    fn new(title: &str, x_label: &str, y_label: &str, y_max: f64, y_step: f64) -> Self {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            svg,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{title}</text>"#,
            WIDTH / 2.0
        );
        let mut tick = 0.0;
        while tick <= y_max + 1e-9 * y_step {
            let y = frame_y(tick, y_max);
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
                WIDTH - RIGHT
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y + 4.0,
                fmt_tick(tick, y_step)
            );
            tick += y_step;
        }
        let _ = writeln!(
            svg,
            r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#,
            HEIGHT - BOTTOM
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{LEFT}" y1="{b:.2}" x2="{:.2}" y2="{b:.2}" stroke="black"/>"#,
            WIDTH - RIGHT,
            b = HEIGHT - BOTTOM
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#,
            LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
            HEIGHT - 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{c:.1}" text-anchor="middle" transform="rotate(-90 18 {c:.1})">{y_label}</text>"#,
            c = TOP + (HEIGHT - TOP - BOTTOM) / 2.0
        );
        Self { svg, y_max }
    }

    fn y(&self, value: f64) -> f64 {
        frame_y(value, self.y_max)
    }

    fn x_label(&mut self, x: f64, text: &str) {
        let _ = writeln!(
            self.svg,
            r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{text}</text>"#,
            HEIGHT - BOTTOM + 18.0
        );
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn frame_y(value: f64, y_max: f64) -> f64 {
    HEIGHT - BOTTOM - value / y_max * (HEIGHT - TOP - BOTTOM)
}

fn fmt_tick(value: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{value:.decimals$}")
}

fn box_plot(table: &ResultsTable, snr: usize, methods: &[Method]) -> String {
    let stats: Vec<(Method, BoxStats)> = methods
        .iter()
        .filter_map(|&m| {
            let errs = table.frame_errors(snr, m);
            (!errs.is_empty()).then(|| (m, box_stats(&errs)))
        })
        .collect();
    let top = stats
        .iter()
        .map(|(_, s)| s.outliers.last().copied().unwrap_or(s.high).max(s.high))
        .fold(0.0, f64::max);
    let (y_max, step) = nice_axis(top);
    let mut frame = Frame::new(
        &format!("Per-frame error at {} dB", snr_label(table.snrs[snr])),
        "method",
        "center distance",
        y_max,
        step,
    );
    let slot = (WIDTH - LEFT - RIGHT) / methods.len() as f64;
    let half = (slot * 0.3).min(40.0);
    for (i, (method, s)) in stats.iter().enumerate() {
        let pos = methods.iter().position(|m| m == method).unwrap_or(i);
        let cx = LEFT + slot * (pos as f64 + 0.5);
        let c = color(*method);
        let (y1, ym, y3, ylo, yhi) = (
            frame.y(s.q1),
            frame.y(s.median),
            frame.y(s.q3),
            frame.y(s.low),
            frame.y(s.high),
        );
        let svg = &mut frame.svg;
        let _ = writeln!(
            svg,
            r#"<line x1="{cx:.2}" y1="{yhi:.2}" x2="{cx:.2}" y2="{y3:.2}" stroke="{c}"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{cx:.2}" y1="{y1:.2}" x2="{cx:.2}" y2="{ylo:.2}" stroke="{c}"/>"#
        );
        for yw in [ylo, yhi] {
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{yw:.2}" x2="{:.2}" y2="{yw:.2}" stroke="{c}"/>"#,
                cx - half / 2.0,
                cx + half / 2.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{y3:.2}" width="{:.2}" height="{:.2}" fill="{c}" fill-opacity="0.25" stroke="{c}"/>"#,
            cx - half,
            2.0 * half,
            (y1 - y3).max(0.0)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ym:.2}" x2="{:.2}" y2="{ym:.2}" stroke="{c}" stroke-width="2"/>"#,
            cx - half,
            cx + half
        );
        // One marker per pixel row keeps large runs readable.
        let mut last_px = None;
        for &v in &s.outliers {
            let px = (frame_y(v, y_max) * 2.0).round() / 2.0;
            if last_px != Some(px) {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{cx:.2}" cy="{px:.2}" r="2" fill="none" stroke="{c}"/>"#
                );
                last_px = Some(px);
            }
        }
        frame.x_label(cx, method.name());
    }
    frame.finish()
}

fn line_plot(table: &ResultsTable, methods: &[Method]) -> String {
    let means: Vec<(Method, Vec<Option<f64>>)> = methods
        .iter()
        .map(|&m| {
            (
                m,
                (0..table.snrs.len())
                    .map(|s| table.mean_mae(s, m))
                    .collect(),
            )
        })
        .collect();
    let top = means
        .iter()
        .flat_map(|(_, v)| v.iter().flatten())
        .copied()
        .fold(0.0, f64::max);
    let (y_max, step) = nice_axis(top);
    let mut frame = Frame::new(
        "Mean error versus noise",
        "SNR (dB)",
        "mean absolute error",
        y_max,
        step,
    );
    let slot = (WIDTH - LEFT - RIGHT) / table.snrs.len() as f64;
    let x = |s: usize| LEFT + slot * (s as f64 + 0.5);
    for (s, &snr) in table.snrs.iter().enumerate() {
        frame.x_label(x(s), &snr_label(snr));
    }
    for (k, (method, values)) in means.iter().enumerate() {
        let c = color(*method);
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter_map(|(s, v)| v.map(|v| format!("{:.2},{:.2}", x(s), frame.y(v))))
            .collect();
        let _ = writeln!(
            frame.svg,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            points.join(" ")
        );
        for p in &points {
            let (px, py) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(
                frame.svg,
                r#"<circle cx="{px}" cy="{py}" r="3" fill="{c}"/>"#
            );
        }
        let ly = TOP + 14.0 * k as f64;
        let lx = WIDTH - RIGHT - 70.0;
        let _ = writeln!(
            frame.svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{c}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            method.name()
        );
    }
    frame.finish()
}

/// File name and SVG text for every plot, in a fixed order.
pub fn render(table: &ResultsTable) -> Vec<(String, String)> {
    let methods = table.methods();
    let mut out: Vec<(String, String)> = (0..table.snrs.len())
        .map(|s| {
            (
                format!("errors_snr_{}.svg", snr_label(table.snrs[s])),
                box_plot(table, s, &methods),
            )
        })
        .collect();
    out.push(("mae_vs_snr.svg".into(), line_plot(table, &methods)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_rounds_up() {
        assert_eq!(nice_axis(0.93), (1.0, 0.2));
        assert_eq!(nice_axis(0.41).0, 0.5);
        assert_eq!(nice_axis(0.0), (1.0, 0.2));
    }

    #[test]
    fn tukey_box() {
        let mut v: Vec<f64> = (1..=9).map(f64::from).collect();
        v.push(100.0);
        let s = box_stats(&v);
        assert_eq!(s.median, 5.5);
        assert_eq!(s.high, 9.0);
        assert_eq!(s.low, 1.0);
        assert_eq!(s.outliers, vec![100.0]);
    }
}
