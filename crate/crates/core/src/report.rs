//! CSV tables and SVG plots for experiment output.
//!
//! Column order is fixed and rows are sorted before writing, so the same
//! records always produce the same bytes. Wall times go to a separate
//! timings file for that reason.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::{Estimate, ExperimentOutput, RunRecord};
use crate::io::write_text;

pub const RECORD_COLUMNS: &str = "variant,n,c,delta,replica,c1_frac,c2_frac,nk_1to5,theory,bound,seed";
pub const SUMMARY_COLUMNS: &str =
    "variant,n,c,delta,replicas,c1_mean,c1_sd,c1_min,c1_max,c2_max,theory,bound,max_abs_dev";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn record_order(a: &RunRecord, b: &RunRecord) -> Ordering {
    a.variant
        .cmp(&b.variant)
        .then(a.n.cmp(&b.n))
        .then(a.param.total_cmp(&b.param))
        .then(a.delta.unwrap_or(0.0).total_cmp(&b.delta.unwrap_or(0.0)))
        .then(a.replica.cmp(&b.replica))
}

fn sorted(records: &[RunRecord]) -> Result<Vec<&RunRecord>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to report".into()));
    }
    let mut rows: Vec<&RunRecord> = records.iter().collect();
    rows.sort_by(|a, b| record_order(a, b));
    Ok(rows)
}

pub fn records_csv(records: &[RunRecord]) -> Result<String> {
    let mut s = format!("{RECORD_COLUMNS}\n");
    for r in sorted(records)? {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.n,
            r.param,
            opt(r.delta),
            r.replica,
            r.c1_frac,
            r.c2_frac,
            r.nk_digest,
            opt(r.theory),
            opt(r.bound),
            r.seed
        );
    }
    Ok(s)
}

pub fn timings_csv(records: &[RunRecord]) -> Result<String> {
    let mut s = String::from("variant,n,c,delta,replica,wall_ms\n");
    for r in sorted(records)? {
        let _ = writeln!(s, "{},{},{},{},{},{:.3}", r.variant, r.n, r.param, opt(r.delta), r.replica, r.wall_ms);
    }
    Ok(s)
}

/// Replicas of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub variant: String,
    pub n: usize,
    pub param: f64,
    pub delta: Option<f64>,
    pub replicas: usize,
    pub c1_mean: f64,
    pub c1_sd: f64,
    pub c1_min: f64,
    pub c1_max: f64,
    pub c2_max: f64,
    pub theory: Option<f64>,
    pub bound: Option<f64>,
    /// `max |C1/n - theory|` over replicas (NaN without a theory value).
    pub max_deviation: f64,
}

/// Groups records by grid point, in sorted order.
pub fn summarize(records: &[RunRecord]) -> Vec<Summary> {
    let Ok(rows) = sorted(records) else { return Vec::new() };
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let first = rows[start];
        let mut end = start + 1;
        while end < rows.len() && {
            let r = rows[end];
            r.variant == first.variant && r.n == first.n && r.param == first.param && r.delta == first.delta
        } {
            end += 1;
        }
        let group = &rows[start..end];
        let xs: Vec<f64> = group.iter().map(|r| r.c1_frac).collect();
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() } else { 0.0 };
        let max_deviation = match first.theory {
            Some(t) => xs.iter().map(|x| (x - t).abs()).fold(0.0, f64::max),
            None => f64::NAN,
        };
        out.push(Summary {
            variant: first.variant.clone(),
            n: first.n,
            param: first.param,
            delta: first.delta,
            replicas: group.len(),
            c1_mean: mean,
            c1_sd: sd,
            c1_min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            c1_max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            c2_max: group.iter().map(|r| r.c2_frac).fold(0.0, f64::max),
            theory: first.theory,
            bound: first.bound,
            max_deviation,
        });
        start = end;
    }
    out
}

pub fn summary_csv(records: &[RunRecord]) -> Result<String> {
    sorted(records)?;
    let mut s = format!("{SUMMARY_COLUMNS}\n");
    for g in summarize(records) {
        let dev = if g.max_deviation.is_nan() { String::new() } else { g.max_deviation.to_string() };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            g.variant,
            g.n,
            g.param,
            opt(g.delta),
            g.replicas,
            g.c1_mean,
            g.c1_sd,
            g.c1_min,
            g.c1_max,
            g.c2_max,
            opt(g.theory),
            opt(g.bound),
            dev
        );
    }
    Ok(s)
}

pub fn estimates_csv(estimates: &[Estimate]) -> String {
    let mut s = String::from("label,c,value,std_error\n");
    let mut rows: Vec<&Estimate> = estimates.iter().collect();
    rows.sort_by(|a, b| a.label.cmp(&b.label).then(a.param.total_cmp(&b.param)));
    for e in rows {
        let _ = writeln!(s, "{},{},{},{}", e.label, e.param, e.value, opt(e.std_error));
    }
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Mean `C1/n` against `c`, one series per (variant, n), with the theory
/// curve dashed and the `alpha(c)` line dotted when present.
pub fn svg_plot(output: &ExperimentOutput, title: &str) -> Result<String> {
    let summaries = summarize(&output.records);
    if summaries.is_empty() {
        return Err(Error::InvalidArgument("no records to plot".into()));
    }
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 170.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let mut xs: Vec<f64> = summaries.iter().map(|s| s.param).collect();
    xs.extend(output.estimates.iter().filter(|e| is_curve(&e.label)).map(|e| e.param));
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(s, r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let (gx, gy) = (x0 + t * (x1 - x0), t);
        let _ = writeln!(s, r##"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="#ddd"/>"##, px(gx), top, top + ph);
        let _ = writeln!(s, r##"<line x1="{0}" y1="{1:.2}" x2="{2}" y2="{1:.2}" stroke="#ddd"/>"##, left, py(gy), left + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, px(gx), top + ph + 16.0, tick(gx));
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, py(gy) + 4.0, tick(gy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">c</text>"#, left + pw / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">C1/n</text>"#, top + ph / 2.0, top + ph / 2.0);

    let mut legend: Vec<(String, String, &str)> = Vec::new();
    let mut series: Vec<(String, usize, Option<f64>)> = Vec::new();
    for sm in &summaries {
        let key = (sm.variant.clone(), sm.n, sm.delta);
        if !series.contains(&key) {
            series.push(key);
        }
    }
    for (idx, (variant, n, delta)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let pts: Vec<(f64, f64)> = summaries
            .iter()
            .filter(|sm| &sm.variant == variant && sm.n == *n && sm.delta == *delta)
            .map(|sm| (px(sm.param), py(sm.c1_mean)))
            .collect();
        if pts.len() > 1 {
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points(&pts));
        }
        for (x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"/>"#);
        }
        let label = match delta {
            Some(d) => format!("{variant} n={n} delta={d}"),
            None => format!("{variant} n={n}"),
        };
        legend.push((label, color.to_string(), ""));
    }
    for (label, dash) in [("rho", "6 4"), ("fixed_point", "6 4"), ("gw_mc", "2 2"), ("alpha", "2 4")] {
        let mut pts: Vec<(f64, f64)> = output.estimates.iter().filter(|e| e.label == label).map(|e| (e.param, e.value)).collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mapped: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (px(x), py(y))).collect();
        if mapped.len() > 1 {
            let _ = writeln!(s, r#"<polyline fill="none" stroke="black" stroke-dasharray="{dash}" points="{}"/>"#, points(&mapped));
        } else {
            let (x, y) = mapped[0];
            let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="{dash}"/>"#, x - 12.0, x + 12.0);
        }
        legend.push((label.to_string(), "black".into(), dash));
    }
    for (i, (label, color, dash)) in legend.iter().enumerate() {
        let y = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, y + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn is_curve(label: &str) -> bool {
    matches!(label, "rho" | "fixed_point" | "gw_mc" | "alpha")
}

fn points(pts: &[(f64, f64)]) -> String {
    pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ")
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<stem>.csv`, `<stem>_summary.csv`, `<stem>_estimates.csv` and
/// `<stem>_timings.csv` for [`ReportFormat::Csv`], and `<stem>.svg` for
/// [`ReportFormat::Svg`]. Returns the written paths.
pub fn emit_report(output: &ExperimentOutput, dir: &Path, stem: &str, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    if output.records.is_empty() {
        return Err(Error::InvalidArgument("no records to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        write_text(&p, &text)?;
        written.push(p);
        Ok(())
    };
    for f in formats {
        match f {
            ReportFormat::Csv => {
                put(format!("{stem}.csv"), records_csv(&output.records)?)?;
                put(format!("{stem}_summary.csv"), summary_csv(&output.records)?)?;
                put(format!("{stem}_estimates.csv"), estimates_csv(&output.estimates))?;
                put(format!("{stem}_timings.csv"), timings_csv(&output.records)?)?;
            }
            ReportFormat::Svg => put(format!("{stem}.svg"), svg_plot(output, stem)?)?,
        }
    }
    Ok(written)
}
