//! CSV tables and SVG charts of a study.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use somiv::estim::PredictorKind;

use crate::study::{wind_label, AggregateRow, StudyResult, CHANNELS};

pub const RAW_CSV: &str = "runs.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";

pub fn write_raw_csv<W: Write>(res: &StudyResult, w: W, channels: &[usize]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "estimator",
        "wind_case",
        "N",
        "channel",
        "run",
        "fit",
        "param_err",
    ])?;
    for r in &res.runs {
        for &c in channels {
            out.write_record([
                r.estimator.label().to_string(),
                wind_label(r.wind),
                r.n.to_string(),
                CHANNELS[c].to_string(),
                r.run.to_string(),
                r.fit[c].to_string(),
                r.param_err.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "estimator",
        "wind_case",
        "N",
        "channel",
        "mean",
        "std",
        "runs",
        "diverged",
        "median_param_err",
    ])?;
    for r in rows {
        out.write_record([
            r.estimator.label().to_string(),
            wind_label(r.wind),
            r.n.to_string(),
            CHANNELS[r.channel].to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            r.runs.to_string(),
            r.diverged.to_string(),
            r.median_param_err.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 120.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn in_range(v: f64) -> bool {
    (0.0..=100.0).contains(&v)
}

/// Fit-vs-N line chart of one channel and wind case. Values outside [0, 100]
/// are left out.
pub fn fit_chart(
    rows: &[AggregateRow],
    kinds: &[PredictorKind],
    wind: f64,
    channel: usize,
) -> String {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let (n_lo, n_hi) = match (ns.first(), ns.last()) {
        (Some(&a), Some(&b)) if a < b => (a as f64, b as f64),
        (Some(&a), _) => (a as f64 - 1.0, a as f64 + 1.0),
        _ => (0.0, 1.0),
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |n: f64| LEFT + (n - n_lo) / (n_hi - n_lo) * plot_w;
    let y = |f: f64| TOP + (100.0 - f) / 100.0 * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{} fit, mean wind {} m/s</text>"#,
        LEFT + plot_w / 2.0,
        CHANNELS[channel],
        wind_label(wind)
    );
    // axes and grid
    for k in 0..=5 {
        let f = 20.0 * k as f64;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#dddddd"/><text x="{2}" y="{3:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{f}</text>"##,
            y(f),
            LEFT + plot_w,
            LEFT - 6.0,
            y(f) + 4.0
        );
    }
    for &n in &ns {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{n}</text>"#,
            x(n as f64),
            TOP + plot_h + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">N</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );

    for (ki, kind) in kinds.iter().enumerate() {
        let color = COLORS[ki % COLORS.len()];
        let mut pts: Vec<&AggregateRow> = rows
            .iter()
            .filter(|r| r.estimator == *kind && r.wind == wind && r.channel == channel)
            .collect();
        pts.sort_by_key(|r| r.n);

        // polyline broken wherever the mean leaves the visible range
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for r in &pts {
            if in_range(r.mean) {
                segment.push(format!("{:.2},{:.2}", x(r.n as f64), y(r.mean)));
            } else {
                flush(&mut segment, &mut s);
            }
        }
        flush(&mut segment, &mut s);

        for r in &pts {
            let cx = x(r.n as f64);
            if in_range(r.mean) {
                let _ = writeln!(
                    s,
                    r#"<circle class="mean" cx="{cx:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    y(r.mean)
                );
            }
            for (v, up) in [(r.mean + r.std, true), (r.mean - r.std, false)] {
                if !in_range(v) {
                    continue;
                }
                let cy = y(v);
                let d = if up { -5.0 } else { 5.0 };
                let _ = writeln!(
                    s,
                    r#"<polygon class="spread" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
                    cx - 4.0,
                    cy - d / 2.0,
                    cx + 4.0,
                    cy - d / 2.0,
                    cx,
                    cy + d / 2.0
                );
            }
        }
        let ly = TOP + 16.0 + 18.0 * ki as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            kind.label()
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn chart_name(wind: f64, channel: usize) -> String {
    format!("fit_{}_wind{}.svg", CHANNELS[channel], wind_label(wind))
}

/// Writes the raw and aggregate tables and one chart per wind case and channel.
pub fn emit_reports(res: &StudyResult, dir: &Path, channels: &[usize]) -> Result<Vec<PathBuf>> {
    if channels.is_empty() {
        bail!("channel filter is empty");
    }
    if let Some(c) = channels.iter().find(|&&c| c >= CHANNELS.len()) {
        bail!("unknown channel index {c}");
    }
    if res.runs.is_empty() {
        bail!("study result is empty");
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();

    let raw = dir.join(RAW_CSV);
    let f = fs::File::create(&raw).with_context(|| format!("writing {}", raw.display()))?;
    write_raw_csv(res, std::io::BufWriter::new(f), channels)?;
    written.push(raw);

    let rows: Vec<AggregateRow> = res
        .aggregate()
        .into_iter()
        .filter(|r| channels.contains(&r.channel))
        .collect();
    let agg = dir.join(AGGREGATE_CSV);
    let f = fs::File::create(&agg).with_context(|| format!("writing {}", agg.display()))?;
    write_aggregate_csv(&rows, std::io::BufWriter::new(f))?;
    written.push(agg);

    for &w in &res.winds {
        for &c in channels {
            let path = dir.join(chart_name(w, c));
            fs::write(&path, fit_chart(&rows, &res.kinds, w, c))
                .with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
    }
    Ok(written)
}
