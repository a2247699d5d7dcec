//! Runtime and speedup line charts as standalone SVG.
//!
//! Output depends only on the records, so identical input gives
//! byte-identical files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::report::median_runtimes;
use crate::suite::BenchRecord;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("{kernel}: need at least 2 distinct thread counts to plot, got {found:?}")]
    TooFewThreadCounts { kernel: String, found: Vec<usize> },
    #[error("no records to plot")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One line: `(threads, y)` points sorted by thread count.
struct Series {
    label: String,
    points: Vec<(usize, f64)>,
}

struct Chart<'a> {
    title: String,
    y_label: &'a str,
    threads: Vec<usize>,
    series: Vec<Series>,
    ideal: bool,
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (2 - mag).clamp(0, 6) as usize;
    format!("{v:.decimals$}")
}

impl Chart<'_> {
    fn x(&self, t: usize) -> f64 {
        let lo = (self.threads[0] as f64).log2();
        let hi = (*self.threads.last().unwrap() as f64).log2();
        LEFT + ((t as f64).log2() - lo) / (hi - lo) * (WIDTH - LEFT - RIGHT)
    }

    fn y_max(&self) -> f64 {
        let data = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).fold(0.0, f64::max);
        let ideal = if self.ideal { *self.threads.last().unwrap() as f64 } else { 0.0 };
        let m = data.max(ideal);
        if m > 0.0 {
            m * 1.1
        } else {
            1.0
        }
    }

    fn render(&self) -> String {
        let ymax = self.y_max();
        let y = |v: f64| HEIGHT - BOTTOM - v / ymax * (HEIGHT - TOP - BOTTOM);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, self.title);

        // axes
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
        let _ = writeln!(s, r#"<g class="axes" stroke="black">"#);
        let _ = writeln!(s, r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x1:.1}" y2="{y0:.1}"/>"#);
        let _ = writeln!(s, r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x0:.1}" y2="{y1:.1}"/>"#);
        let _ = writeln!(s, "</g>");
        for &t in &self.threads {
            let px = self.x(t);
            let _ = writeln!(s, r##"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="#ccc"/>"##, y1);
            let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#, y0 + 16.0);
        }
        for i in 0..=5 {
            let v = ymax * i as f64 / 5.0;
            let py = y(v);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, py + 4.0, fmt_num(v));
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">threads</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0);
        let _ = writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0, self.y_label);

        if self.ideal {
            let (t0, t1) = (self.threads[0], *self.threads.last().unwrap());
            let _ = writeln!(
                s,
                r#"<polyline class="ideal" points="{:.1},{:.1} {:.1},{:.1}" fill="none" stroke="gray" stroke-dasharray="6 4"/>"#,
                self.x(t0),
                y(t0 as f64),
                self.x(t1),
                y(t1 as f64)
            );
        }

        for (n, series) in self.series.iter().enumerate() {
            let color = PALETTE[n % PALETTE.len()];
            let pts: Vec<String> = series.points.iter().map(|&(t, v)| format!("{:.1},{:.1}", self.x(t), y(v))).collect();
            let _ = writeln!(s, r#"<g class="series" data-strategy="{}" stroke="{color}" fill="{color}">"#, series.label);
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke-width="2"/>"#, pts.join(" "));
            for &(t, v) in &series.points {
                let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3"/>"#, self.x(t), y(v));
            }
            let _ = writeln!(s, "</g>");
            let ly = TOP + 10.0 + 20.0 * n as f64;
            let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, x1 + 15.0, x1 + 35.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x1 + 40.0, ly + 4.0, series.label);
        }
        if self.ideal {
            let ly = TOP + 10.0 + 20.0 * self.series.len() as f64;
            let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="gray" stroke-dasharray="6 4"/>"#, x1 + 15.0, x1 + 35.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">ideal</text>"#, x1 + 40.0, ly + 4.0);
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Renders `(runtime, speedup)` charts for one kernel's records.
fn kernel_charts(kernel: &str, records: &[BenchRecord]) -> Result<(String, String), PlotError> {
    let threads: Vec<usize> = records.iter().map(|r| r.threads).collect::<BTreeSet<_>>().into_iter().collect();
    if threads.len() < 2 {
        return Err(PlotError::TooFewThreadCounts { kernel: kernel.to_owned(), found: threads });
    }
    // strategies in order of first appearance
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.strategy.as_str()) {
            order.push(&r.strategy);
        }
    }
    let medians = median_runtimes(records);
    let mut runtime = Vec::new();
    let mut speedup = Vec::new();
    for strategy in order {
        let by_threads: &BTreeMap<usize, f64> = &medians[&(kernel.to_owned(), strategy.to_owned())];
        runtime.push(Series { label: strategy.to_owned(), points: by_threads.iter().map(|(&t, &v)| (t, v)).collect() });
        let points = match by_threads.get(&1) {
            Some(&t1) => by_threads.iter().map(|(&t, &v)| (t, if t == 1 { 1.0 } else { t1 / v })).collect(),
            None => Vec::new(),
        };
        speedup.push(Series { label: strategy.to_owned(), points });
    }
    let rt = Chart { title: format!("{kernel}: runtime"), y_label: "median runtime (s)", threads: threads.clone(), series: runtime, ideal: false };
    let sp = Chart { title: format!("{kernel}: speedup"), y_label: "speedup", threads, series: speedup, ideal: true };
    Ok((rt.render(), sp.render()))
}

/// Writes `<kernel>_runtime.svg` and `<kernel>_speedup.svg` into `dir` for
/// every kernel present in `records`.
pub fn emit_plots(records: &[BenchRecord], dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    if records.is_empty() {
        return Err(PlotError::Empty);
    }
    let kernels: BTreeSet<&str> = records.iter().map(|r| r.kernel.as_str()).collect();
    let mut charts = Vec::new();
    for kernel in kernels {
        let mine: Vec<BenchRecord> = records.iter().filter(|r| r.kernel == kernel).cloned().collect();
        charts.push((kernel, kernel_charts(kernel, &mine)?));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (kernel, (rt, sp)) in charts {
        for (suffix, body) in [("runtime", rt), ("speedup", sp)] {
            let path = dir.join(format!("{kernel}_{suffix}.svg"));
            fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(strategy: &str, threads: usize, runtime_s: f64) -> BenchRecord {
        BenchRecord {
            kernel: "stencil".into(),
            strategy: strategy.into(),
            threads,
            rep: 0,
            runtime_s,
            instructions: None,
            cycles: None,
            cpi: None,
            flops_scalar: None,
            flops_packed: None,
            vectorization_pct: None,
            l3_requests: None,
            l3_misses: None,
            l3_miss_ratio_pct: None,
            speedup: None,
            serial_only: false,
            chunk_size: 1,
            backend: "NONE".into(),
            output_hash: String::new(),
        }
    }

    fn sweep() -> Vec<BenchRecord> {
        let mut v = Vec::new();
        for (s, base) in [("direct", 8.0), ("field-map", 9.0), ("point-neighborhood", 10.0)] {
            for t in [1, 2, 4, 8] {
                v.push(rec(s, t, base / t as f64 * 1.1));
            }
        }
        v
    }

    #[test]
    fn deterministic_and_complete() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = emit_plots(&sweep(), a.path()).unwrap();
        let pb = emit_plots(&sweep(), b.path()).unwrap();
        assert_eq!(pa.len(), 2);
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let speed = fs::read_to_string(a.path().join("stencil_speedup.svg")).unwrap();
        let runtime = fs::read_to_string(a.path().join("stencil_runtime.svg")).unwrap();
        assert_eq!(speed.matches(r#"class="ideal""#).count(), 1);
        assert_eq!(runtime.matches(r#"class="ideal""#).count(), 0);
        assert_eq!(speed.matches(r#"class="series""#).count(), 3);
        assert_eq!(runtime.matches(r#"class="series""#).count(), 3);
    }

    #[test]
    fn ideal_line_is_y_equals_x() {
        let dir = tempfile::tempdir().unwrap();
        emit_plots(&sweep(), dir.path()).unwrap();
        let speed = fs::read_to_string(dir.path().join("stencil_speedup.svg")).unwrap();
        // a series with exact linear scaling lies on the ideal line
        let mut recs = sweep();
        recs.retain(|r| r.strategy == "direct");
        for r in &mut recs {
            r.runtime_s = 8.0 / r.threads as f64;
        }
        let (_, sp) = kernel_charts("stencil", &recs).unwrap();
        let ideal = sp.lines().find(|l| l.contains(r#"class="ideal""#)).unwrap();
        let ideal_pts = ideal.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let series = sp.lines().skip_while(|l| !l.contains(r#"class="series""#)).nth(1).unwrap();
        let pts: Vec<&str> = series.split("points=\"").nth(1).unwrap().split('"').next().unwrap().split(' ').collect();
        assert_eq!(ideal_pts, format!("{} {}", pts[0], pts[3]));
        assert!(speed.contains("ideal"));
    }

    #[test]
    fn needs_two_thread_counts() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_plots(&[rec("direct", 1, 1.0), rec("direct", 1, 2.0)], dir.path()).unwrap_err();
        assert!(matches!(err, PlotError::TooFewThreadCounts { .. }));
        assert!(matches!(emit_plots(&[], dir.path()), Err(PlotError::Empty)));
    }

    #[test]
    fn tick_labels() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(8.8), "8.80");
        assert_eq!(fmt_num(123.4), "123");
        assert_eq!(fmt_num(0.0123), "0.0123");
    }
}
