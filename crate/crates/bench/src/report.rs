//! Speedup computation and CSV / JSON emission.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::suite::BenchRecord;

pub const CSV_HEADER: [&str; 15] = [
    "kernel",
    "strategy",
    "threads",
    "rep",
    "runtime_s",
    "instructions",
    "cycles",
    "cpi",
    "flops_scalar",
    "flops_packed",
    "vectorization_pct",
    "l3_requests",
    "l3_misses",
    "l3_miss_ratio_pct",
    "speedup",
];

pub const NA: &str = "N/A";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records to emit")]
    Empty,
    #[error("{kernel}/{strategy} has no threads=1 record to use as the speedup baseline")]
    MissingBaseline { kernel: String, strategy: String },
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("CSV row {row}: bad {column} value {value:?}")]
    CsvValue { row: usize, column: &'static str, value: String },
    #[error("CSV header does not match the expected schema")]
    CsvHeader,
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median runtime per `(kernel, strategy)` and thread count.
pub fn median_runtimes(records: &[BenchRecord]) -> BTreeMap<(String, String), BTreeMap<usize, f64>> {
    let mut samples: BTreeMap<(String, String), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records {
        samples
            .entry((r.kernel.clone(), r.strategy.clone()))
            .or_default()
            .entry(r.threads)
            .or_default()
            .push(r.runtime_s);
    }
    samples
        .into_iter()
        .map(|(k, by_threads)| (k, by_threads.into_iter().map(|(t, v)| (t, median(&v))).collect()))
        .collect()
}

/// Fills `speedup` with `median(T1) / median(TP)` per strategy.
pub fn compute_speedup(records: &mut [BenchRecord]) -> Result<(), ReportError> {
    let medians = median_runtimes(records);
    for r in records.iter_mut() {
        let by_threads = &medians[&(r.kernel.clone(), r.strategy.clone())];
        let t1 = *by_threads.get(&1).ok_or_else(|| ReportError::MissingBaseline {
            kernel: r.kernel.clone(),
            strategy: r.strategy.clone(),
        })?;
        r.speedup = Some(if r.threads == 1 { 1.0 } else { t1 / by_threads[&r.threads] });
    }
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| NA.to_owned(), |x| x.to_string())
}

/// The CSV columns of a record; everything else stays JSON-only.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub kernel: String,
    pub strategy: String,
    pub threads: usize,
    pub rep: usize,
    pub runtime_s: f64,
    pub instructions: Option<u64>,
    pub cycles: Option<u64>,
    pub cpi: Option<f64>,
    pub flops_scalar: Option<u64>,
    pub flops_packed: Option<u64>,
    pub vectorization_pct: Option<f64>,
    pub l3_requests: Option<u64>,
    pub l3_misses: Option<u64>,
    pub l3_miss_ratio_pct: Option<f64>,
    pub speedup: Option<f64>,
}

impl From<&BenchRecord> for CsvRow {
    fn from(r: &BenchRecord) -> Self {
        Self {
            kernel: r.kernel.clone(),
            strategy: r.strategy.clone(),
            threads: r.threads,
            rep: r.rep,
            runtime_s: r.runtime_s,
            instructions: r.instructions,
            cycles: r.cycles,
            cpi: r.cpi,
            flops_scalar: r.flops_scalar,
            flops_packed: r.flops_packed,
            vectorization_pct: r.vectorization_pct,
            l3_requests: r.l3_requests,
            l3_misses: r.l3_misses,
            l3_miss_ratio_pct: r.l3_miss_ratio_pct,
            speedup: r.speedup,
        }
    }
}

pub fn write_csv<W: Write>(records: &[BenchRecord], w: W) -> Result<(), ReportError> {
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        out.write_record([
            r.kernel.clone(),
            r.strategy.clone(),
            r.threads.to_string(),
            r.rep.to_string(),
            r.runtime_s.to_string(),
            opt(r.instructions),
            opt(r.cycles),
            opt(r.cpi),
            opt(r.flops_scalar),
            opt(r.flops_packed),
            opt(r.vectorization_pct),
            opt(r.l3_requests),
            opt(r.l3_misses),
            opt(r.l3_miss_ratio_pct),
            opt(r.speedup),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[BenchRecord], path: &Path) -> Result<(), ReportError> {
    write_csv(records, BufWriter::new(File::create(path)?))
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<CsvRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers()?.iter().ne(CSV_HEADER) {
        return Err(ReportError::CsvHeader);
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        fn parse<T: std::str::FromStr>(row: usize, c: usize, s: &str) -> Result<T, ReportError> {
            s.parse().map_err(|_| ReportError::CsvValue { row, column: CSV_HEADER[c], value: s.to_owned() })
        }
        fn parse_opt<T: std::str::FromStr>(row: usize, c: usize, s: &str) -> Result<Option<T>, ReportError> {
            if s == NA {
                Ok(None)
            } else {
                parse(row, c, s).map(Some)
            }
        }
        rows.push(CsvRow {
            kernel: field(0).to_owned(),
            strategy: field(1).to_owned(),
            threads: parse(n, 2, field(2))?,
            rep: parse(n, 3, field(3))?,
            runtime_s: parse(n, 4, field(4))?,
            instructions: parse_opt(n, 5, field(5))?,
            cycles: parse_opt(n, 6, field(6))?,
            cpi: parse_opt(n, 7, field(7))?,
            flops_scalar: parse_opt(n, 8, field(8))?,
            flops_packed: parse_opt(n, 9, field(9))?,
            vectorization_pct: parse_opt(n, 10, field(10))?,
            l3_requests: parse_opt(n, 11, field(11))?,
            l3_misses: parse_opt(n, 12, field(12))?,
            l3_miss_ratio_pct: parse_opt(n, 13, field(13))?,
            speedup: parse_opt(n, 14, field(14))?,
        });
    }
    Ok(rows)
}

pub fn emit_json(records: &[BenchRecord], path: &Path) -> Result<(), ReportError> {
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, records)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<R: Read>(r: R) -> Result<Vec<BenchRecord>, ReportError> {
    Ok(serde_json::from_reader(r)?)
}
