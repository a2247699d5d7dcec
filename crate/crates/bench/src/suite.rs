//! Strong-scaling sweep execution.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use vizbench_core::advection::{self, IntegrationParams, Seed, Streamline, Termination};
use vizbench_core::dpp::ExecConfig;
use vizbench_core::field::StructuredField;
use vizbench_core::isocontour::{self, ContourOptions, TriangleMesh};
use vizbench_core::perf::{Profiler, RegionReport};
use vizbench_core::stencil::{self, GaussianKernel};

use crate::config::{BenchConfig, ConfigError, Strategy};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{cell}: {message}")]
    Kernel { cell: String, message: String },
    #[error("{cell}: output hash {actual} differs from {expected} produced by {reference}")]
    HashMismatch { cell: String, reference: String, expected: String, actual: String },
    #[error("{cell}: {message}")]
    Marker { cell: String, message: String },
}

/// One timed repetition of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
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
    /// The strategy ignores the thread count and was run once at one thread.
    pub serial_only: bool,
    pub chunk_size: usize,
    pub backend: String,
    pub output_hash: String,
}

impl BenchRecord {
    pub fn from_report(cfg: &BenchConfig, strategy: Strategy, threads: usize, rep: usize, report: &RegionReport, backend: &str, output_hash: String) -> Self {
        let a = &report.aggregate;
        let m = &report.metrics;
        Self {
            kernel: cfg.kernel.name().to_owned(),
            strategy: strategy.name().to_owned(),
            threads,
            rep,
            runtime_s: a.wall_time,
            instructions: a.instructions_retired,
            cycles: a.cycles,
            cpi: m.cpi,
            flops_scalar: a.flops_scalar,
            flops_packed: a.flops_packed,
            vectorization_pct: m.vectorization_pct,
            l3_requests: a.l3_requests,
            l3_misses: a.l3_misses,
            l3_miss_ratio_pct: m.l3_miss_ratio_pct,
            speedup: None,
            serial_only: strategy.is_serial(),
            chunk_size: cfg.chunk_size,
            backend: backend.to_owned(),
            output_hash,
        }
    }
}

/// Kernel input prepared once per sweep, outside any timed region.
#[derive(Debug)]
pub enum Prepared {
    Stencil { image: StructuredField, kernel: GaussianKernel },
    Isocontour { field: StructuredField, isovalue: f64, opts: ContourOptions },
    Advection { field: StructuredField, seeds: Vec<Seed>, params: IntegrationParams },
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelOutput {
    Image(StructuredField),
    Mesh(TriangleMesh),
    Streamlines(Vec<Streamline>),
}

impl KernelOutput {
    /// Hex SHA-256 over the little-endian bytes of the output.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        match self {
            Self::Image(f) => {
                for d in f.dims().as_array() {
                    h.update((d as u64).to_le_bytes());
                }
                for v in f.values() {
                    h.update(v.to_le_bytes());
                }
            }
            Self::Mesh(m) => {
                h.update((m.vertices.len() as u64).to_le_bytes());
                for v in m.vertices.iter().flatten() {
                    h.update(v.to_le_bytes());
                }
                for t in m.triangles.iter().flatten() {
                    h.update(t.to_le_bytes());
                }
            }
            Self::Streamlines(lines) => {
                for s in lines {
                    h.update((s.seed_id as u64).to_le_bytes());
                    h.update([match s.termination {
                        Termination::MaxSteps => 0u8,
                        Termination::OutOfBounds => 1,
                        Termination::ZeroVelocity => 2,
                    }]);
                    h.update((s.points.len() as u64).to_le_bytes());
                    for c in s.points.iter().flatten() {
                        h.update(c.to_le_bytes());
                    }
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn prepare(cfg: &BenchConfig) -> Result<Prepared, SuiteError> {
    cfg.validate()?;
    let field = cfg.dataset.load(cfg.rng_seed)?;
    let p = &cfg.params;
    let prep_err = |message: String| SuiteError::Kernel { cell: format!("{}/prepare", cfg.kernel), message };
    Ok(match cfg.kernel {
        crate::config::Kernel::Stencil => Prepared::Stencil {
            kernel: GaussianKernel::new(p.stencil_size, p.sigma).map_err(|e| prep_err(e.to_string()))?,
            image: field,
        },
        crate::config::Kernel::Isocontour => Prepared::Isocontour {
            field,
            isovalue: p.isovalue,
            opts: ContourOptions { reclassify: p.reclassify },
        },
        crate::config::Kernel::Advection => {
            let h = p.step_size.unwrap_or_else(|| IntegrationParams::default_step(&field));
            let params = IntegrationParams::new(h, p.max_steps).map_err(|e| prep_err(e.to_string()))?;
            let seeds = advection::make_diagonal_seeds(&field, p.n_seeds).map_err(|e| prep_err(e.to_string()))?;
            Prepared::Advection { field, seeds, params }
        }
    })
}

/// Runs one strategy on prepared input.
pub fn run_kernel(prep: &Prepared, strategy: Strategy, exec: &ExecConfig) -> Result<KernelOutput, String> {
    match (prep, strategy) {
        (Prepared::Stencil { image, kernel }, Strategy::Stencil(s)) => {
            stencil::smooth(s, image, kernel, exec).map(KernelOutput::Image).map_err(|e| e.to_string())
        }
        (Prepared::Isocontour { field, isovalue, opts }, Strategy::Contour(s)) => {
            isocontour::contour(s, field, *isovalue, exec, *opts).map(KernelOutput::Mesh).map_err(|e| e.to_string())
        }
        (Prepared::Advection { field, seeds, params }, Strategy::Advect(s)) => {
            advection::trace(s, field, seeds, params, exec).map(KernelOutput::Streamlines).map_err(|e| e.to_string())
        }
        (_, s) => Err(format!("strategy {} does not match the prepared kernel input", s.name())),
    }
}

/// Records plus the reference kernel output every cell was checked against.
#[derive(Debug)]
pub struct SuiteResult {
    pub records: Vec<BenchRecord>,
    pub output: KernelOutput,
    pub backend: String,
}

/// Thread counts a strategy is swept over.
pub fn cell_threads(cfg: &BenchConfig, strategy: Strategy) -> Vec<usize> {
    if strategy.is_serial() {
        vec![1]
    } else {
        cfg.thread_counts.clone()
    }
}

/// Runs the whole sweep. Each cell gets one untimed warm-up run, then
/// `repetitions` runs inside the marker region `<kernel>/<strategy>`. Every
/// run's output must hash identically to the first one.
pub fn run_suite_with_output(cfg: &BenchConfig) -> Result<SuiteResult, SuiteError> {
    let prep = prepare(cfg)?;
    let profiler = Profiler::new(cfg.backend);
    let backend = profiler.active_backend().to_owned();
    let mut records = Vec::new();
    let mut reference: Option<(String, String, KernelOutput)> = None;

    for &strategy in &cfg.strategies {
        let region = format!("{}/{}", cfg.kernel, strategy.name());
        for threads in cell_threads(cfg, strategy) {
            let cell = format!("{region} threads={threads}");
            let exec = ExecConfig::new(threads, cfg.chunk_size).map_err(|e| SuiteError::Kernel { cell: cell.clone(), message: e.to_string() })?;
            let run = || run_kernel(&prep, strategy, &exec).map_err(|message| SuiteError::Kernel { cell: cell.clone(), message });

            let mut check = |out: KernelOutput| -> Result<String, SuiteError> {
                let hash = out.hash();
                match &reference {
                    None => reference = Some((cell.clone(), hash.clone(), out)),
                    Some((ref_cell, expected, _)) if *expected != hash => {
                        return Err(SuiteError::HashMismatch {
                            cell: cell.clone(),
                            reference: ref_cell.clone(),
                            expected: expected.clone(),
                            actual: hash,
                        })
                    }
                    Some(_) => {}
                }
                Ok(hash)
            };

            check(run()?)?;
            for rep in 0..cfg.repetitions {
                profiler.reset();
                let out = profiler
                    .measure(&region, run)
                    .map_err(|e| SuiteError::Marker { cell: cell.clone(), message: e.to_string() })??;
                let report = profiler
                    .report(&region)
                    .ok_or_else(|| SuiteError::Marker { cell: cell.clone(), message: "region produced no report".into() })?;
                let hash = check(out)?;
                records.push(BenchRecord::from_report(cfg, strategy, threads, rep, &report, &backend, hash));
            }
        }
    }
    let (_, _, output) = reference.expect("validated config has at least one strategy");
    Ok(SuiteResult { records, output, backend })
}

pub fn run_suite(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, SuiteError> {
    run_suite_with_output(cfg).map(|r| r.records)
}
