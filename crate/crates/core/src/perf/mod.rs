//! Marker-region instrumentation.
//!
//! A [`Profiler`] brackets named regions with [`Profiler::marker_start`] and
//! [`Profiler::marker_stop`]. Each visit snapshots the selected backend at
//! start and accumulates the deltas at stop. Metrics a backend cannot supply
//! are carried as `None` and rendered as `N/A` downstream.
//!
//! Backends:
//! - `SOFTWARE`: deterministic operation tallies reported by the kernels
//!   themselves, all counted as scalar FLOPs.
//! - `HARDWARE`: instructions, cycles and last-level-cache references/misses
//!   from the OS counter interface. Falls back to `SOFTWARE` when unavailable.
//! - `AUTO`: hardware counters when available, plus software FLOP tallies.
//! - `NONE`: wall time and visit counts only.
//!
//! Hardware FLOP counters on some CPUs count issued as well as retired
//! operations; values are surfaced as read.

pub mod hardware;
pub mod tally;

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hardware::{hardware_backend_open, HardwareCounters, HwReading, Unavailable};
pub use tally::add_flops;
use tally::SlotBank;

/// Environment variable selecting the counter backend.
pub const BACKEND_ENV: &str = "VIZBENCH_COUNTERS";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarkerError {
    #[error("region {0:?} stopped without being started")]
    NotStarted(String),
    #[error("region {0:?} is already running")]
    AlreadyStarted(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown counter backend {0:?}, expected AUTO, HARDWARE, SOFTWARE or NONE")]
pub struct UnknownBackend(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BackendKind {
    Auto,
    Hardware,
    Software,
    None,
}

impl FromStr for BackendKind {
    type Err = UnknownBackend;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AUTO" | "" => Ok(Self::Auto),
            "HARDWARE" => Ok(Self::Hardware),
            "SOFTWARE" => Ok(Self::Software),
            "NONE" => Ok(Self::None),
            _ => Err(UnknownBackend(s.to_owned())),
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Auto => "AUTO",
            Self::Hardware => "HARDWARE",
            Self::Software => "SOFTWARE",
            Self::None => "NONE",
        })
    }
}

impl BackendKind {
    /// Reads [`BACKEND_ENV`], defaulting to `AUTO` when unset.
    pub fn from_env() -> Result<Self, UnknownBackend> {
        match std::env::var(BACKEND_ENV) {
            Ok(v) => v.parse(),
            Err(_) => Ok(Self::Auto),
        }
    }
}

/// Raw counter values for one region; `None` marks an unavailable counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CounterSample {
    pub instructions_retired: Option<u64>,
    pub cycles: Option<u64>,
    pub flops_scalar: Option<u64>,
    pub flops_packed: Option<u64>,
    pub l3_requests: Option<u64>,
    pub l3_misses: Option<u64>,
    pub wall_time: f64,
    pub call_count: u64,
}

fn add_opt(a: Option<u64>, b: Option<u64>) -> Option<u64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x + y),
        (x, None) => x,
        (None, y) => y,
    }
}

impl CounterSample {
    /// Combines samples from threads that ran concurrently: counts add, wall
    /// time and visit count take the maximum. Availability is the union.
    pub fn merge(&self, other: &Self) -> Self {
        Self {
            instructions_retired: add_opt(self.instructions_retired, other.instructions_retired),
            cycles: add_opt(self.cycles, other.cycles),
            flops_scalar: add_opt(self.flops_scalar, other.flops_scalar),
            flops_packed: add_opt(self.flops_packed, other.flops_packed),
            l3_requests: add_opt(self.l3_requests, other.l3_requests),
            l3_misses: add_opt(self.l3_misses, other.l3_misses),
            wall_time: self.wall_time.max(other.wall_time),
            call_count: self.call_count.max(other.call_count),
        }
    }

    /// Combines successive visits of one region: everything adds.
    pub fn accumulate(&self, later: &Self) -> Self {
        Self {
            wall_time: self.wall_time + later.wall_time,
            call_count: self.call_count + later.call_count,
            ..self.merge(later)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics {
    pub cpi: Option<f64>,
    pub vectorization_pct: Option<f64>,
    pub l3_miss_ratio_pct: Option<f64>,
    pub runtime_s: Option<f64>,
}

/// Cycles per instruction, packed share of all FLOPs, and L3 miss ratio.
/// A metric is absent whenever an input is unavailable or its denominator is zero.
pub fn derive_metrics(s: &CounterSample) -> DerivedMetrics {
    let cpi = match (s.cycles, s.instructions_retired) {
        (Some(c), Some(i)) if i > 0 => Some(c as f64 / i as f64),
        _ => None,
    };
    let vectorization_pct = match (s.flops_packed, s.flops_scalar) {
        (Some(p), Some(sc)) if p + sc > 0 => Some(100.0 * p as f64 / (p + sc) as f64),
        _ => None,
    };
    let l3_miss_ratio_pct = match (s.l3_misses, s.l3_requests) {
        (Some(m), Some(r)) if r > 0 => Some(100.0 * m as f64 / r as f64),
        _ => None,
    };
    DerivedMetrics { cpi, vectorization_pct, l3_miss_ratio_pct, runtime_s: Some(s.wall_time) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub name: String,
    /// Indexed by worker slot. Slot 0 also carries the orchestration thread's
    /// wall time and any hardware counts, which are read there.
    pub per_thread: Vec<CounterSample>,
    pub aggregate: CounterSample,
    pub metrics: DerivedMetrics,
}

#[derive(Debug)]
enum Backend {
    None,
    Software,
    Hardware { counters: HardwareCounters, with_software: bool },
}

#[derive(Debug)]
struct OpenVisit {
    started: Instant,
    slots: Vec<u64>,
    hw: Option<HwReading>,
}

#[derive(Debug, Default)]
struct RegionState {
    open: Option<OpenVisit>,
    per_thread: Vec<CounterSample>,
}

#[derive(Debug, Default)]
struct Registry {
    regions: HashMap<String, RegionState>,
    open_count: usize,
    previous_attachment: Option<Option<(Arc<SlotBank>, usize)>>,
}

/// Marker-region registry bound to one counter backend.
///
/// Markers are meant to be driven from a single orchestration thread; the
/// registry is internally synchronized so distinct regions may also be used
/// from different threads.
#[derive(Debug)]
pub struct Profiler {
    backend: Backend,
    requested: BackendKind,
    fallback_reason: Option<String>,
    bank: Arc<SlotBank>,
    registry: Mutex<Registry>,
}

impl Profiler {
    pub fn new(kind: BackendKind) -> Self {
        let mut fallback_reason = None;
        let backend = match kind {
            BackendKind::None => Backend::None,
            BackendKind::Software => Backend::Software,
            BackendKind::Hardware | BackendKind::Auto => match hardware_backend_open() {
                Ok(counters) => Backend::Hardware { counters, with_software: kind == BackendKind::Auto },
                Err(Unavailable(why)) => {
                    fallback_reason = Some(why);
                    Backend::Software
                }
            },
        };
        Self {
            backend,
            requested: kind,
            fallback_reason,
            bank: Arc::new(SlotBank::new()),
            registry: Mutex::new(Registry::default()),
        }
    }

    pub fn from_env() -> Result<Self, UnknownBackend> {
        Ok(Self::new(BackendKind::from_env()?))
    }

    pub fn requested(&self) -> BackendKind {
        self.requested
    }

    /// Name of the backend actually in use.
    pub fn active_backend(&self) -> &'static str {
        match &self.backend {
            Backend::None => "NONE",
            Backend::Software => "SOFTWARE",
            Backend::Hardware { with_software: true, .. } => "HARDWARE+SOFTWARE",
            Backend::Hardware { with_software: false, .. } => "HARDWARE",
        }
    }

    /// Why hardware counters were not used, when they were requested.
    pub fn fallback_reason(&self) -> Option<&str> {
        self.fallback_reason.as_deref()
    }

    fn counts_software(&self) -> bool {
        matches!(self.backend, Backend::Software | Backend::Hardware { with_software: true, .. })
    }

    fn hw_read(&self) -> Option<HwReading> {
        match &self.backend {
            Backend::Hardware { counters, .. } => Some(counters.read()),
            _ => None,
        }
    }

    pub fn marker_start(&self, name: &str) -> Result<(), MarkerError> {
        let mut reg = self.registry.lock().expect("marker registry poisoned");
        if reg.regions.get(name).is_some_and(|r| r.open.is_some()) {
            return Err(MarkerError::AlreadyStarted(name.to_owned()));
        }
        if !tally::is_attached_to(&self.bank) {
            reg.previous_attachment = Some(tally::attach(Some(Arc::clone(&self.bank)), 0));
        } else {
            tally::flush();
        }
        reg.open_count += 1;
        let visit = OpenVisit { slots: self.bank.snapshot(), hw: self.hw_read(), started: Instant::now() };
        reg.regions.entry(name.to_owned()).or_default().open = Some(visit);
        Ok(())
    }

    pub fn marker_stop(&self, name: &str) -> Result<(), MarkerError> {
        let stopped = Instant::now();
        let hw_now = self.hw_read();
        let mut reg = self.registry.lock().expect("marker registry poisoned");
        let visit = reg
            .regions
            .get_mut(name)
            .and_then(|r| r.open.take())
            .ok_or_else(|| MarkerError::NotStarted(name.to_owned()))?;
        tally::flush();
        let slots_now = self.bank.snapshot();
        let wall_time = stopped.duration_since(visit.started).as_secs_f64();

        let soft = self.counts_software();
        let last_used = slots_now
            .iter()
            .zip(&visit.slots)
            .rposition(|(now, then)| now != then)
            .unwrap_or(0);
        let mut samples: Vec<CounterSample> = (0..=last_used)
            .map(|slot| CounterSample {
                flops_scalar: soft.then(|| slots_now[slot] - visit.slots[slot]),
                ..Default::default()
            })
            .collect();
        let head = &mut samples[0];
        head.wall_time = wall_time;
        head.call_count = 1;
        if let (Some(now), Some(then)) = (hw_now, visit.hw) {
            let d = now.delta(&then);
            head.instructions_retired = d.instructions;
            head.cycles = d.cycles;
            head.l3_requests = d.cache_references;
            head.l3_misses = d.cache_misses;
        }

        let region = reg.regions.get_mut(name).expect("region exists");
        if region.per_thread.len() < samples.len() {
            region.per_thread.resize(samples.len(), CounterSample::default());
        }
        for (acc, s) in region.per_thread.iter_mut().zip(&samples) {
            *acc = acc.accumulate(s);
        }
        reg.open_count -= 1;
        if reg.open_count == 0 {
            if let Some(prev) = reg.previous_attachment.take() {
                tally::restore(prev);
            }
        }
        Ok(())
    }

    /// Runs `f` inside region `name`.
    pub fn measure<R>(&self, name: &str, f: impl FnOnce() -> R) -> Result<R, MarkerError> {
        self.marker_start(name)?;
        let out = f();
        self.marker_stop(name)?;
        Ok(out)
    }

    pub fn report(&self, name: &str) -> Option<RegionReport> {
        let reg = self.registry.lock().expect("marker registry poisoned");
        let region = reg.regions.get(name)?;
        if region.per_thread.is_empty() {
            return None;
        }
        let aggregate = region.per_thread.iter().fold(CounterSample::default(), |acc, s| acc.merge(s));
        Some(RegionReport {
            name: name.to_owned(),
            per_thread: region.per_thread.clone(),
            metrics: derive_metrics(&aggregate),
            aggregate,
        })
    }

    /// Forgets all accumulated region data. Regions still open stay open.
    pub fn reset(&self) {
        let mut reg = self.registry.lock().expect("marker registry poisoned");
        reg.regions.retain(|_, r| r.open.is_some());
        for r in reg.regions.values_mut() {
            r.per_thread.clear();
        }
    }
}

/// Runs `f` under a software-only profiler and returns its counter sample.
pub fn software_counter_report<R>(f: impl FnOnce() -> R) -> (R, CounterSample) {
    let profiler = Profiler::new(BackendKind::Software);
    let out = profiler.measure("software", f).expect("fresh profiler");
    let sample = profiler.report("software").expect("region recorded").aggregate;
    (out, sample)
}
