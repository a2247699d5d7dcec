//! Strong-scaling benchmark harness for the vizbench kernels.
//!
//! A [`BenchConfig`] names a kernel, the strategies to compare, a dataset and
//! a thread-count sweep. [`run_suite`] executes every cell of the sweep inside
//! a marker region and checks that all cells produce the same output;
//! [`report`] and [`plot`] turn the records into CSV, JSON and SVG.

pub mod config;
pub mod oracle;
pub mod plot;
pub mod report;
pub mod suite;
pub mod verify;

pub use config::{BenchConfig, Dataset, Kernel, KernelParams, Strategy, SyntheticSpec};
pub use plot::emit_plots;
pub use report::{compute_speedup, emit_csv, emit_json};
pub use suite::{run_suite, run_suite_with_output, BenchRecord, KernelOutput};
pub use vizbench_core::io::load_field;
