//! Visualization kernels on structured grids, each in a loop-parallel and a
//! data-parallel-primitive form, with marker-region performance counters.
//!
//! - [`field`]: grid containers, interpolation and synthetic datasets
//! - [`io`]: raw volume descriptor format
//! - [`dpp`]: worklet dispatch, scan and scatter
//! - [`stencil`]: Gaussian smoothing
//! - [`isocontour`]: Marching Cubes
//! - [`advection`]: RK4 streamlines
//! - [`perf`]: marker regions and derived metrics

pub mod advection;
pub mod dpp;
pub mod field;
pub mod io;
pub mod isocontour;
pub mod perf;
pub mod stencil;
mod pool;

pub use dpp::ExecConfig;
pub use field::{Dims, StructuredField};
