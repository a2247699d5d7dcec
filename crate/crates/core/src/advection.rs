//! Streamlines through steady vector fields by classic fourth-order Runge-Kutta.
//!
//! Seeds are independent, so the parallel strategy simply dispatches one
//! field-map invocation per seed and produces bitwise the same curves as the
//! serial loop.

use std::io::{self, Write};

use thiserror::Error;

use crate::dpp::{self, DppError, ExecConfig};
use crate::field::StructuredField;
use crate::perf::add_flops;

/// Speed below which a particle is considered stalled.
pub const ZERO_VELOCITY_EPS: f64 = 1e-12;

/// FLOPs tallied per accepted step, counting only the update formula
/// (two step fractions, three stage positions, the weighted combination).
pub const RK4_STEP_FLOPS: u64 = 41;

#[derive(Debug, Error, PartialEq)]
pub enum AdvectError {
    #[error("advection needs a 3-component field, got {0} component(s)")]
    NotVectorField(usize),
    #[error("step size must be finite and positive, got {0}")]
    BadStepSize(f64),
    #[error("max_steps must be >= 1")]
    BadMaxSteps,
    #[error("need at least 2 seeds along the diagonal, got {0}")]
    TooFewSeeds(usize),
    #[error(transparent)]
    Dispatch(#[from] DppError),
}

/// A 3-component [`StructuredField`].
#[derive(Debug, Clone, Copy)]
pub struct VectorField<'a>(&'a StructuredField);

impl<'a> VectorField<'a> {
    pub fn new(field: &'a StructuredField) -> Result<Self, AdvectError> {
        if field.components() != 3 {
            return Err(AdvectError::NotVectorField(field.components()));
        }
        Ok(Self(field))
    }

    pub fn field(&self) -> &'a StructuredField {
        self.0
    }

    #[inline]
    pub fn velocity(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        self.0.interpolate(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub id: usize,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationParams {
    step_size: f64,
    max_steps: usize,
}

impl IntegrationParams {
    pub fn new(step_size: f64, max_steps: usize) -> Result<Self, AdvectError> {
        if !(step_size.is_finite() && step_size > 0.0) {
            return Err(AdvectError::BadStepSize(step_size));
        }
        if max_steps == 0 {
            return Err(AdvectError::BadMaxSteps);
        }
        Ok(Self { step_size, max_steps })
    }

    /// Step of a quarter of the finest grid spacing.
    pub fn default_step(field: &StructuredField) -> f64 {
        0.25 * field.spacing().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    MaxSteps,
    OutOfBounds,
    ZeroVelocity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    pub seed_id: usize,
    pub points: Vec<[f64; 3]>,
    pub termination: Termination,
}

#[inline]
fn axpy(p: [f64; 3], a: f64, k: [f64; 3]) -> [f64; 3] {
    [p[0] + a * k[0], p[1] + a * k[1], p[2] + a * k[2]]
}

/// One RK4 step from `p` given the velocity `k1` already sampled there.
fn step_with(field: &VectorField<'_>, p: [f64; 3], k1: [f64; 3], h: f64) -> Option<[f64; 3]> {
    let half = 0.5 * h;
    let sixth = h / 6.0;
    let k2 = field.velocity(axpy(p, half, k1))?;
    let k3 = field.velocity(axpy(p, half, k2))?;
    let k4 = field.velocity(axpy(p, h, k3))?;
    let next: [f64; 3] = std::array::from_fn(|a| p[a] + sixth * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]));
    field.field().locate_cell(next).inside.then_some(next)
}

/// Advances `p` by one RK4 step of size `h`. `None` when any stage, or the
/// result, falls outside the domain.
pub fn rk4_step(field: &VectorField<'_>, p: [f64; 3], h: f64) -> Option<[f64; 3]> {
    let k1 = field.velocity(p)?;
    let next = step_with(field, p, k1, h)?;
    add_flops(RK4_STEP_FLOPS);
    Some(next)
}

pub fn trace_streamline(field: &VectorField<'_>, seed: Seed, params: &IntegrationParams) -> Streamline {
    let mut points = Vec::with_capacity(params.max_steps + 1);
    points.push(seed.position);
    let finish = |points, termination| Streamline { seed_id: seed.id, points, termination };
    let mut p = seed.position;
    for _ in 0..params.max_steps {
        let Some(k1) = field.velocity(p) else {
            return finish(points, Termination::OutOfBounds);
        };
        if (k1[0] * k1[0] + k1[1] * k1[1] + k1[2] * k1[2]).sqrt() < ZERO_VELOCITY_EPS {
            return finish(points, Termination::ZeroVelocity);
        }
        match step_with(field, p, k1, params.step_size) {
            Some(next) => {
                add_flops(RK4_STEP_FLOPS);
                points.push(next);
                p = next;
            }
            None => return finish(points, Termination::OutOfBounds),
        }
    }
    finish(points, Termination::MaxSteps)
}

/// `n` seeds evenly spaced on the main diagonal, inset half a cell from
/// both corners so every seed starts inside the domain.
pub fn make_diagonal_seeds(field: &StructuredField, n: usize) -> Result<Vec<Seed>, AdvectError> {
    if n < 2 {
        return Err(AdvectError::TooFewSeeds(n));
    }
    let dims = field.dims().as_array();
    let (origin, spacing, top) = (field.origin(), field.spacing(), field.max_corner());
    let inset = |a: usize| if dims[a] > 1 { 0.5 * spacing[a] } else { 0.0 };
    let lo: [f64; 3] = std::array::from_fn(|a| origin[a] + inset(a));
    let hi: [f64; 3] = std::array::from_fn(|a| top[a] - inset(a));
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            Seed { id: i, position: std::array::from_fn(|a| lo[a] + t * (hi[a] - lo[a])) }
        })
        .collect())
}

pub fn trace_serial(field: &StructuredField, seeds: &[Seed], params: &IntegrationParams) -> Result<Vec<Streamline>, AdvectError> {
    let vf = VectorField::new(field)?;
    Ok(seeds.iter().map(|s| trace_streamline(&vf, *s, params)).collect())
}

/// One field-map invocation per seed; output is index-aligned with `seeds`.
pub fn trace_parallel_over_seeds(
    field: &StructuredField,
    seeds: &[Seed],
    params: &IntegrationParams,
    cfg: &ExecConfig,
) -> Result<Vec<Streamline>, AdvectError> {
    let vf = VectorField::new(field)?;
    let mut slots: Vec<Option<Streamline>> = vec![None; seeds.len()];
    dpp::dispatch_field_map(&mut slots, cfg, |i, slot| {
        *slot = Some(trace_streamline(&vf, seeds[i], params));
    })?;
    Ok(slots.into_iter().map(|s| s.expect("every seed dispatched")).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdvectStrategy {
    Serial,
    ParallelOverSeeds,
}

impl AdvectStrategy {
    pub const ALL: [Self; 2] = [Self::Serial, Self::ParallelOverSeeds];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Serial => "serial",
            Self::ParallelOverSeeds => "parallel-over-seeds",
        }
    }
}

pub fn trace(
    strategy: AdvectStrategy,
    field: &StructuredField,
    seeds: &[Seed],
    params: &IntegrationParams,
    cfg: &ExecConfig,
) -> Result<Vec<Streamline>, AdvectError> {
    match strategy {
        AdvectStrategy::Serial => trace_serial(field, seeds, params),
        AdvectStrategy::ParallelOverSeeds => trace_parallel_over_seeds(field, seeds, params, cfg),
    }
}

/// One `x y z` line per point, a blank line between streamlines.
pub fn write_polylines<W: Write>(lines: &[Streamline], mut w: W) -> io::Result<()> {
    for (n, s) in lines.iter().enumerate() {
        if n > 0 {
            writeln!(w)?;
        }
        for p in &s.points {
            writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
        }
    }
    Ok(())
}

/// OBJ vertices plus one `l` element per streamline with at least two points.
pub fn write_obj_lines<W: Write>(lines: &[Streamline], mut w: W) -> io::Result<()> {
    for p in lines.iter().flat_map(|s| &s.points) {
        writeln!(w, "v {} {} {}", p[0], p[1], p[2])?;
    }
    let mut base = 1;
    for s in lines {
        if s.points.len() >= 2 {
            write!(w, "l")?;
            for v in base..base + s.points.len() {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        base += s.points.len();
    }
    Ok(())
}
