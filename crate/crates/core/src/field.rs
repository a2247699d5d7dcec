//! Structured grids: shape, storage, point location and interpolation.
//!
//! Values are stored row-major with x varying fastest, vector components
//! interleaved per node. A 2D field is a 3D field with `nz == 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("dimensions must be >= 1 per axis, got {0}x{1}x{2}")]
    ZeroDim(usize, usize, usize),
    #[error("point count {0}x{1}x{2} overflows the index type")]
    TooLarge(usize, usize, usize),
    #[error("index ({i}, {j}, {k}) out of range for {dims}")]
    IndexOutOfRange { i: usize, j: usize, k: usize, dims: Dims },
    #[error("linear index {index} out of range for {len} points")]
    LinearOutOfRange { index: usize, len: usize },
    #[error("component count must be 1 or 3, got {0}")]
    BadComponents(usize),
    #[error("spacing must be finite and positive on every axis, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("field must be {0}")]
    WrongShape(&'static str),
}

/// Point counts per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self, FieldError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(FieldError::ZeroDim(nx, ny, nz));
        }
        nx.checked_mul(ny)
            .and_then(|p| p.checked_mul(nz))
            .ok_or(FieldError::TooLarge(nx, ny, nz))?;
        Ok(Self { nx, ny, nz })
    }

    pub fn new_2d(nx: usize, ny: usize) -> Result<Self, FieldError> {
        Self::new(nx, ny, 1)
    }

    pub fn cube(n: usize) -> Result<Self, FieldError> {
        Self::new(n, n, n)
    }

    pub fn point_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn is_2d(&self) -> bool {
        self.nz == 1
    }

    /// Number of cells, i.e. `(n - 1)` per axis. Zero when any axis (other
    /// than z of a 2D grid) has a single point.
    pub fn cell_count(&self) -> usize {
        let cz = if self.nz == 1 { 1 } else { self.nz - 1 };
        self.nx.saturating_sub(1) * self.ny.saturating_sub(1) * cz
    }

    pub fn contains(&self, i: usize, j: usize, k: usize) -> bool {
        i < self.nx && j < self.ny && k < self.nz
    }

    /// Inverse of [`linear_index`].
    pub fn unravel(&self, index: usize) -> Result<[usize; 3], FieldError> {
        let len = self.point_count();
        if index >= len {
            return Err(FieldError::LinearOutOfRange { index, len });
        }
        let i = index % self.nx;
        let rest = index / self.nx;
        Ok([i, rest % self.ny, rest / self.ny])
    }
}

/// Flat offset of node `(i, j, k)`: `(k * ny + j) * nx + i`.
pub fn linear_index(i: usize, j: usize, k: usize, dims: Dims) -> Result<usize, FieldError> {
    if !dims.contains(i, j, k) {
        return Err(FieldError::IndexOutOfRange { i, j, k, dims });
    }
    Ok((k * dims.ny + j) * dims.nx + i)
}

/// Result of locating a world-space point in the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellLocation {
    pub inside: bool,
    pub cell: [usize; 3],
    /// Parametric coordinates within `cell`, each in `[0, 1]`.
    pub uvw: [f64; 3],
}

impl CellLocation {
    const OUTSIDE: Self = Self { inside: false, cell: [0; 3], uvw: [0.0; 3] };
}

/// A scalar or 3-vector field sampled on a uniform rectilinear grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredField {
    dims: Dims,
    origin: [f64; 3],
    spacing: [f64; 3],
    components: usize,
    values: Vec<f32>,
}

impl StructuredField {
    pub fn new(
        dims: Dims,
        origin: [f64; 3],
        spacing: [f64; 3],
        components: usize,
        values: Vec<f32>,
    ) -> Result<Self, FieldError> {
        if components != 1 && components != 3 {
            return Err(FieldError::BadComponents(components));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(FieldError::BadSpacing(spacing));
        }
        let expected = dims.point_count() * components;
        if values.len() != expected {
            return Err(FieldError::LengthMismatch { expected, actual: values.len() });
        }
        Ok(Self { dims, origin, spacing, components, values })
    }

    /// Scalar field with unit spacing at the origin.
    pub fn scalar(dims: Dims, values: Vec<f32>) -> Result<Self, FieldError> {
        Self::new(dims, [0.0; 3], [1.0; 3], 1, values)
    }

    /// Builds a field by evaluating `f` at every node position, in storage order.
    pub fn from_fn<F>(
        dims: Dims,
        origin: [f64; 3],
        spacing: [f64; 3],
        components: usize,
        mut f: F,
    ) -> Result<Self, FieldError>
    where
        F: FnMut([f64; 3]) -> [f32; 3],
    {
        let mut values = Vec::with_capacity(dims.point_count() * components);
        for k in 0..dims.nz {
            for j in 0..dims.ny {
                for i in 0..dims.nx {
                    let p = [
                        origin[0] + spacing[0] * i as f64,
                        origin[1] + spacing[1] * j as f64,
                        origin[2] + spacing[2] * k as f64,
                    ];
                    values.extend_from_slice(&f(p)[..components]);
                }
            }
        }
        Self::new(dims, origin, spacing, components, values)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Node value (component `c`) at `(i, j, k)`. Panics when out of range.
    pub fn get(&self, i: usize, j: usize, k: usize, c: usize) -> f32 {
        debug_assert!(self.dims.contains(i, j, k) && c < self.components);
        self.values[((k * self.dims.ny + j) * self.dims.nx + i) * self.components + c]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + self.spacing[0] * i as f64,
            self.origin[1] + self.spacing[1] * j as f64,
            self.origin[2] + self.spacing[2] * k as f64,
        ]
    }

    /// Upper corner of the domain, `origin + spacing * (dims - 1)`.
    pub fn max_corner(&self) -> [f64; 3] {
        let n = self.dims.as_array();
        std::array::from_fn(|a| self.origin[a] + self.spacing[a] * (n[a] - 1) as f64)
    }

    /// Same shape and geometry, new values.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Self, FieldError> {
        Self::new(self.dims, self.origin, self.spacing, self.components, values)
    }

    pub fn range(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Finds the cell containing `p`. Points on the max face belong to the
    /// last cell; a single-point axis only admits its origin coordinate.
    pub fn locate_cell(&self, p: [f64; 3]) -> CellLocation {
        let n = self.dims.as_array();
        let mut cell = [0usize; 3];
        let mut uvw = [0.0f64; 3];
        for a in 0..3 {
            let t = (p[a] - self.origin[a]) / self.spacing[a];
            if !t.is_finite() {
                return CellLocation::OUTSIDE;
            }
            if n[a] == 1 {
                if t.abs() > 1e-9 {
                    return CellLocation::OUTSIDE;
                }
                continue;
            }
            let last = (n[a] - 1) as f64;
            if t < 0.0 || t > last {
                return CellLocation::OUTSIDE;
            }
            let c = (t.floor() as usize).min(n[a] - 2);
            cell[a] = c;
            uvw[a] = t - c as f64;
        }
        CellLocation { inside: true, cell, uvw }
    }

    /// Trilinear (bilinear for 2D) interpolation of every component at `p`.
    ///
    /// Returns `None` outside the domain. Unused trailing components are 0.
    pub fn interpolate(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let loc = self.locate_cell(p);
        if !loc.inside {
            return None;
        }
        Some(self.interpolate_in_cell(loc.cell, loc.uvw))
    }

    pub fn interpolate_scalar(&self, p: [f64; 3]) -> Option<f64> {
        self.interpolate(p).map(|v| v[0])
    }

    pub(crate) fn interpolate_in_cell(&self, cell: [usize; 3], uvw: [f64; 3]) -> [f64; 3] {
        let Dims { nx, ny, nz } = self.dims;
        let [i0, j0, k0] = cell;
        let i1 = (i0 + 1).min(nx - 1);
        let j1 = (j0 + 1).min(ny - 1);
        let k1 = (k0 + 1).min(nz - 1);
        let [u, v, w] = uvw;
        let nc = self.components;
        let mut out = [0.0f64; 3];
        let corners = [
            (i0, j0, k0, (1.0 - u) * (1.0 - v) * (1.0 - w)),
            (i1, j0, k0, u * (1.0 - v) * (1.0 - w)),
            (i0, j1, k0, (1.0 - u) * v * (1.0 - w)),
            (i1, j1, k0, u * v * (1.0 - w)),
            (i0, j0, k1, (1.0 - u) * (1.0 - v) * w),
            (i1, j0, k1, u * (1.0 - v) * w),
            (i0, j1, k1, (1.0 - u) * v * w),
            (i1, j1, k1, u * v * w),
        ];
        for (i, j, k, weight) in corners {
            let base = ((k * ny + j) * nx + i) * nc;
            for (c, slot) in out.iter_mut().enumerate().take(nc) {
                *slot += weight * f64::from(self.values[base + c]);
            }
        }
        out
    }
}

/// Signed distance to a sphere: `|node - center| - radius`, unit spacing at the origin.
pub fn gen_sphere_field(dims: Dims, center: [f64; 3], radius: f64) -> Result<StructuredField, FieldError> {
    if !(radius > 0.0) {
        return Err(FieldError::BadRadius(radius));
    }
    StructuredField::from_fn(dims, [0.0; 3], [1.0; 3], 1, |p| {
        let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt();
        [(d - radius) as f32, 0.0, 0.0]
    })
}

/// Rigid rotation about the z axis, `v = (-y, x, 0)`, on a unit-spaced grid
/// centered on the origin.
pub fn gen_rotational_field(dims: Dims) -> Result<StructuredField, FieldError> {
    if dims.is_2d() {
        return Err(FieldError::WrongShape("3D"));
    }
    let origin = dims.as_array().map(|n| -((n - 1) as f64) / 2.0);
    StructuredField::from_fn(dims, origin, [1.0; 3], 3, |p| [-p[1] as f32, p[0] as f32, 0.0])
}

/// 2D image that is 1 at `(i, j)` and 0 elsewhere.
pub fn gen_impulse_image(dims: Dims, at: (usize, usize)) -> Result<StructuredField, FieldError> {
    if !dims.is_2d() {
        return Err(FieldError::WrongShape("2D"));
    }
    let idx = linear_index(at.0, at.1, 0, dims)?;
    let mut values = vec![0.0f32; dims.point_count()];
    values[idx] = 1.0;
    StructuredField::scalar(dims, values)
}

/// Uniform noise in `[0, 1)` from a seeded generator, unit spacing at the origin.
pub fn gen_noise_field(dims: Dims, seed: u64) -> StructuredField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..dims.point_count()).map(|_| rng.gen::<f32>()).collect();
    StructuredField::scalar(dims, values).expect("length matches dims")
}
