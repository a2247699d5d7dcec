//! Marching Cubes isosurface extraction on 3D scalar grids.
//!
//! [`contour_serial`] visits cells in storage order on the calling thread.
//! [`contour_dpp`] expresses the same algorithm as three dispatches over
//! cells: classify and count, scan the counts into output offsets, then write
//! each cell's triangles at its offset. Both emit triangles in cell order, so
//! their outputs coincide exactly.
//!
//! Vertices are emitted per triangle without welding.

pub mod tables;

use std::io::{self, Write};

use thiserror::Error;

use crate::dpp::{self, DppError, ExecConfig};
use crate::field::{Dims, StructuredField};
use crate::perf::add_flops;
use tables::{CASE_TRIANGLES, CORNER_OFFSETS, EDGE_CORNERS};

/// FLOPs tallied per interpolated vertex: the parameter `t` (3) and the lerp (9).
pub const EDGE_INTERP_FLOPS: u64 = 12;

#[derive(Debug, Error, PartialEq)]
pub enum IsoError {
    #[error("NaN corner value in cell classification")]
    NanValue,
    #[error("isocontouring needs a 3D scalar field with at least 2 points per axis, got {dims} with {components} component(s)")]
    BadField { dims: Dims, components: usize },
    #[error(transparent)]
    Dispatch(#[from] DppError),
}

/// Case index of a cell: bit `b` is set iff `corner_values[b] > isovalue`.
pub fn classify_cell(corner_values: &[f64; 8], isovalue: f64) -> Result<u8, IsoError> {
    let mut case = 0u8;
    for (b, &v) in corner_values.iter().enumerate() {
        if v.is_nan() {
            return Err(IsoError::NanValue);
        }
        if v > isovalue {
            case |= 1 << b;
        }
    }
    Ok(case)
}

pub fn case_triangle_count(case: u8) -> usize {
    CASE_TRIANGLES[case as usize].as_slice().len()
}

/// Point where the isovalue crosses the segment `p0`-`p1`.
/// Falls back to the midpoint when the end values are indistinguishable.
pub fn interpolate_edge(p0: [f64; 3], p1: [f64; 3], v0: f64, v1: f64, isovalue: f64) -> [f64; 3] {
    add_flops(EDGE_INTERP_FLOPS);
    if (v1 - v0).abs() < 1e-12 {
        return std::array::from_fn(|a| 0.5 * (p0[a] + p1[a]));
    }
    let t = (isovalue - v0) / (v1 - v0);
    std::array::from_fn(|a| p0[a] + t * (p1[a] - p0[a]))
}

pub type Triangle = [[f32; 3]; 3];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn from_triangles(tris: &[Triangle]) -> Self {
        let vertices = tris.iter().flatten().copied().collect();
        let triangles = (0..tris.len() as u32).map(|t| [3 * t, 3 * t + 1, 3 * t + 2]).collect();
        Self { vertices, triangles }
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle(&self, t: usize) -> Triangle {
        self.triangles[t].map(|v| self.vertices[v as usize])
    }

    /// Triangles with vertices sorted lexicographically, then sorted as a
    /// list, for order-insensitive comparison.
    pub fn canonical_triangles(&self) -> Vec<[[u32; 3]; 3]> {
        let mut out: Vec<[[u32; 3]; 3]> = (0..self.triangle_count())
            .map(|t| {
                let mut tri = self.triangle(t).map(|v| v.map(f32::to_bits));
                tri.sort_by(|a, b| {
                    let fa = a.map(f32::from_bits);
                    let fb = b.map(f32::from_bits);
                    fa.partial_cmp(&fb).unwrap_or(std::cmp::Ordering::Equal)
                });
                tri
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    pub fn write_stl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = [0u8; 80];
        let tag = b"vizbench isosurface";
        header[..tag.len()].copy_from_slice(tag);
        w.write_all(&header)?;
        w.write_all(&(self.triangles.len() as u32).to_le_bytes())?;
        for t in 0..self.triangle_count() {
            let [a, b, c] = self.triangle(t);
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            let n = if len > 0.0 { n.map(|x| x / len) } else { [0.0; 3] };
            for vec in [n, a, b, c] {
                for x in vec {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            w.write_all(&[0, 0])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContourStrategy {
    Serial,
    Dpp,
}

impl ContourStrategy {
    pub const ALL: [Self; 2] = [Self::Serial, Self::Dpp];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Serial => "serial",
            Self::Dpp => "dpp",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContourOptions {
    /// Recompute case indices in the generate phase instead of reusing phase 1.
    pub reclassify: bool,
}

fn check_field(field: &StructuredField) -> Result<(), IsoError> {
    let d = field.dims();
    if field.components() != 1 || d.nx < 2 || d.ny < 2 || d.nz < 2 {
        return Err(IsoError::BadField { dims: d, components: field.components() });
    }
    Ok(())
}

/// Read-only view of the grid with cell-level helpers.
struct Cells<'a> {
    field: &'a StructuredField,
    cx: usize,
    cy: usize,
}

impl<'a> Cells<'a> {
    fn new(field: &'a StructuredField) -> Self {
        let d = field.dims();
        Self { field, cx: d.nx - 1, cy: d.ny - 1 }
    }

    fn count(&self) -> usize {
        self.field.dims().cell_count()
    }

    fn cell_of(&self, index: usize) -> [usize; 3] {
        [index % self.cx, (index / self.cx) % self.cy, index / (self.cx * self.cy)]
    }

    fn corner_values(&self, [i, j, k]: [usize; 3]) -> [f64; 8] {
        CORNER_OFFSETS.map(|[di, dj, dk]| f64::from(self.field.get(i + di, j + dj, k + dk, 0)))
    }

    fn write_triangles(&self, cell: [usize; 3], values: &[f64; 8], case: u8, isovalue: f64, out: &mut [Triangle]) {
        let [i, j, k] = cell;
        let corner = |c: usize| {
            let [di, dj, dk] = CORNER_OFFSETS[c];
            self.field.node_position(i + di, j + dj, k + dk)
        };
        for (slot, edges) in out.iter_mut().zip(CASE_TRIANGLES[case as usize].as_slice()) {
            *slot = edges.map(|e| {
                let [a, b] = EDGE_CORNERS[e as usize];
                interpolate_edge(corner(a), corner(b), values[a], values[b], isovalue).map(|x| x as f32)
            });
        }
    }
}

/// Single-threaded Marching Cubes over every cell.
pub fn contour_serial(field: &StructuredField, isovalue: f64) -> Result<TriangleMesh, IsoError> {
    check_field(field)?;
    let cells = Cells::new(field);
    let mut tris: Vec<Triangle> = Vec::new();
    let mut scratch = [[[0.0f32; 3]; 3]; 5];
    for index in 0..cells.count() {
        let cell = cells.cell_of(index);
        let values = cells.corner_values(cell);
        let case = classify_cell(&values, isovalue)?;
        let n = case_triangle_count(case);
        if n > 0 {
            cells.write_triangles(cell, &values, case, isovalue, &mut scratch[..n]);
            tris.extend_from_slice(&scratch[..n]);
        }
    }
    Ok(TriangleMesh::from_triangles(&tris))
}

/// Sentinel case marking a cell with a NaN corner.
const NAN_CASE: u16 = u16::MAX;

/// Classify/scan/generate pipeline over the data-parallel runtime.
pub fn contour_dpp(
    field: &StructuredField,
    isovalue: f64,
    cfg: &ExecConfig,
    opts: ContourOptions,
) -> Result<TriangleMesh, IsoError> {
    check_field(field)?;
    let cells = Cells::new(field);
    let n = cells.count();

    // Phase 1: case index and triangle count per cell.
    let mut classes = vec![(0u16, 0usize); n];
    dpp::dispatch_field_map(&mut classes, cfg, |index, slot| {
        let values = cells.corner_values(cells.cell_of(index));
        *slot = match classify_cell(&values, isovalue) {
            Ok(case) => (u16::from(case), case_triangle_count(case)),
            Err(_) => (NAN_CASE, 0),
        };
    })?;
    if classes.iter().any(|c| c.0 == NAN_CASE) {
        return Err(IsoError::NanValue);
    }

    // Phase 2: output offsets.
    let mut counts = vec![0usize; n];
    dpp::dispatch_field_map(&mut counts, cfg, |index, slot| *slot = classes[index].1)?;
    let plan = dpp::build_scatter(counts)?;

    // Phase 3: each cell writes its own triangles.
    let mut tris = vec![[[0.0f32; 3]; 3]; plan.total];
    dpp::dispatch_scatter(&plan, &mut tris, cfg, |index, out| {
        let cell = cells.cell_of(index);
        let values = cells.corner_values(cell);
        let case = if opts.reclassify {
            classify_cell(&values, isovalue).expect("classified in phase 1")
        } else {
            classes[index].0 as u8
        };
        cells.write_triangles(cell, &values, case, isovalue, out);
    })?;
    Ok(TriangleMesh::from_triangles(&tris))
}

pub fn contour(
    strategy: ContourStrategy,
    field: &StructuredField,
    isovalue: f64,
    cfg: &ExecConfig,
    opts: ContourOptions,
) -> Result<TriangleMesh, IsoError> {
    match strategy {
        ContourStrategy::Serial => contour_serial(field, isovalue),
        ContourStrategy::Dpp => contour_dpp(field, isovalue, cfg, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gen_noise_field, gen_sphere_field};
    use crate::perf::software_counter_report;

    fn corners_with(above: &[usize]) -> [f64; 8] {
        std::array::from_fn(|b| if above.contains(&b) { 1.0 } else { 0.0 })
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_cell(&[0.0; 8], 0.5).unwrap(), 0);
        assert_eq!(classify_cell(&[1.0; 8], 0.5).unwrap(), 255);
        assert_eq!(classify_cell(&corners_with(&[0]), 0.5).unwrap(), 1);
        assert_eq!(case_triangle_count(1), 1);
        // Equality counts as below.
        assert_eq!(classify_cell(&[0.5; 8], 0.5).unwrap(), 0);
        let mut nan = [0.0; 8];
        nan[3] = f64::NAN;
        assert_eq!(classify_cell(&nan, 0.5), Err(IsoError::NanValue));
    }

    #[test]
    fn edge_interpolation_examples() {
        let (p0, p1) = ([0.0, 0.0, 0.0], [3.0, 6.0, 9.0]);
        assert_eq!(interpolate_edge(p0, p1, 0.0, 1.0, 0.5), [1.5, 3.0, 4.5]);
        assert_eq!(interpolate_edge(p0, p1, 2.0, 7.0, 2.0), p0);
        let q = interpolate_edge(p0, p1, 1.0, 4.0, 2.0);
        for (a, b) in q.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(interpolate_edge(p0, p1, 1.0, 1.0, 1.0), [1.5, 3.0, 4.5]);
    }

    #[test]
    fn rejects_bad_fields() {
        let flat = gen_noise_field(Dims::new_2d(4, 4).unwrap(), 0);
        assert!(matches!(contour_serial(&flat, 0.5), Err(IsoError::BadField { .. })));
        let thin = gen_noise_field(Dims::new(1, 4, 4).unwrap(), 0);
        assert!(matches!(
            contour_dpp(&thin, 0.5, &ExecConfig::default(), ContourOptions::default()),
            Err(IsoError::BadField { .. })
        ));
    }

    #[test]
    fn nan_fails_both_paths() {
        let d = Dims::cube(3).unwrap();
        let mut v = vec![0.0f32; 27];
        v[13] = f32::NAN;
        let f = StructuredField::scalar(d, v).unwrap();
        assert_eq!(contour_serial(&f, 0.5), Err(IsoError::NanValue));
        assert_eq!(contour_dpp(&f, 0.5, &ExecConfig::default(), ContourOptions::default()), Err(IsoError::NanValue));
    }

    #[test]
    fn single_cell_one_corner() {
        let f = StructuredField::scalar(Dims::cube(2).unwrap(), vec![0.0; 8]).unwrap();
        assert_eq!(contour_serial(&f, 0.5).unwrap().triangle_count(), 0);
        let mut v = vec![0.0f32; 8];
        v[0] = 1.0; // node (0,0,0) is corner 0
        let f = StructuredField::scalar(Dims::cube(2).unwrap(), v).unwrap();
        let m = contour_serial(&f, 0.5).unwrap();
        assert_eq!(m.triangle_count(), 1);
        let mut verts = m.vertices.clone();
        verts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(verts, vec![[0.0, 0.0, 0.5], [0.0, 0.5, 0.0], [0.5, 0.0, 0.0]]);
    }

    #[test]
    fn serial_and_dpp_agree_on_sphere() {
        let d = Dims::cube(20).unwrap();
        let f = gen_sphere_field(d, [9.5, 9.5, 9.5], 6.0).unwrap();
        let serial = contour_serial(&f, 0.0).unwrap();
        assert!(serial.triangle_count() > 100);
        for (t, reclassify) in [(1, false), (3, false), (4, true)] {
            let c = ExecConfig::new(t, 97).unwrap();
            let dpp = contour_dpp(&f, 0.0, &c, ContourOptions { reclassify }).unwrap();
            assert_eq!(dpp, serial);
        }
    }

    #[test]
    fn flop_tally_counts_vertices() {
        let f = gen_sphere_field(Dims::cube(10).unwrap(), [4.5; 3], 3.0).unwrap();
        let (mesh, s) = software_counter_report(|| contour_serial(&f, 0.0).unwrap());
        assert_eq!(s.flops_scalar, Some(3 * EDGE_INTERP_FLOPS * mesh.triangle_count() as u64));
        let (_, s2) = software_counter_report(|| {
            contour_dpp(&f, 0.0, &ExecConfig::new(3, 50).unwrap(), ContourOptions::default()).unwrap()
        });
        assert_eq!(s2.flops_scalar, s.flops_scalar);
    }

    #[test]
    fn mesh_writers() {
        let f = gen_sphere_field(Dims::cube(6).unwrap(), [2.5; 3], 1.5).unwrap();
        let m = contour_serial(&f, 0.0).unwrap();
        let mut stl = Vec::new();
        m.write_stl(&mut stl).unwrap();
        assert_eq!(stl.len(), 84 + 50 * m.triangle_count());
        assert_eq!(u32::from_le_bytes(stl[80..84].try_into().unwrap()) as usize, m.triangle_count());
        let mut obj = Vec::new();
        m.write_obj(&mut obj).unwrap();
        let text = String::from_utf8(obj).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), m.vertices.len());
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), m.triangle_count());
        assert!(text.contains("\nf 1 2 3\n"));
    }
}
