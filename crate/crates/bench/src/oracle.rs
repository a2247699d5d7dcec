//! Reference implementations used to check the kernels.
//!
//! These deliberately share no code paths with the kernels they check: the
//! Gaussian weights, window walks and cell classification are all written
//! out again in the most literal form.

use vizbench_core::field::StructuredField;
use vizbench_core::isocontour::tables::TRIANGLE_TABLE;

/// Normalized `size x size` Gaussian weights, row-major.
pub fn gaussian_weights(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as i64;
    let mut w = Vec::with_capacity(size * size);
    for y in -r..=r {
        for x in -r..=r {
            if r == 0 {
                w.push(1.0);
                continue;
            }
            let d = ((x * x + y * y) as f64).sqrt() / r as f64;
            w.push((-(d * d) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Double-loop Gaussian smoothing with per-pixel renormalization over the
/// part of the window that lies inside the image.
pub fn naive_smooth(values: &[f32], nx: usize, ny: usize, size: usize, sigma: f64) -> Vec<f64> {
    let w = gaussian_weights(size, sigma);
    let r = (size / 2) as i64;
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny as i64 {
        for i in 0..nx as i64 {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for y in -r..=r {
                for x in -r..=r {
                    let (px, py) = (i + x, j + y);
                    if px < 0 || py < 0 || px >= nx as i64 || py >= ny as i64 {
                        continue;
                    }
                    let wk = w[((y + r) * (2 * r + 1) + (x + r)) as usize];
                    acc += wk * f64::from(values[(py * nx as i64 + px) as usize]);
                    wsum += wk;
                }
            }
            out[(j * nx as i64 + i) as usize] = acc / wsum;
        }
    }
    out
}

/// FLOPs a stencil pass should tally: two per in-bounds window tap, plus one
/// renormalizing division for every pixel whose window is clipped.
pub fn stencil_flops(nx: usize, ny: usize, radius: usize) -> u64 {
    let extent = |n: usize, i: usize| (i.min(radius) + (n - 1 - i).min(radius) + 1) as u64;
    let sx: u64 = (0..nx).map(|i| extent(nx, i)).sum();
    let sy: u64 = (0..ny).map(|j| extent(ny, j)).sum();
    let interior = |n: usize| n.saturating_sub(2 * radius) as u64;
    let clipped = (nx * ny) as u64 - interior(nx) * interior(ny);
    2 * sx * sy + clipped
}

/// Triangles Marching Cubes should emit for `field` at `isovalue`: each cell
/// is classified independently and the reference table row of its case (or of
/// its complement, whichever has fewer corners above) is counted.
pub fn mc_triangle_count(field: &StructuredField, isovalue: f64) -> usize {
    let d = field.dims();
    let corners = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)];
    let mut total = 0;
    for k in 0..d.nz - 1 {
        for j in 0..d.ny - 1 {
            for i in 0..d.nx - 1 {
                let mut case = 0usize;
                for (bit, (di, dj, dk)) in corners.iter().enumerate() {
                    if f64::from(field.get(i + di, j + dj, k + dk, 0)) > isovalue {
                        case |= 1 << bit;
                    }
                }
                let above = case.count_ones();
                let row = if above > 4 || (above == 4 && 255 - case < case) { 255 - case } else { case };
                total += TRIANGLE_TABLE[row].iter().take_while(|&&e| e >= 0).count() / 3;
            }
        }
    }
    total
}

/// Exact position after rotating `p` about the z axis for time `t`.
pub fn rotate_z(p: [f64; 3], t: f64) -> [f64; 3] {
    let (s, c) = t.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}
