//! Gaussian smoothing of 2D images in three execution styles.
//!
//! - [`smooth_direct`]: coarse-grained, each worker owns a contiguous band of scanlines.
//! - [`smooth_field_map`]: one field-map worklet per pixel; the worklet derives
//!   `(i, j)` from the flat index and indexes the input array itself.
//! - [`smooth_point_neighborhood`]: one point-neighborhood worklet per pixel,
//!   reading through the neighborhood accessor.
//!
//! All three clamp the window at the image border and renormalize by the sum
//! of the weights that remain, so they agree bit for bit. Each pixel tallies
//! two FLOPs per window element plus one for the renormalizing divide.

use thiserror::Error;

use crate::dpp::{self, BoundaryState, DppError, ExecConfig};
use crate::field::{FieldError, StructuredField};
use crate::perf::add_flops;
use crate::pool;

#[derive(Debug, Error, PartialEq)]
pub enum StencilError {
    #[error("kernel size must be odd and positive, got {0}")]
    BadSize(usize),
    #[error("sigma must be finite and positive, got {0}")]
    BadSigma(f64),
    #[error("input must be a 2D scalar image, got {dims} with {components} component(s)")]
    NotAnImage { dims: crate::field::Dims, components: usize },
    #[error(transparent)]
    Dispatch(#[from] DppError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Normalized `R x R` Gaussian weights.
///
/// The distance between pixels is measured in units of the kernel half-width,
/// so `sigma` is relative to the window: `w = exp(-(d / r)^2 / (2 sigma^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    size: usize,
    sigma: f64,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(size: usize, sigma: f64) -> Result<Self, StencilError> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(StencilError::BadSize(size));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(StencilError::BadSigma(sigma));
        }
        if size == 1 {
            return Ok(Self { size, sigma, weights: vec![1.0] });
        }
        let r = (size / 2) as f64;
        let mut weights = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let dx = x as f64 - r;
                let dy = y as f64 - r;
                let delta = (dx * dx + dy * dy).sqrt() / r;
                weights.push((-0.5 * (delta / sigma).powi(2)).exp());
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { size, sigma, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Row-major weights, `size * size` entries.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(dx, dy)` from the center.
    #[inline]
    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius() as isize;
        self.weights[((dy + r) as usize) * self.size + (dx + r) as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StencilStrategy {
    Direct,
    FieldMap,
    PointNeighborhood,
}

impl StencilStrategy {
    pub const ALL: [Self; 3] = [Self::Direct, Self::FieldMap, Self::PointNeighborhood];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::FieldMap => "field-map",
            Self::PointNeighborhood => "point-neighborhood",
        }
    }
}

pub fn smooth(
    strategy: StencilStrategy,
    image: &StructuredField,
    kernel: &GaussianKernel,
    cfg: &ExecConfig,
) -> Result<StructuredField, StencilError> {
    match strategy {
        StencilStrategy::Direct => smooth_direct(image, kernel, cfg),
        StencilStrategy::FieldMap => smooth_field_map(image, kernel, cfg),
        StencilStrategy::PointNeighborhood => smooth_point_neighborhood(image, kernel, cfg),
    }
}

fn check_image(image: &StructuredField) -> Result<(), StencilError> {
    if image.dims().is_2d() && image.components() == 1 {
        Ok(())
    } else {
        Err(StencilError::NotAnImage { dims: image.dims(), components: image.components() })
    }
}

/// Weighted sum over the window offsets `lo..=hi`, visiting rows then columns.
/// Renormalizes when the window is clamped and tallies the FLOPs spent.
#[inline(always)]
fn window_sum(kernel: &GaussianKernel, lo: [isize; 2], hi: [isize; 2], read: impl Fn(isize, isize) -> f32) -> f32 {
    let r = kernel.radius() as isize;
    let clamped = lo != [-r, -r] || hi != [r, r];
    let mut sum = 0.0f64;
    let mut wsum = 0.0f64;
    for dy in lo[1]..=hi[1] {
        for dx in lo[0]..=hi[0] {
            let w = kernel.weight(dx, dy);
            sum += w * f64::from(read(dx, dy));
            if clamped {
                wsum += w;
            }
        }
    }
    let count = ((hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1)) as u64;
    add_flops(2 * count + u64::from(clamped));
    if clamped {
        (sum / wsum) as f32
    } else {
        sum as f32
    }
}

/// Scanline-parallel smoothing: rows are split into one contiguous band per worker.
pub fn smooth_direct(
    image: &StructuredField,
    kernel: &GaussianKernel,
    cfg: &ExecConfig,
) -> Result<StructuredField, StencilError> {
    check_image(image)?;
    let dims = image.dims();
    let (nx, ny) = (dims.nx, dims.ny);
    let r = kernel.radius();
    let src = image.values();
    let mut out = vec![0.0f32; nx * ny];

    let rows_per_worker = ny.div_ceil(cfg.num_threads());
    let bands: Vec<Vec<(usize, &mut [f32])>> = out
        .chunks_mut(rows_per_worker * nx)
        .enumerate()
        .map(|(b, band)| vec![(b * rows_per_worker, band)])
        .collect();

    pool::run_workers(bands, |_, bands| {
        for (first_row, band) in bands {
            for (dj, row_out) in band.chunks_mut(nx).enumerate() {
                let j = first_row + dj;
                let y_lo = -(j.min(r) as isize);
                let y_hi = (ny - 1 - j).min(r) as isize;
                for (i, px) in row_out.iter_mut().enumerate() {
                    let x_lo = -(i.min(r) as isize);
                    let x_hi = (nx - 1 - i).min(r) as isize;
                    *px = window_sum(kernel, [x_lo, y_lo], [x_hi, y_hi], |dx, dy| {
                        src[(j as isize + dy) as usize * nx + (i as isize + dx) as usize]
                    });
                }
            }
        }
    })
    .map_err(DppError::WorkletPanicked)?;
    Ok(image.with_values(out)?)
}

/// Field-map worklet per pixel with explicit index arithmetic.
pub fn smooth_field_map(
    image: &StructuredField,
    kernel: &GaussianKernel,
    cfg: &ExecConfig,
) -> Result<StructuredField, StencilError> {
    check_image(image)?;
    let dims = image.dims();
    let (nx, ny) = (dims.nx as isize, dims.ny as isize);
    let r = kernel.radius() as isize;
    let src = image.values();
    let mut out = vec![0.0f32; dims.point_count()];
    dpp::dispatch_field_map(&mut out, cfg, |idx, px| {
        let i = idx as isize % nx;
        let j = idx as isize / nx;
        let lo = [(-r).max(-i), (-r).max(-j)];
        let hi = [r.min(nx - 1 - i), r.min(ny - 1 - j)];
        *px = window_sum(kernel, lo, hi, |dx, dy| src[((j + dy) * nx + i + dx) as usize]);
    })?;
    Ok(image.with_values(out)?)
}

/// Point-neighborhood worklet per pixel; bounds come from the boundary state.
pub fn smooth_point_neighborhood(
    image: &StructuredField,
    kernel: &GaussianKernel,
    cfg: &ExecConfig,
) -> Result<StructuredField, StencilError> {
    check_image(image)?;
    let dims = image.dims();
    let r = kernel.radius();
    let mut out = vec![0.0f32; dims.point_count()];
    dpp::dispatch_point_neighborhood(image.values(), dims, &mut out, cfg, |nb, px| {
        let b: &BoundaryState = nb.boundary();
        let lo = b.min_neighbor_indices(r);
        let hi = b.max_neighbor_indices(r);
        *px = window_sum(kernel, [lo[0], lo[1]], [hi[0], hi[1]], |dx, dy| nb.get(dx, dy, 0));
    })?;
    Ok(image.with_values(out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gen_impulse_image, gen_noise_field, Dims};
    use crate::perf::software_counter_report;
    use proptest::prelude::*;

    fn cfg(t: usize) -> ExecConfig {
        ExecConfig::new(t, 64).unwrap()
    }

    /// Straight double loop over each pixel's clamped window.
    fn naive(image: &StructuredField, k: &GaussianKernel) -> Vec<f64> {
        let d = image.dims();
        let r = k.radius() as isize;
        let (nx, ny) = (d.nx as isize, d.ny as isize);
        let mut out = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let (mut s, mut ws) = (0.0, 0.0);
                for y in j - r..=j + r {
                    for x in i - r..=i + r {
                        if x < 0 || y < 0 || x >= nx || y >= ny {
                            continue;
                        }
                        let w = k.weights()[((y - j + r) * (2 * r + 1) + (x - i + r)) as usize];
                        s += w * image.get(x as usize, y as usize, 0, 0) as f64;
                        ws += w;
                    }
                }
                out.push(s / ws);
            }
        }
        out
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(GaussianKernel::new(1, 0.7).unwrap().weights(), &[1.0]);
        let k = GaussianKernel::new(19, 0.33).unwrap();
        assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let k3 = GaussianKernel::new(3, 0.33).unwrap();
        let ratio = k3.weight(1, 0) / k3.weight(0, 0);
        let expect = (-0.5 * (1.0f64 / 0.33).powi(2)).exp();
        assert!((ratio - expect).abs() < 1e-15 * expect.max(1.0));
        assert!((k3.weight(-1, 0) / k3.weight(0, 0) - expect).abs() < 1e-15);

        assert_eq!(GaussianKernel::new(4, 0.33), Err(StencilError::BadSize(4)));
        assert_eq!(GaussianKernel::new(0, 0.33), Err(StencilError::BadSize(0)));
        assert_eq!(GaussianKernel::new(3, 0.0), Err(StencilError::BadSigma(0.0)));
    }

    #[test]
    fn rejects_non_images() {
        let vol = gen_noise_field(Dims::cube(4).unwrap(), 0);
        let k = GaussianKernel::new(3, 0.5).unwrap();
        for s in StencilStrategy::ALL {
            assert!(matches!(smooth(s, &vol, &k, &cfg(1)), Err(StencilError::NotAnImage { .. })));
        }
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let d = Dims::new_2d(17, 11).unwrap();
        let img = StructuredField::scalar(d, vec![3.25; d.point_count()]).unwrap();
        let k = GaussianKernel::new(5, 0.33).unwrap();
        for s in StencilStrategy::ALL {
            let out = smooth(s, &img, &k, &cfg(3)).unwrap();
            assert!(out.values().iter().all(|v| (v - 3.25).abs() <= 3.25 * 1e-6), "{}", s.name());
        }
    }

    #[test]
    fn interior_impulse_reproduces_weights() {
        let d = Dims::new_2d(15, 15).unwrap();
        let img = gen_impulse_image(d, (7, 7)).unwrap();
        let k = GaussianKernel::new(5, 0.33).unwrap();
        for s in StencilStrategy::ALL {
            let out = smooth(s, &img, &k, &cfg(2)).unwrap();
            for j in 0..15isize {
                for i in 0..15isize {
                    let (dx, dy) = (7 - i, 7 - j);
                    let expect = if dx.abs() <= 2 && dy.abs() <= 2 { k.weight(dx, dy) as f32 } else { 0.0 };
                    assert_eq!(out.get(i as usize, j as usize, 0, 0), expect);
                }
            }
        }
    }

    #[test]
    fn corner_impulse_is_renormalized() {
        let d = Dims::new_2d(6, 6).unwrap();
        let img = gen_impulse_image(d, (0, 0)).unwrap();
        let k = GaussianKernel::new(3, 0.33).unwrap();
        // In-bounds window at (0,0): offsets (0,0), (1,0), (0,1), (1,1).
        let inb = k.weight(0, 0) + k.weight(1, 0) + k.weight(0, 1) + k.weight(1, 1);
        let expect = (k.weight(0, 0) / inb) as f32;
        let out = smooth_point_neighborhood(&img, &k, &cfg(1)).unwrap();
        assert_eq!(out.get(0, 0, 0, 0), expect);
    }

    #[test]
    fn strategies_match_naive_oracle() {
        let d = Dims::new_2d(64, 64).unwrap();
        for (size, seed) in [(5, 1u64), (19, 2)] {
            let img = gen_noise_field(d, seed);
            let k = GaussianKernel::new(size, 0.33).unwrap();
            let oracle = naive(&img, &k);
            let direct = smooth_direct(&img, &k, &cfg(1)).unwrap();
            for s in StencilStrategy::ALL {
                for t in [1, 2, 4] {
                    let out = smooth(s, &img, &k, &cfg(t)).unwrap();
                    assert_eq!(out.values(), direct.values(), "{} x{t}", s.name());
                    for (a, b) in out.values().iter().zip(&oracle) {
                        assert!((*a as f64 - b).abs() <= 1e-6 * b.abs());
                    }
                }
            }
        }
    }

    #[test]
    fn flop_tally_matches_window_enumeration() {
        let img = gen_noise_field(Dims::new_2d(4, 4).unwrap(), 9);
        let k = GaussianKernel::new(3, 0.33).unwrap();
        for s in StencilStrategy::ALL {
            for t in [1, 3] {
                let (_, sample) = software_counter_report(|| smooth(s, &img, &k, &cfg(t)).unwrap());
                assert_eq!(sample.flops_scalar, Some(212), "{} x{t}", s.name());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn smoothing_is_linear(
            seed in any::<u64>(),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
            nx in 1usize..20,
            ny in 1usize..20,
            size in prop::sample::select(vec![1usize, 3, 5, 7]),
        ) {
            let d = Dims::new_2d(nx, ny).unwrap();
            let f = gen_noise_field(d, seed);
            let g = gen_noise_field(d, seed ^ 0x5555);
            let combo: Vec<f32> = f.values().iter().zip(g.values())
                .map(|(x, y)| (a * *x as f64 + b * *y as f64) as f32).collect();
            let h = f.with_values(combo).unwrap();
            let k = GaussianKernel::new(size, 0.33).unwrap();
            let sf = smooth_direct(&f, &k, &cfg(1)).unwrap();
            let sg = smooth_direct(&g, &k, &cfg(1)).unwrap();
            let sh = smooth_field_map(&h, &k, &cfg(2)).unwrap();
            for ((x, y), z) in sf.values().iter().zip(sg.values()).zip(sh.values()) {
                let lin = a * *x as f64 + b * *y as f64;
                prop_assert!((*z as f64 - lin).abs() < 1e-5);
            }
        }

        #[test]
        fn thread_count_never_changes_output(
            seed in any::<u64>(),
            nx in 1usize..40,
            ny in 1usize..40,
            threads in 1usize..9,
            chunk in 1usize..100,
        ) {
            let img = gen_noise_field(Dims::new_2d(nx, ny).unwrap(), seed);
            let k = GaussianKernel::new(5, 0.33).unwrap();
            let reference = smooth_direct(&img, &k, &cfg(1)).unwrap();
            let c = ExecConfig::new(threads, chunk).unwrap();
            for s in StencilStrategy::ALL {
                let out = smooth(s, &img, &k, &c).unwrap();
                prop_assert_eq!(out.values(), reference.values());
            }
        }
    }
}
