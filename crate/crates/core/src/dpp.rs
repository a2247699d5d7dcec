//! Data-parallel primitives: worklet dispatch, exclusive scan and scatter.
//!
//! Dispatches partition the index range into contiguous chunks of
//! `chunk_size` indices and deal them to workers round-robin. Worklets must
//! only read shared inputs and write the output slot(s) handed to them; under
//! that contract results are independent of thread count and chunk size.

use std::ops::Range;

use thiserror::Error;

use crate::field::Dims;
use crate::perf::tally::MAX_WORKERS;
use crate::pool;

pub const DEFAULT_CHUNK_SIZE: usize = 4096;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DppError {
    #[error("thread count must be in 1..={MAX_WORKERS}, got {0}")]
    BadThreads(usize),
    #[error("chunk size must be >= 1")]
    BadChunkSize,
    #[error("index arithmetic overflowed")]
    Overflow,
    #[error("output length {actual} does not match {expected}")]
    OutputLength { expected: usize, actual: usize },
    #[error("worklet failed: {0}")]
    WorkletPanicked(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    num_threads: usize,
    chunk_size: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { num_threads: 1, chunk_size: DEFAULT_CHUNK_SIZE }
    }
}

impl ExecConfig {
    pub fn new(num_threads: usize, chunk_size: usize) -> Result<Self, DppError> {
        if num_threads == 0 || num_threads > MAX_WORKERS {
            return Err(DppError::BadThreads(num_threads));
        }
        if chunk_size == 0 {
            return Err(DppError::BadChunkSize);
        }
        Ok(Self { num_threads, chunk_size })
    }

    pub fn with_threads(num_threads: usize) -> Result<Self, DppError> {
        Self::new(num_threads, DEFAULT_CHUNK_SIZE)
    }

    pub fn num_threads(&self) -> usize {
        self.num_threads
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }
}

/// `out[0] = 0`, `out[i] = out[i-1] + xs[i-1]`.
pub fn exclusive_scan(xs: &[usize]) -> Result<Vec<usize>, DppError> {
    let mut out = Vec::with_capacity(xs.len());
    let mut running = 0usize;
    for &x in xs {
        out.push(running);
        running = running.checked_add(x).ok_or(DppError::Overflow)?;
    }
    Ok(out)
}

/// Output layout for inputs that each produce a variable number of outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScatterPlan {
    pub counts: Vec<usize>,
    pub offsets: Vec<usize>,
    pub total: usize,
}

impl ScatterPlan {
    pub fn range(&self, input: usize) -> Range<usize> {
        self.offsets[input]..self.offsets[input] + self.counts[input]
    }
}

pub fn build_scatter(counts: Vec<usize>) -> Result<ScatterPlan, DppError> {
    let offsets = exclusive_scan(&counts)?;
    let total = match (offsets.last(), counts.last()) {
        (Some(o), Some(c)) => o.checked_add(*c).ok_or(DppError::Overflow)?,
        _ => 0,
    };
    Ok(ScatterPlan { counts, offsets, total })
}

/// Deals `units` to `threads` workers round-robin, preserving order per worker.
fn deal<U>(units: impl Iterator<Item = U>, threads: usize) -> Vec<Vec<U>> {
    let mut per_worker: Vec<Vec<U>> = (0..threads).map(|_| Vec::new()).collect();
    for (n, u) in units.enumerate() {
        per_worker[n % threads].push(u);
    }
    per_worker.retain(|w| !w.is_empty());
    per_worker
}

/// Invokes `worklet(i, &mut out[i])` exactly once for every `i`.
pub fn dispatch_field_map<T, F>(out: &mut [T], cfg: &ExecConfig, worklet: F) -> Result<(), DppError>
where
    T: Send,
    F: Fn(usize, &mut T) + Sync,
{
    let units = out
        .chunks_mut(cfg.chunk_size)
        .enumerate()
        .map(|(c, slice)| (c * cfg.chunk_size, slice));
    pool::run_workers(deal(units, cfg.num_threads), |_, chunks| {
        for (start, slice) in chunks {
            for (off, slot) in slice.iter_mut().enumerate() {
                worklet(start + off, slot);
            }
        }
    })
    .map_err(DppError::WorkletPanicked)
}

/// Invokes `worklet(i, &mut out[plan.range(i)])` for every input `i`.
pub fn dispatch_scatter<T, F>(plan: &ScatterPlan, out: &mut [T], cfg: &ExecConfig, worklet: F) -> Result<(), DppError>
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    if out.len() != plan.total {
        return Err(DppError::OutputLength { expected: plan.total, actual: out.len() });
    }
    let n = plan.counts.len();
    let mut units: Vec<(Range<usize>, &mut [T])> = Vec::with_capacity(n.div_ceil(cfg.chunk_size));
    let mut rest = out;
    let mut start = 0;
    while start < n {
        let end = (start + cfg.chunk_size).min(n);
        let len = if end == n { plan.total } else { plan.offsets[end] } - plan.offsets[start];
        let (head, tail) = std::mem::take(&mut rest).split_at_mut(len);
        units.push((start..end, head));
        rest = tail;
        start = end;
    }
    pool::run_workers(deal(units.into_iter(), cfg.num_threads), |_, chunks| {
        for (inputs, slice) in chunks {
            let base = plan.offsets[inputs.start];
            for i in inputs {
                let r = plan.range(i);
                worklet(i, &mut slice[r.start - base..r.end - base]);
            }
        }
    })
    .map_err(DppError::WorkletPanicked)
}

/// Center point of a neighborhood invocation and the grid it lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryState {
    pub center: [usize; 3],
    pub dims: Dims,
}

impl BoundaryState {
    /// Most negative offsets within radius `r` that stay in the grid.
    pub fn min_neighbor_indices(&self, r: usize) -> [isize; 3] {
        self.center.map(|c| -(c.min(r) as isize))
    }

    /// Most positive offsets within radius `r` that stay in the grid.
    pub fn max_neighbor_indices(&self, r: usize) -> [isize; 3] {
        let n = self.dims.as_array();
        std::array::from_fn(|a| (n[a] - 1 - self.center[a]).min(r) as isize)
    }

    /// Whether the center's radius-`r` window is cut by the grid boundary.
    pub fn is_clamped(&self, r: usize) -> bool {
        let lo = self.min_neighbor_indices(r);
        let hi = self.max_neighbor_indices(r);
        let n = self.dims.as_array();
        (0..3).any(|a| n[a] > 1 && (lo[a] != -(r as isize) || hi[a] != r as isize))
    }
}

/// Read access to field values around one grid point.
#[derive(Debug, Clone, Copy)]
pub struct Neighborhood<'a> {
    values: &'a [f32],
    boundary: BoundaryState,
}

impl Neighborhood<'_> {
    pub fn boundary(&self) -> &BoundaryState {
        &self.boundary
    }

    /// Value at `center + (di, dj, dk)`. Offsets must keep the point inside
    /// the grid; violations panic in debug builds.
    #[inline]
    pub fn get(&self, di: isize, dj: isize, dk: isize) -> f32 {
        let [ci, cj, ck] = self.boundary.center;
        let Dims { nx, ny, nz } = self.boundary.dims;
        let (i, j, k) = (ci as isize + di, cj as isize + dj, ck as isize + dk);
        debug_assert!(
            (0..nx as isize).contains(&i) && (0..ny as isize).contains(&j) && (0..nz as isize).contains(&k),
            "neighborhood access ({di}, {dj}, {dk}) leaves the grid at center {:?}",
            self.boundary.center
        );
        self.values[((k as usize * ny) + j as usize) * nx + i as usize]
    }
}

/// Invokes `worklet(neighborhood, &mut out[p])` once for every grid point `p`
/// of a scalar field with shape `dims` and values `values`.
pub fn dispatch_point_neighborhood<T, F>(
    values: &[f32],
    dims: Dims,
    out: &mut [T],
    cfg: &ExecConfig,
    worklet: F,
) -> Result<(), DppError>
where
    T: Send,
    F: Fn(&Neighborhood<'_>, &mut T) + Sync,
{
    let n = dims.point_count();
    if values.len() != n {
        return Err(DppError::OutputLength { expected: n, actual: values.len() });
    }
    if out.len() != n {
        return Err(DppError::OutputLength { expected: n, actual: out.len() });
    }
    dispatch_field_map(out, cfg, |idx, slot| {
        let i = idx % dims.nx;
        let rest = idx / dims.nx;
        let boundary = BoundaryState { center: [i, rest % dims.ny, rest / dims.ny], dims };
        worklet(&Neighborhood { values, boundary }, slot);
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn scan_examples() {
        assert_eq!(exclusive_scan(&[3, 1, 0, 2]).unwrap(), vec![0, 3, 4, 4]);
        assert_eq!(exclusive_scan(&[]).unwrap(), Vec::<usize>::new());
        assert_eq!(exclusive_scan(&[0, 0, 0]).unwrap(), vec![0, 0, 0]);
        assert_eq!(exclusive_scan(&[usize::MAX, 1, 0]), Err(DppError::Overflow));
    }

    #[test]
    fn scatter_examples() {
        let p = build_scatter(vec![1, 0, 2]).unwrap();
        assert_eq!(p.offsets, vec![0, 1, 1]);
        assert_eq!(p.total, 3);
        assert_eq!(build_scatter(vec![0, 0, 0, 0]).unwrap().total, 0);
        assert_eq!(build_scatter(vec![]).unwrap().total, 0);
        assert_eq!(build_scatter(vec![usize::MAX, 1]), Err(DppError::Overflow));
    }

    #[test]
    fn config_validation() {
        assert_eq!(ExecConfig::new(0, 1), Err(DppError::BadThreads(0)));
        assert_eq!(ExecConfig::new(1, 0), Err(DppError::BadChunkSize));
        assert_eq!(ExecConfig::default().chunk_size(), DEFAULT_CHUNK_SIZE);
    }

    #[test]
    fn field_map_examples() {
        let input = [5, 3, 8, 1, 9];
        let mut out = [0; 5];
        dispatch_field_map(&mut out, &ExecConfig::new(2, 2).unwrap(), |i, o| *o = input[i]).unwrap();
        assert_eq!(out, input);

        let mut sq = [0usize; 4];
        dispatch_field_map(&mut sq, &ExecConfig::new(3, 1).unwrap(), |i, o| *o = i * i).unwrap();
        assert_eq!(sq, [0, 1, 4, 9]);
    }

    #[test]
    fn each_index_invoked_once() {
        let n = 10_007;
        let hits: Vec<AtomicUsize> = (0..n).map(|_| AtomicUsize::new(0)).collect();
        let mut out = vec![0u8; n];
        for (threads, chunk) in [(1, 4096), (4, 7), (8, 1000), (3, 1)] {
            dispatch_field_map(&mut out, &ExecConfig::new(threads, chunk).unwrap(), |i, _| {
                hits[i].fetch_add(1, Ordering::Relaxed);
            })
            .unwrap();
        }
        assert!(hits.iter().all(|h| h.load(Ordering::Relaxed) == 4));
    }

    #[test]
    fn worklet_panic_becomes_error() {
        let mut out = vec![0u32; 100];
        for threads in [1, 4] {
            let err = dispatch_field_map(&mut out, &ExecConfig::new(threads, 8).unwrap(), |i, o| {
                if i == 57 {
                    panic!("bad index {i}");
                }
                *o = i as u32;
            })
            .unwrap_err();
            assert_eq!(err, DppError::WorkletPanicked("bad index 57".into()));
        }
    }

    #[test]
    fn neighborhood_bounds() {
        let dims = Dims::new_2d(10, 10).unwrap();
        let interior = BoundaryState { center: [5, 5, 0], dims };
        assert_eq!(interior.min_neighbor_indices(2), [-2, -2, 0]);
        assert_eq!(interior.max_neighbor_indices(2), [2, 2, 0]);
        assert!(!interior.is_clamped(2));
        let corner = BoundaryState { center: [0, 0, 0], dims };
        assert_eq!(corner.min_neighbor_indices(2), [0, 0, 0]);
        assert_eq!(corner.max_neighbor_indices(2), [2, 2, 0]);
        assert!(corner.is_clamped(2));
        let far = BoundaryState { center: [9, 8, 0], dims };
        assert_eq!(far.max_neighbor_indices(2), [0, 1, 0]);
    }

    #[test]
    fn out_of_bounds_access_is_a_contract_error() {
        let dims = Dims::new_2d(4, 4).unwrap();
        let values = vec![0.0f32; 16];
        let mut out = vec![0.0f32; 16];
        let r = dispatch_point_neighborhood(&values, dims, &mut out, &ExecConfig::default(), |nb, o| {
            *o = nb.get(-1, 0, 0);
        });
        assert!(matches!(r, Err(DppError::WorkletPanicked(_))));
    }

    #[test]
    fn windowed_sums_match_brute_force() {
        let dims = Dims::new_2d(8, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f32> = (0..64).map(|_| rng.gen_range(0..10) as f32).collect();
        let mut out = vec![0.0f32; 64];
        dispatch_point_neighborhood(&values, dims, &mut out, &ExecConfig::new(4, 5).unwrap(), |nb, o| {
            let lo = nb.boundary().min_neighbor_indices(1);
            let hi = nb.boundary().max_neighbor_indices(1);
            let mut s = 0.0;
            for dj in lo[1]..=hi[1] {
                for di in lo[0]..=hi[0] {
                    s += nb.get(di, dj, 0);
                }
            }
            *o = s;
        })
        .unwrap();
        for j in 0..8i32 {
            for i in 0..8i32 {
                let mut s = 0.0f32;
                for y in (j - 1).max(0)..=(j + 1).min(7) {
                    for x in (i - 1).max(0)..=(i + 1).min(7) {
                        s += values[(y * 8 + x) as usize];
                    }
                }
                assert_eq!(out[(j * 8 + i) as usize], s);
            }
        }
    }

    #[test]
    fn scatter_equals_sequential_append() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let counts: Vec<usize> = (0..rng.gen_range(0..300)).map(|_| rng.gen_range(0..5)).collect();
            let mut expect = Vec::new();
            for (i, &c) in counts.iter().enumerate() {
                expect.extend((0..c).map(|k| (i, k)));
            }
            let plan = build_scatter(counts).unwrap();
            let mut out = vec![(0, 0); plan.total];
            let cfg = ExecConfig::new(rng.gen_range(1..6), rng.gen_range(1..40)).unwrap();
            dispatch_scatter(&plan, &mut out, &cfg, |i, slots| {
                for (k, s) in slots.iter_mut().enumerate() {
                    *s = (i, k);
                }
            })
            .unwrap();
            assert_eq!(out, expect);
        }
    }

    #[test]
    fn scatter_rejects_wrong_output_length() {
        let plan = build_scatter(vec![2, 1]).unwrap();
        let mut out = vec![0; 2];
        assert_eq!(
            dispatch_scatter(&plan, &mut out, &ExecConfig::default(), |_, _| {}),
            Err(DppError::OutputLength { expected: 3, actual: 2 })
        );
    }

    proptest! {
        #[test]
        fn field_map_output_independent_of_partitioning(
            seed in any::<u64>(),
            n in 0usize..2000,
            chunk in 1usize..300,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
            let work = |i: usize, o: &mut u64| *o = input[i].rotate_left((i % 64) as u32) ^ (i as u64);
            let mut reference = vec![0u64; n];
            dispatch_field_map(&mut reference, &ExecConfig::default(), work).unwrap();
            for threads in [1, 2, 4, 8] {
                let mut out = vec![0u64; n];
                dispatch_field_map(&mut out, &ExecConfig::new(threads, chunk).unwrap(), work).unwrap();
                prop_assert_eq!(&out, &reference);
            }
        }

        #[test]
        fn scan_total_matches_plan(counts in prop::collection::vec(0usize..100, 1..50)) {
            let scan = exclusive_scan(&counts).unwrap();
            let plan = build_scatter(counts.clone()).unwrap();
            prop_assert_eq!(scan[scan.len() - 1] + counts[counts.len() - 1], plan.total);
            prop_assert_eq!(plan.total, counts.iter().sum::<usize>());
        }
    }
}
