//! Oracle-equivalence suites behind `bench verify`.
//!
//! Each suite returns a [`Check`] rather than panicking so the CLI can print
//! a full table even when something fails.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vizbench_core::advection::{self, AdvectStrategy, IntegrationParams, Seed, Streamline, Termination, VectorField};
use vizbench_core::dpp::ExecConfig;
use vizbench_core::field::{gen_noise_field, gen_rotational_field, gen_sphere_field, Dims, StructuredField};
use vizbench_core::isocontour::{self, ContourOptions, ContourStrategy, TriangleMesh};
use vizbench_core::perf::{derive_metrics, software_counter_report, CounterSample};
use vizbench_core::stencil::{self, GaussianKernel, StencilStrategy};

use crate::oracle;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, failures: Vec<String>, summary: String) -> Self {
        let passed = failures.is_empty();
        let detail = if passed {
            summary
        } else {
            let shown: Vec<_> = failures.iter().take(5).cloned().collect();
            format!("{} failure(s): {}", failures.len(), shown.join("; "))
        };
        Self { name, passed, detail }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn exec(threads: usize, chunk: usize) -> ExecConfig {
    ExecConfig::new(threads, chunk).expect("positive thread count and chunk size")
}

/// All three stencil strategies against the double-loop oracle.
pub fn stencil_equivalence(n_images: usize, params: &[(usize, f64)], threads: &[usize]) -> Check {
    let dims = Dims::new_2d(64, 64).expect("valid dims");
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut runs = 0;
    for img in 0..n_images {
        let image = gen_noise_field(dims, 1000 + img as u64);
        for &(size, sigma) in params {
            let want = oracle::naive_smooth(image.values(), 64, 64, size, sigma);
            let kernel = match GaussianKernel::new(size, sigma) {
                Ok(k) => k,
                Err(e) => {
                    failures.push(format!("kernel ({size}, {sigma}): {e}"));
                    continue;
                }
            };
            for strategy in StencilStrategy::ALL {
                for &t in threads {
                    runs += 1;
                    let got = match stencil::smooth(strategy, &image, &kernel, &exec(t, 512)) {
                        Ok(f) => f,
                        Err(e) => {
                            failures.push(format!("{} t={t}: {e}", strategy.name()));
                            continue;
                        }
                    };
                    for (p, (&g, &w)) in got.values().iter().zip(&want).enumerate() {
                        let rel = (f64::from(g) - w).abs() / w.abs().max(f64::MIN_POSITIVE);
                        worst = worst.max(rel);
                        if rel > 1e-6 {
                            failures.push(format!("image {img} R={size} {} t={t} pixel {p}: {g} vs {w}", strategy.name()));
                            break;
                        }
                    }
                }
            }
        }
    }
    Check::new("stencil strategies match naive oracle", failures, format!("{runs} runs, worst relative error {worst:.2e}"))
}

/// Normalization, reflection symmetry and center maximality of the kernel.
pub fn gaussian_normalization() -> Check {
    let mut failures = Vec::new();
    let mut n = 0;
    for size in (1..=21).step_by(2) {
        for sigma in [0.1, 0.33, 1.0] {
            n += 1;
            let k = match GaussianKernel::new(size, sigma) {
                Ok(k) => k,
                Err(e) => {
                    failures.push(format!("R={size} sigma={sigma}: {e}"));
                    continue;
                }
            };
            let sum: f64 = k.weights().iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                failures.push(format!("R={size} sigma={sigma}: sum {sum}"));
            }
            let r = (size / 2) as isize;
            let center = k.weight(0, 0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let w = k.weight(dx, dy);
                    if w != k.weight(-dx, dy) || w != k.weight(dx, -dy) || w != k.weight(dy, dx) {
                        failures.push(format!("R={size} sigma={sigma}: asymmetric at ({dx},{dy})"));
                    }
                    if w > center {
                        failures.push(format!("R={size} sigma={sigma}: ({dx},{dy}) exceeds center"));
                    }
                }
            }
        }
    }
    Check::new("gaussian kernels normalized and symmetric", failures, format!("{n} kernels"))
}

fn raw_triangles(m: &TriangleMesh) -> Vec<[[u32; 3]; 3]> {
    let mut v: Vec<_> = (0..m.triangle_count()).map(|t| m.triangle(t).map(|p| p.map(f32::to_bits))).collect();
    v.sort_unstable();
    v
}

fn check_contour(label: &str, field: &StructuredField, isovalue: f64, threads: &[usize], failures: &mut Vec<String>) -> usize {
    let serial = match isocontour::contour_serial(field, isovalue) {
        Ok(m) => m,
        Err(e) => {
            failures.push(format!("{label}: serial: {e}"));
            return 0;
        }
    };
    let expected = oracle::mc_triangle_count(field, isovalue);
    if serial.triangle_count() != expected {
        failures.push(format!("{label}: serial emitted {} triangles, oracle {expected}", serial.triangle_count()));
    }
    let reference = raw_triangles(&serial);
    for &t in threads {
        for reclassify in [false, true] {
            match isocontour::contour_dpp(field, isovalue, &exec(t, 97), ContourOptions { reclassify }) {
                Ok(m) if raw_triangles(&m) != reference => failures.push(format!("{label}: dpp t={t} reclassify={reclassify} differs from serial")),
                Ok(_) => {}
                Err(e) => failures.push(format!("{label}: dpp t={t}: {e}")),
            }
        }
    }
    let (lo, hi) = field.range();
    let tol = 1e-4 * f64::from(hi - lo);
    for (n, v) in serial.vertices.iter().enumerate() {
        let p = v.map(f64::from);
        match field.interpolate_scalar(p) {
            Some(s) if (s - isovalue).abs() <= tol => {}
            other => {
                failures.push(format!("{label}: vertex {n} at {p:?} interpolates to {other:?}"));
                break;
            }
        }
    }
    serial.triangle_count()
}

/// DPP against serial Marching Cubes, the per-cell count oracle, and vertex
/// placement on the isosurface.
pub fn isocontour_equivalence(n_random: usize, threads: &[usize]) -> Check {
    let mut failures = Vec::new();
    let mut total = 0;
    let cube16 = Dims::cube(16).expect("valid dims");
    for n in 0..n_random {
        let f = gen_noise_field(cube16, 2000 + n as u64);
        total += check_contour(&format!("noise #{n}"), &f, 0.5, threads, &mut failures);
    }
    let sphere = gen_sphere_field(Dims::cube(32).expect("valid dims"), [15.5; 3], 8.0).expect("scalar field");
    for iso in [0.0, 15.0] {
        total += check_contour(&format!("sphere iso={iso}"), &sphere, iso, threads, &mut failures);
    }
    Check::new("isocontour dpp matches serial and count oracle", failures, format!("{total} serial triangles checked"))
}

/// Uniform cells, and cells with exactly one corner on the other side.
pub fn mc_degenerate() -> Check {
    let dims = Dims::cube(2).expect("valid dims");
    let mut failures = Vec::new();
    let mut run = |label: String, values: Vec<f32>, want: usize| {
        let f = StructuredField::scalar(dims, values).expect("8 values");
        for strategy in ContourStrategy::ALL {
            match isocontour::contour(strategy, &f, 0.5, &exec(2, 1), ContourOptions::default()) {
                Ok(m) if m.triangle_count() == want => {}
                Ok(m) => failures.push(format!("{label} {}: {} triangles, want {want}", strategy.name(), m.triangle_count())),
                Err(e) => failures.push(format!("{label} {}: {e}", strategy.name())),
            }
        }
    };
    run("all below".into(), vec![0.0; 8], 0);
    run("all above".into(), vec![1.0; 8], 0);
    for corner in 0..8 {
        let mut above = vec![0.0; 8];
        above[corner] = 1.0;
        run(format!("only node {corner} above"), above, 1);
        let mut below = vec![1.0; 8];
        below[corner] = 0.0;
        run(format!("only node {corner} below"), below, 1);
    }
    Check::new("marching cubes degenerate cells", failures, "18 configurations".into())
}

/// Errors of single RK4 steps from `(1, 0, 0)` on the rotational field for
/// `h, h/2, h/4, ...`: `(h, position error, radius error)`.
pub fn rk4_step_errors(hs: &[f64]) -> Vec<(f64, f64, f64)> {
    let field = gen_rotational_field(Dims::cube(9).expect("valid dims")).expect("3D dims");
    let vf = VectorField::new(&field).expect("vector field");
    let p = [1.0, 0.0, 0.0];
    hs.iter()
        .map(|&h| {
            let q = advection::rk4_step(&vf, p, h).expect("step stays inside");
            let exact = oracle::rotate_z(p, h);
            let pos = ((q[0] - exact[0]).powi(2) + (q[1] - exact[1]).powi(2) + (q[2] - exact[2]).powi(2)).sqrt();
            let rad = ((q[0] * q[0] + q[1] * q[1]).sqrt() - 1.0).abs();
            (h, pos, rad)
        })
        .collect()
}

/// Fifth-order local error, and radius drift over 1000 steps at `h = 0.01`.
pub fn rk4_order() -> Check {
    let mut failures = Vec::new();
    let errs = rk4_step_errors(&[0.2, 0.1, 0.05, 0.025]);
    let mut pos_ratios = Vec::new();
    let mut rad_ratios = Vec::new();
    for w in errs.windows(2) {
        let r = w[0].1 / w[1].1;
        pos_ratios.push(format!("{r:.2}"));
        rad_ratios.push(format!("{:.2}", w[0].2 / w[1].2));
        if !(24.0..=40.0).contains(&r) {
            failures.push(format!("position error ratio {r:.3} at h={}", w[0].0));
        }
    }

    let field = gen_rotational_field(Dims::cube(9).expect("valid dims")).expect("3D dims");
    let vf = VectorField::new(&field).expect("vector field");
    let params = IntegrationParams::new(0.01, 1000).expect("valid params");
    let line = advection::trace_streamline(&vf, Seed { id: 0, position: [1.0, 0.0, 0.0] }, &params);
    let drift = line.points.iter().map(|p| ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs()).fold(0.0, f64::max);
    if line.termination != Termination::MaxSteps || line.points.len() != 1001 {
        failures.push(format!("1000-step trace ended {:?} after {} points", line.termination, line.points.len()));
    }
    if drift >= 1e-6 {
        failures.push(format!("radius drift {drift:.3e}"));
    }
    Check::new(
        "rk4 order and stability",
        failures,
        format!(
            "position error ratios [{}], radius error ratios [{}], 1000-step drift {drift:.2e}",
            pos_ratios.join(", "),
            rad_ratios.join(", ")
        ),
    )
}

fn bitwise_eq(a: &[Streamline], b: &[Streamline]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.seed_id == y.seed_id
                && x.termination == y.termination
                && x.points.len() == y.points.len()
                && x.points.iter().zip(&y.points).all(|(p, q)| p.map(f64::to_bits) == q.map(f64::to_bits))
        })
}

/// Parallel-over-seeds traces against the serial traces, bit for bit.
pub fn advection_equivalence(grid: usize, n_seeds: usize, max_steps: usize, threads: &[usize]) -> Check {
    let mut failures = Vec::new();
    let field = gen_rotational_field(Dims::cube(grid).expect("valid dims")).expect("3D dims");
    let params = IntegrationParams::new(IntegrationParams::default_step(&field), max_steps).expect("valid params");
    let seeds = advection::make_diagonal_seeds(&field, n_seeds).expect("enough seeds");
    let serial = advection::trace_serial(&field, &seeds, &params).expect("vector field");
    for &t in threads {
        match advection::trace(AdvectStrategy::ParallelOverSeeds, &field, &seeds, &params, &exec(t, 7)) {
            Ok(par) if bitwise_eq(&serial, &par) => {}
            Ok(_) => failures.push(format!("threads={t}: output differs from serial")),
            Err(e) => failures.push(format!("threads={t}: {e}")),
        }
    }
    let points: usize = serial.iter().map(|s| s.points.len()).sum();
    let full = serial.iter().filter(|s| s.termination == Termination::MaxSteps).count();
    Check::new(
        "advection parallel matches serial bitwise",
        failures,
        format!("{n_seeds} seeds, {points} points, {full} reached max steps"),
    )
}

/// Derived metrics from hand-built samples, including every undefined case.
pub fn counter_math() -> Check {
    let mut failures = Vec::new();
    let mut expect = |label: &str, got: Option<f64>, want: Option<f64>| {
        if got != want {
            failures.push(format!("{label}: got {got:?}, want {want:?}"));
        }
    };
    let s = |instr, cycles, scalar, packed, req, miss| CounterSample {
        instructions_retired: instr,
        cycles,
        flops_scalar: scalar,
        flops_packed: packed,
        l3_requests: req,
        l3_misses: miss,
        wall_time: 1.0,
        call_count: 1,
    };

    let m = derive_metrics(&s(Some(50), Some(100), Some(1), Some(3), Some(1000), Some(25)));
    expect("cpi 100/50", m.cpi, Some(2.0));
    expect("vectorization 3 of 4", m.vectorization_pct, Some(75.0));
    expect("l3 25 of 1000", m.l3_miss_ratio_pct, Some(2.5));

    let (i, c, sc, pk, rq, ms) = (3_000_000_007u64, 4_500_000_011u64, 123_457u64, 987_651u64, 77_777u64, 1_234u64);
    let m = derive_metrics(&s(Some(i), Some(c), Some(sc), Some(pk), Some(rq), Some(ms)));
    expect("cpi ratio", m.cpi, Some(c as f64 / i as f64));
    expect("vectorization ratio", m.vectorization_pct, Some(100.0 * pk as f64 / (pk + sc) as f64));
    expect("l3 ratio", m.l3_miss_ratio_pct, Some(100.0 * ms as f64 / rq as f64));

    let m = derive_metrics(&s(Some(0), Some(10), Some(5), Some(0), Some(0), Some(0)));
    expect("cpi with zero instructions", m.cpi, None);
    expect("packed 0, scalar > 0", m.vectorization_pct, Some(0.0));
    expect("l3 with zero requests", m.l3_miss_ratio_pct, None);

    let m = derive_metrics(&s(None, Some(10), Some(0), Some(0), None, Some(3)));
    expect("cpi without instructions", m.cpi, None);
    expect("vectorization with no flops", m.vectorization_pct, None);
    expect("l3 without requests", m.l3_miss_ratio_pct, None);

    let m = derive_metrics(&s(Some(10), None, Some(4), None, Some(10), None));
    expect("cpi without cycles", m.cpi, None);
    expect("vectorization without packed counter", m.vectorization_pct, None);
    expect("l3 without misses", m.l3_miss_ratio_pct, None);

    let merged = s(Some(10), Some(30), Some(1), Some(1), Some(8), Some(2)).merge(&s(Some(30), Some(50), Some(3), Some(11), Some(12), Some(3)));
    let m = derive_metrics(&merged);
    expect("merged cpi", m.cpi, Some(2.0));
    expect("merged vectorization", m.vectorization_pct, Some(75.0));
    expect("merged l3", m.l3_miss_ratio_pct, Some(25.0));

    Check::new("counter metric arithmetic", failures, "18 expectations".into())
}

/// Stencil FLOP tallies against the window-enumeration formula.
pub fn flop_oracle(n_shapes: usize, seed: u64) -> Check {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes = vec![(4, 4, 3)];
    for _ in 0..n_shapes {
        shapes.push((rng.gen_range(1..=48), rng.gen_range(1..=48), 2 * rng.gen_range(0..=6) + 1));
    }
    let mut summary = Vec::new();
    for (n, &(nx, ny, size)) in shapes.iter().enumerate() {
        let image = gen_noise_field(Dims::new_2d(nx, ny).expect("positive dims"), n as u64);
        let kernel = GaussianKernel::new(size, 0.33).expect("odd size");
        let want = oracle::stencil_flops(nx, ny, size / 2);
        for strategy in StencilStrategy::ALL {
            for t in [1, 3] {
                let (res, sample) = software_counter_report(|| stencil::smooth(strategy, &image, &kernel, &exec(t, 16)));
                if let Err(e) = res {
                    failures.push(format!("{nx}x{ny} R={size} {}: {e}", strategy.name()));
                } else if sample.flops_scalar != Some(want) {
                    failures.push(format!("{nx}x{ny} R={size} {} t={t}: tallied {:?}, formula {want}", strategy.name(), sample.flops_scalar));
                }
            }
        }
        summary.push(format!("{nx}x{ny}/R={size}->{want}"));
    }
    Check::new("stencil flop tally matches formula", failures, summary.join(", "))
}

/// Every suite; `quick` shrinks the larger ones for interactive use.
pub fn run_all(quick: bool) -> Vec<Check> {
    let (images, random_fields, seeds, steps) = if quick { (3, 3, 100, 200) } else { (20, 10, 500, 1000) };
    vec![
        stencil_equivalence(images, &[(5, 0.33), (19, 0.33)], &[1, 2, 4]),
        gaussian_normalization(),
        isocontour_equivalence(random_fields, &[1, 2, 4]),
        mc_degenerate(),
        rk4_order(),
        advection_equivalence(65, seeds, steps, &[1, 2, 4, 8]),
        counter_math(),
        flop_oracle(5, 7),
    ]
}
