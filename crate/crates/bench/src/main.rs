use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vizbench::config::{BenchConfig, Dataset, Kernel};
use vizbench::report::median_runtimes;
use vizbench::{compute_speedup, emit_csv, emit_json, emit_plots, run_suite_with_output, verify, BenchRecord, KernelOutput};
use vizbench_core::advection;
use vizbench_core::io::save_field;
use vizbench_core::perf::{hardware_backend_open, BackendKind, Profiler, BACKEND_ENV};

#[derive(Parser)]
#[command(name = "bench", version, about = "Strong-scaling benchmarks for stencil, isocontour and advection kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a thread-count sweep and write reports.
    Run(Box<RunArgs>),
    /// Run the oracle-equivalence suites.
    Verify {
        /// Smaller inputs for a fast smoke check.
        #[arg(long)]
        quick: bool,
    },
    /// Print counter backend availability.
    Info,
}

#[derive(Args)]
struct RunArgs {
    /// Start from a named configuration: stencil-paper, iso-paper or advect-paper.
    #[arg(long)]
    preset: Option<String>,
    /// stencil, isocontour or advection.
    #[arg(long)]
    kernel: Option<String>,
    /// Strategies to compare (default: all of the kernel's strategies).
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    threads: Vec<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Field descriptor (JSON) with its .raw file alongside.
    #[arg(long, conflicts_with = "synthetic")]
    dataset: Option<PathBuf>,
    /// Generated dataset, e.g. noise:2048x2048, sphere:64x64x64, rotational:65x65x65.
    #[arg(long)]
    synthetic: Option<String>,
    /// Stencil window width (odd).
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    isovalue: Option<f64>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// RK4 step size (default: a quarter of the grid spacing).
    #[arg(long)]
    h: Option<f64>,
    /// Recompute cell cases in the isocontour generate pass.
    #[arg(long)]
    reclassify: bool,
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Seed for generated datasets.
    #[arg(long)]
    seed: Option<u64>,
    /// Counter backend; overrides the environment.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Report formats: csv, json, svg.
    #[arg(long, value_delimiter = ',', default_value = "csv,json")]
    emit: Vec<String>,
    /// Also write the kernel output (image, mesh or streamlines) to the output dir.
    #[arg(long)]
    save_output: bool,
}

fn build_config(a: &RunArgs) -> Result<BenchConfig> {
    let mut cfg = match (&a.preset, &a.kernel) {
        (Some(p), k) => {
            let cfg = BenchConfig::preset(p)?;
            if let Some(k) = k {
                if k.parse::<Kernel>()? != cfg.kernel {
                    bail!("--kernel {k} conflicts with preset {p}");
                }
            }
            cfg
        }
        (None, Some(k)) => BenchConfig::for_kernel(k.parse()?),
        (None, None) => bail!("either --kernel or --preset is required"),
    };
    if !a.strategy.is_empty() {
        cfg.strategies = a.strategy.iter().map(|s| cfg.kernel.parse_strategy(s)).collect::<Result<_, _>>()?;
    }
    if !a.threads.is_empty() {
        cfg.thread_counts = a.threads.clone();
    }
    if let Some(path) = &a.dataset {
        cfg.dataset = Dataset::File(path.clone());
    }
    if let Some(spec) = &a.synthetic {
        cfg.dataset = Dataset::Synthetic(spec.parse()?);
    }
    let p = &mut cfg.params;
    p.stencil_size = a.radius.unwrap_or(p.stencil_size);
    p.sigma = a.sigma.unwrap_or(p.sigma);
    p.isovalue = a.isovalue.unwrap_or(p.isovalue);
    p.n_seeds = a.seeds.unwrap_or(p.n_seeds);
    p.max_steps = a.steps.unwrap_or(p.max_steps);
    p.step_size = a.h.or(p.step_size);
    p.reclassify |= a.reclassify;
    cfg.repetitions = a.reps.unwrap_or(cfg.repetitions);
    cfg.chunk_size = a.chunk_size.unwrap_or(cfg.chunk_size);
    cfg.rng_seed = a.seed.unwrap_or(cfg.rng_seed);
    cfg.backend = match &a.backend {
        Some(b) => b.parse()?,
        None => BackendKind::from_env()?,
    };
    cfg.out_dir = Some(a.out.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn save_output(output: &KernelOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match output {
        KernelOutput::Image(f) => {
            let path = dir.join("smoothed.json");
            save_field(f, &path)?;
            written.push(path);
        }
        KernelOutput::Mesh(m) => {
            let obj = dir.join("mesh.obj");
            m.write_obj(BufWriter::new(File::create(&obj)?))?;
            let stl = dir.join("mesh.stl");
            m.write_stl(BufWriter::new(File::create(&stl)?))?;
            written.extend([obj, stl]);
        }
        KernelOutput::Streamlines(lines) => {
            let txt = dir.join("streamlines.txt");
            advection::write_polylines(lines, BufWriter::new(File::create(&txt)?))?;
            let obj = dir.join("streamlines.obj");
            advection::write_obj_lines(lines, BufWriter::new(File::create(&obj)?))?;
            written.extend([txt, obj]);
        }
    }
    Ok(written)
}

fn print_summary(records: &[BenchRecord]) {
    println!("{:<12} {:<20} {:>7} {:>14} {:>9}", "kernel", "strategy", "threads", "median_s", "speedup");
    for ((kernel, strategy), by_threads) in median_runtimes(records) {
        for (threads, t) in by_threads {
            let speedup = records
                .iter()
                .find(|r| r.kernel == kernel && r.strategy == strategy && r.threads == threads)
                .and_then(|r| r.speedup)
                .map_or_else(|| "N/A".to_owned(), |s| format!("{s:.2}"));
            println!("{kernel:<12} {strategy:<20} {threads:>7} {t:>14.6} {speedup:>9}");
        }
    }
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = build_config(&a)?;
    for e in &a.emit {
        if !matches!(e.as_str(), "csv" | "json" | "svg") {
            bail!("unknown --emit format {e:?}, expected csv, json or svg");
        }
    }
    eprintln!(
        "{}: {} on {} | threads {:?} | {} rep(s) | backend {}",
        cfg.kernel,
        cfg.strategies.iter().map(|s| s.name()).collect::<Vec<_>>().join(","),
        cfg.dataset,
        cfg.thread_counts,
        cfg.repetitions,
        cfg.backend
    );
    let result = run_suite_with_output(&cfg)?;
    let mut records = result.records;
    compute_speedup(&mut records).context("computing speedup (include 1 in --threads)")?;
    print_summary(&records);
    eprintln!("active backend {}, output hash {}", result.backend, records[0].output_hash);

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let stem = cfg.kernel.name();
    let mut written = Vec::new();
    if a.emit.iter().any(|e| e == "csv") {
        let p = a.out.join(format!("{stem}.csv"));
        emit_csv(&records, &p)?;
        written.push(p);
    }
    if a.emit.iter().any(|e| e == "json") {
        let p = a.out.join(format!("{stem}.json"));
        emit_json(&records, &p)?;
        written.push(p);
    }
    if a.emit.iter().any(|e| e == "svg") {
        written.extend(emit_plots(&records, &a.out)?);
    }
    if a.save_output {
        written.extend(save_output(&result.output, &a.out)?);
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn info() -> Result<()> {
    let requested = BackendKind::from_env()?;
    println!("{BACKEND_ENV}={requested}");
    match hardware_backend_open() {
        Ok(_) => println!("hardware counters: available"),
        Err(e) => println!("hardware counters: unavailable ({e})"),
    }
    let profiler = Profiler::new(requested);
    println!("active backend: {}", profiler.active_backend());
    if let Some(reason) = profiler.fallback_reason() {
        println!("fallback reason: {reason}");
    }
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    println!("available parallelism: {cores}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(*a),
        Command::Verify { quick } => {
            let checks = verify::run_all(quick);
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(anyhow::anyhow!("{} of {} checks failed", checks.iter().filter(|c| !c.passed).count(), checks.len()))
            }
        }
        Command::Info => info(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
