use std::fs::{self, File};
use std::path::Path;
use std::process::Command;

use vizbench::report::{read_csv, read_json, CsvRow, CSV_HEADER};

fn bench(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(args)
        .env("VIZBENCH_COUNTERS", "SOFTWARE")
        .output()
        .expect("bench binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = bench(args);
    assert!(out.status.success(), "bench {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn stencil_sweep_writes_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&[
        "run", "--kernel", "stencil", "--strategy", "direct,field-map", "--threads", "1,2,3", "--reps", "2",
        "--synthetic", "noise:48x40", "--radius", "5", "--sigma", "0.33", "--chunk-size", "100", "--out", out,
        "--emit", "csv,json,svg", "--save-output",
    ]);
    let csv_text = fs::read_to_string(dir.path().join("stencil.csv")).unwrap();
    assert_eq!(csv_text.lines().next().unwrap(), CSV_HEADER.join(","));
    let rows = read_csv(File::open(dir.path().join("stencil.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 12);

    let records = read_json(File::open(dir.path().join("stencil.json")).unwrap()).unwrap();
    let from_json: Vec<CsvRow> = records.iter().map(CsvRow::from).collect();
    assert_eq!(rows, from_json);
    assert!(records.iter().all(|r| r.backend == "SOFTWARE" && r.chunk_size == 100));
    assert!(records.iter().all(|r| r.output_hash == records[0].output_hash));
    assert!(records.iter().filter(|r| r.threads == 1).all(|r| r.speedup == Some(1.0)));

    for f in ["stencil_runtime.svg", "stencil_speedup.svg", "smoothed.json", "smoothed.raw"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let reloaded = vizbench::load_field(&dir.path().join("smoothed.json")).unwrap();
    assert_eq!(reloaded.dims().as_array(), [48, 40, 1]);
}

#[test]
fn dataset_file_and_isocontour_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let desc = dir.path().join("sphere.json");
    let field = vizbench_core::field::gen_sphere_field(vizbench_core::Dims::cube(12).unwrap(), [5.5; 3], 3.0).unwrap();
    vizbench_core::io::save_field(&field, &desc).unwrap();
    let out = dir.path().join("out");
    run_ok(&[
        "run", "--kernel", "isocontour", "--dataset", desc.to_str().unwrap(), "--isovalue", "0.0", "--threads", "1,2",
        "--reps", "1", "--out", out.to_str().unwrap(), "--emit", "json", "--save-output",
    ]);
    let records = read_json(File::open(out.join("isocontour.json")).unwrap()).unwrap();
    // serial once, dpp at both thread counts
    assert_eq!(records.len(), 3);
    assert!(records.iter().any(|r| r.serial_only && r.strategy == "serial"));
    assert!(!out.join("isocontour.csv").exists());
    let stl = fs::read(out.join("mesh.stl")).unwrap();
    let n = u32::from_le_bytes(stl[80..84].try_into().unwrap()) as usize;
    assert!(n > 0);
    assert_eq!(stl.len(), 84 + 50 * n);
    assert!(fs::read_to_string(out.join("mesh.obj")).unwrap().lines().filter(|l| l.starts_with("f ")).count() == n);
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["run", "--kernel", "blur", "--out", out],
        vec!["run", "--kernel", "stencil", "--strategy", "dpp", "--out", out],
        vec!["run", "--kernel", "stencil", "--threads", "4,2", "--out", out],
        vec!["run", "--kernel", "stencil", "--synthetic", "noise:8x8", "--threads", "2,4", "--reps", "1", "--out", out],
        vec!["run", "--kernel", "stencil", "--synthetic", "noise:8x8", "--emit", "pdf", "--out", out],
        vec!["run", "--preset", "iso-paper", "--kernel", "stencil", "--out", out],
        vec!["run", "--out", out],
        vec!["run", "--kernel", "stencil", "--dataset", "/nonexistent/x.json", "--out", out],
    ] {
        let o = bench(&args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"), "{args:?}");
    }
}

#[test]
fn verify_and_info() {
    let stdout = run_ok(&["verify", "--quick"]);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 8, "{stdout}");
    let info = run_ok(&["info"]);
    assert!(info.contains("VIZBENCH_COUNTERS=SOFTWARE"));
    assert!(info.contains("active backend: SOFTWARE"));
}

#[test]
fn advection_preset_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    run_ok(&[
        "run", "--preset", "advect-paper", "--synthetic", "rotational:17x17x17", "--seeds", "30", "--steps", "40",
        "--h", "0.1", "--threads", "1,4", "--reps", "1", "--out", out.to_str().unwrap(), "--emit", "csv,svg",
        "--save-output",
    ]);
    let rows = read_csv(File::open(out.join("advection.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    let lines = fs::read_to_string(out.join("streamlines.txt")).unwrap();
    assert_eq!(lines.split("\n\n").count(), 30);
    assert!(Path::new(&out.join("advection_speedup.svg")).is_file());
}
