use proptest::prelude::*;
use vizbench::report::{compute_speedup, median, read_csv, write_csv, CsvRow};
use vizbench::BenchRecord;

fn record() -> impl Strategy<Value = BenchRecord> {
    (
        (prop::sample::select(vec!["direct", "field-map", "dpp"]), 1usize..64, 0usize..8, 1e-9f64..1e3),
        (prop::option::of(any::<u64>()), prop::option::of(any::<u64>()), prop::option::of(0.0f64..1e6)),
        (prop::option::of(any::<u64>()), prop::option::of(any::<u64>()), prop::option::of(0.0f64..=100.0)),
        (prop::option::of(any::<u64>()), prop::option::of(any::<u64>()), prop::option::of(0.0f64..=100.0), prop::option::of(0.0f64..1e3)),
    )
        .prop_map(|((strategy, threads, rep, runtime_s), (instructions, cycles, cpi), (fs, fp, vec), (rq, ms, l3, sp))| BenchRecord {
            kernel: "stencil".into(),
            strategy: strategy.into(),
            threads,
            rep,
            runtime_s,
            instructions,
            cycles,
            cpi,
            flops_scalar: fs,
            flops_packed: fp,
            vectorization_pct: vec,
            l3_requests: rq,
            l3_misses: ms,
            l3_miss_ratio_pct: l3,
            speedup: sp,
            serial_only: false,
            chunk_size: 4096,
            backend: "AUTO".into(),
            output_hash: String::new(),
        })
}

proptest! {
    #[test]
    fn csv_round_trip(records in prop::collection::vec(record(), 1..20)) {
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        let want: Vec<CsvRow> = records.iter().map(CsvRow::from).collect();
        prop_assert_eq!(back, want);
    }

    #[test]
    fn speedup_is_ratio_of_medians(t1 in prop::collection::vec(1e-6f64..10.0, 1..6), tp in prop::collection::vec(1e-6f64..10.0, 1..6), p in 2usize..64) {
        let mk = |threads, rep, runtime_s| {
            let mut r = BenchRecord { threads, rep, runtime_s, ..blank() };
            r.strategy = "direct".into();
            r
        };
        let mut records: Vec<BenchRecord> = t1.iter().enumerate().map(|(i, &t)| mk(1, i, t))
            .chain(tp.iter().enumerate().map(|(i, &t)| mk(p, i, t)))
            .collect();
        compute_speedup(&mut records).unwrap();
        for r in &records {
            let want = if r.threads == 1 { 1.0 } else { median(&t1) / median(&tp) };
            prop_assert_eq!(r.speedup, Some(want));
        }
    }

    #[test]
    fn median_is_order_invariant(mut v in prop::collection::vec(-1e6f64..1e6, 1..30)) {
        let m = median(&v);
        v.reverse();
        prop_assert_eq!(median(&v), m);
        let below = v.iter().filter(|&&x| x < m).count();
        let above = v.iter().filter(|&&x| x > m).count();
        prop_assert!(below <= v.len() / 2 && above <= v.len() / 2);
    }
}

fn blank() -> BenchRecord {
    BenchRecord {
        kernel: "stencil".into(),
        strategy: String::new(),
        threads: 1,
        rep: 0,
        runtime_s: 1.0,
        instructions: None,
        cycles: None,
        cpi: None,
        flops_scalar: None,
        flops_packed: None,
        vectorization_pct: None,
        l3_requests: None,
        l3_misses: None,
        l3_miss_ratio_pct: None,
        speedup: None,
        serial_only: false,
        chunk_size: 1,
        backend: "NONE".into(),
        output_hash: String::new(),
    }
}
