//! Driver-level behavior: batching, reports, determinism, and failure paths.

mod common;

use bulktx::config::{EngineConfig, StrategyChoice};
use bulktx::driver::{oracle_dump, run_generated, run_workload};
use bulktx::exec::Strategy;
use bulktx::report::to_csv;
use bulktx::storage::load_store;
use bulktx::workload::{generate, parse_workload_file, WorkloadKind, WorkloadSpec};
use common::*;

fn micro(txns: u64, alpha: f64, compute: u32, seed: u64) -> WorkloadSpec {
    WorkloadSpec {
        kind: WorkloadKind::Micro,
        type_count: 8,
        compute,
        alpha,
        tuple_count: 2048,
        txn_count: txns,
        scale: 4,
        abort_rate: 0.0,
        seed,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

#[test]
fn bulk_sizes_follow_rate_and_interval() {
    // 1000 txns/sec at a 100 ms interval: bulks of about 100.
    let w = generate(&micro(400, 0.0, 0, 302)).unwrap();
    let cfg = EngineConfig {
        strategy: StrategyChoice::Fixed(Strategy::Kset),
        arrival_rate: 1000.0,
        interval_us: 100_000,
        max_bulk: 4096,
        verify: false,
        ..Default::default()
    };
    let r = run_generated(&w, &cfg, false).unwrap();
    let sizes: Vec<usize> = r.report.bulks.iter().map(|b| b.size).collect();
    assert!(sizes.len() >= 3, "sizes {sizes:?}");
    for &s in &sizes[..sizes.len() - 1] {
        assert!((90..=110).contains(&s), "bulk size {s} far from rate*interval");
    }
}

#[test]
fn report_is_deterministic_in_non_timing_columns() {
    let w = generate(&micro(600, 0.5, 0, 303)).unwrap();
    let cfg = EngineConfig {
        strategy: StrategyChoice::Auto,
        lane_count: 4,
        max_bulk: 128,
        ..Default::default()
    };
    let strip_timing = |csv: &str| -> Vec<Vec<String>> {
        csv.lines()
            .skip(2)
            .map(|l| {
                l.split(',')
                    .enumerate()
                    // drop gen/exec/wall/inter/wait/ktps/response columns
                    .filter(|(i, _)| ![7, 8, 11, 12, 13, 14, 15].contains(i))
                    .map(|(_, v)| v.to_string())
                    .collect()
            })
            .collect()
    };
    let a = to_csv(&run_generated(&w, &cfg, false).unwrap().report);
    let b = to_csv(&run_generated(&w, &cfg, false).unwrap().report);
    assert_eq!(strip_timing(&a), strip_timing(&b));
}

#[test]
fn watchdog_produces_failure_report_with_partial_metrics() {
    let w = generate(&micro(500, 0.9, 0, 305)).unwrap();
    let cfg = EngineConfig {
        strategy: StrategyChoice::Fixed(Strategy::Kset),
        watchdog_secs: 0,
        verify: false,
        ..Default::default()
    };
    let r = run_generated(&w, &cfg, false).unwrap();
    assert!(r.report.failed.is_some());
    let csv = to_csv(&r.report);
    assert!(csv.lines().last().unwrap().contains("watchdog"));
}

#[test]
fn oracle_dump_diffs_against_strategy_store() {
    let w = generate(&WorkloadSpec {
        kind: WorkloadKind::Tm1Like,
        txn_count: 300,
        scale: 1,
        abort_rate: 0.1,
        compute: 0,
        seed: 306,
        ..Default::default()
    })
    .unwrap();
    // The 0-set strategy aborts exactly what the reference aborts (no
    // dependent rollbacks), so its final store matches the oracle dump
    // byte for byte.
    let cfg = EngineConfig {
        strategy: StrategyChoice::Fixed(Strategy::Kset),
        lane_count: 4,
        ..Default::default()
    };
    let run = run_generated(&w, &cfg, false).unwrap();
    let dump = oracle_dump(&w, &cfg).unwrap();
    assert_eq!(bulktx::storage::dump_store(&run.store), dump);
    // The dump is loadable (lossless round trip).
    load_store(&dump).unwrap();
}

#[test]
fn auto_mode_picks_different_strategies_across_profiles() {
    // Wide conflict-free pool -> 0-set execution; skewed chain with very few
    // lanes -> deep graph relative to thresholds.
    let wide = generate(&micro(512, 0.0, 0, 307)).unwrap();
    let cfg = EngineConfig {
        strategy: StrategyChoice::Auto,
        lane_count: 4,
        max_bulk: 1024,
        ..Default::default()
    };
    let r = run_generated(&wide, &cfg, false).unwrap();
    assert!(r.report.bulks.iter().any(|b| b.strategy == "kset"), "{:?}",
        r.report.bulks.iter().map(|b| b.strategy.clone()).collect::<Vec<_>>());
}

#[test]
fn cross_partition_bulks_divert_to_keyed_locks() {
    use bulktx::txmodel::{PartitionSpan, TxnType};
    use std::sync::Arc;
    let (mut registry, store) = bank_fixture(4, false);
    registry
        .register_type(TxnType {
            type_id: 9,
            name: "cross".into(),
            two_phase: true,
            body: Arc::new(|ctx, _| {
                let a = ctx.read_int(bulktx::storage::DataItemId::new(0, 1, 0))?;
                ctx.write_int(bulktx::storage::DataItemId::new(0, 1, 1), a)?;
                Ok(())
            }),
            footprint: Arc::new(|_, _| {
                Ok(vec![
                    (bulktx::storage::DataItemId::new(0, 1, 0), false),
                    (bulktx::storage::DataItemId::new(0, 1, 1), true),
                ])
            }),
            partition: Arc::new(|_| PartitionSpan::Cross),
            root_key: None,
        })
        .unwrap();
    let txns = vec![sig(0, 0, vec![0, 5]), sig(1, 9, vec![]), sig(2, 0, vec![1, 3])];
    let cfg = EngineConfig {
        strategy: StrategyChoice::Fixed(Strategy::Part),
        lane_count: 2,
        ..Default::default()
    };
    let r = run_workload(&registry, store, &txns, &cfg, false).unwrap();
    assert!(r.report.bulks.iter().all(|b| b.strategy == "tpl"));
    assert_eq!(r.report.verified, Some(true));
}

#[test]
fn unknown_footprints_bypass_the_chooser() {
    use bulktx::txmodel::{FootprintUnknown, PartitionSpan, TxnType};
    use std::sync::Arc;
    let (mut registry, store) = bank_fixture(4, false);
    registry
        .register_type(TxnType {
            type_id: 9,
            name: "opaque".into(),
            two_phase: true,
            body: Arc::new(|ctx, _| {
                let item = bulktx::storage::DataItemId::new(0, 1, 2);
                let v = ctx.read_int(item)?;
                ctx.write_int(item, v + 1)?;
                Ok(())
            }),
            footprint: Arc::new(|_, _| Err(FootprintUnknown { tables: Some(vec![0]) })),
            partition: Arc::new(|_| PartitionSpan::Single(0)),
            root_key: None,
        })
        .unwrap();
    let txns = vec![sig(0, 0, vec![0, 5]), sig(1, 9, vec![]), sig(2, 0, vec![1, 3])];
    let cfg = EngineConfig {
        strategy: StrategyChoice::Auto,
        lane_count: 2,
        ..Default::default()
    };
    let r = run_workload(&registry, store, &txns, &cfg, false).unwrap();
    // Coarse footprints force the keyed-lock path, and the run still gates.
    assert!(r.report.bulks.iter().all(|b| b.strategy == "tpl"));
    assert_eq!(r.report.verified, Some(true));
}

#[test]
fn workload_file_drives_identical_runs() {
    let spec = micro(300, 0.3, 0, 308);
    let w = generate(&spec).unwrap();
    let text = bulktx::workload::write_workload_file(&w);
    let parsed = parse_workload_file(&text).unwrap();
    let cfg = EngineConfig {
        strategy: StrategyChoice::Fixed(Strategy::Kset),
        ..Default::default()
    };
    let a = run_generated(&w, &cfg, false).unwrap();
    let b = run_generated(&parsed, &cfg, false).unwrap();
    assert_snapshots_equal(&a.snapshot, &b.snapshot, "file-driven run");
    assert_eq!(a.statuses, b.statuses);
}
