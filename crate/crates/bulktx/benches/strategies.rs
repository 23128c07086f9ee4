//! Strategy and primitive benchmarks, comparing the rayon-backed parallel
//! paths against the sequential fallback at matching configurations.

use bulktx::config::{EngineConfig, StrategyChoice};
use bulktx::depgraph::{collapse_ops, compute_ranks};
use bulktx::driver::run_generated;
use bulktx::exec::Strategy;
use bulktx::storage::load_store;
use bulktx::txmodel::collect_footprints;
use bulktx::workload::{build_registry, generate, WorkloadKind, WorkloadSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn micro_spec(alpha: f64, txns: u64) -> WorkloadSpec {
    WorkloadSpec {
        kind: WorkloadKind::Micro,
        type_count: 8,
        compute: 16,
        alpha,
        tuple_count: 16_384,
        txn_count: txns,
        scale: 8,
        abort_rate: 0.0,
        seed: 7,
    }
}

fn bench_config(parallel: bool) -> EngineConfig {
    EngineConfig {
        lane_count: 8,
        parallel,
        verify: false,
        max_bulk: 4096,
        ..Default::default()
    }
}

fn rank_pipeline(c: &mut Criterion) {
    let spec = micro_spec(0.5, 8192);
    let w = generate(&spec).unwrap();
    let store = load_store(&w.schema_text).unwrap();
    let registry = build_registry(&spec, 128);
    let fp = collect_footprints(&registry, &store, &w.txns);
    let ids: Vec<u64> = w.txns.iter().map(|t| t.id).collect();
    let ops: Vec<_> = fp.ops.iter().flatten().copied().collect();
    let pool = collapse_ops(&ids, &ops);

    let mut group = c.benchmark_group("compute_ranks");
    for parallel in [false, true] {
        let name = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(name), &parallel, |b, &p| {
            b.iter(|| compute_ranks(&pool, p));
        });
    }
    group.finish();
}

fn strategies(c: &mut Criterion) {
    let spec = micro_spec(0.2, 4096);
    let w = generate(&spec).unwrap();
    let mut group = c.benchmark_group("strategy");
    group.sample_size(10);
    for strategy in [Strategy::Tpl, Strategy::Part, Strategy::Kset] {
        for parallel in [false, true] {
            let label = format!(
                "{}/{}",
                strategy.name(),
                if parallel { "parallel" } else { "sequential" }
            );
            group.bench_with_input(
                BenchmarkId::from_parameter(label),
                &(strategy, parallel),
                |b, &(s, p)| {
                    let mut cfg = bench_config(p);
                    cfg.strategy = StrategyChoice::Fixed(s);
                    b.iter(|| run_generated(&w, &cfg, false).unwrap());
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, rank_pipeline, strategies);
criterion_main!(benches);
