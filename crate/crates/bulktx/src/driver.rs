//! The bench driver: submits a workload at a logical arrival rate, batches it
//! into bulks by interval, executes each bulk under the selected strategy,
//! merges inserts in the inter-bulk window, and gates the run on equality
//! with the sequential oracle before reporting metrics.

use crate::config::{EngineConfig, StrategyChoice};
use crate::depgraph::{collapse_ops, compute_ranks, stats_from_ranks};
use crate::exec::{
    exec_kset, exec_part, exec_part_schedule, exec_tpl, exec_tpl_relaxed, part_relaxed_schedule,
    Bulk, ExecError, ExecOutcome, Strategy,
};
use crate::planner::{choose_strategy, divergence_metric, generate_bulk};
use crate::report::{BulkMetrics, RunReport};
use crate::storage::{
    merge_inserts, snapshot, ColumnStore, InsertBuffer, Snapshot, StorageError,
};
use crate::txmodel::{
    execute_sequential, PartitionSpan, Registry, RegistryError, TraceEvent, TraceShared,
    TxnSignature, TxnStatus,
};
use crate::verify::{rolled_back_ids, statuses_equivalent};
use crate::workload::{build_registry, GeneratedWorkload, WorkloadError};
use std::collections::{HashSet, VecDeque};
use std::sync::Mutex;
use std::time::Instant;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DriverError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
}

pub struct RunResult {
    pub report: RunReport,
    pub statuses: Vec<(u64, TxnStatus)>,
    pub snapshot: Snapshot,
    pub store: ColumnStore,
    pub trace: Option<Vec<TraceEvent>>,
}

enum ExecMode<'a> {
    Strategy {
        choice: StrategyChoice,
        trace: Option<&'a TraceShared>,
    },
    /// Sequential replay treating the given ids as forced aborts.
    Oracle { forced: &'a HashSet<u64> },
}

struct LoopOutput {
    statuses: Vec<(u64, TxnStatus)>,
    bulks: Vec<BulkMetrics>,
    wall_us: u64,
    inter_us: u64,
    wait_us: u64,
    response_sum_us: f64,
    failed: Option<String>,
}

fn arrival_of(id: u64, rate: f64) -> u64 {
    (id as f64 * 1_000_000.0 / rate.max(1.0)) as u64
}

fn spans_of(registry: &Registry, bulk: &Bulk) -> Result<Vec<PartitionSpan>, DriverError> {
    bulk.txns
        .iter()
        .map(|t| Ok((registry.get(t.type_id)?.partition)(&t.params)))
        .collect()
}

fn dispatch(
    strategy: Strategy,
    registry: &Registry,
    store: &ColumnStore,
    buf: &Mutex<InsertBuffer>,
    bulk: &Bulk,
    cfg: &EngineConfig,
    trace: Option<&TraceShared>,
) -> Result<ExecOutcome, ExecError> {
    let exec_cfg = cfg.executor();
    match strategy {
        Strategy::Tpl => exec_tpl(registry, store, buf, bulk, &exec_cfg, trace),
        Strategy::TplRelaxed => exec_tpl_relaxed(registry, store, buf, bulk, &exec_cfg, trace),
        Strategy::Part => exec_part(registry, store, buf, bulk, &exec_cfg, trace),
        Strategy::PartRelaxed => {
            let schedule =
                part_relaxed_schedule(registry, bulk, exec_cfg.lanes, exec_cfg.parallel)?;
            exec_part_schedule(registry, store, buf, bulk, &schedule, &exec_cfg, trace)
        }
        Strategy::Kset => exec_kset(registry, store, buf, bulk, &exec_cfg, trace),
    }
}

/// One full pass over the workload: windows of `interval_us` logical time,
/// each drained into bulks of at most `max_bulk` transactions.
fn run_loop(
    registry: &Registry,
    store: &mut ColumnStore,
    txns: &[TxnSignature],
    cfg: &EngineConfig,
    mode: ExecMode<'_>,
) -> Result<LoopOutput, DriverError> {
    cfg.executor().validate()?;
    let type_count = registry.type_count().max(1) as u32;
    let grouping = cfg.grouping(type_count);
    let thresholds = cfg.thresholds();
    let buf = Mutex::new(InsertBuffer::default());
    let pool = crate::txmodel::TxnPool::new();

    let mut out = LoopOutput {
        statuses: Vec::with_capacity(txns.len()),
        bulks: Vec::new(),
        wall_us: 0,
        inter_us: 0,
        wait_us: 0,
        response_sum_us: 0.0,
        failed: None,
    };

    let loop_start = Instant::now();
    std::thread::scope(|scope| -> Result<(), DriverError> {
        // Producer: one submission stream at the configured logical rate.
        scope.spawn(|| {
            for t in txns {
                let arrival = arrival_of(t.id, cfg.arrival_rate);
                let sig = pool
                    .submit(registry, t.type_id, t.params.clone(), arrival)
                    .expect("workload types are registered");
                debug_assert_eq!(sig.id, t.id);
                if t.id % 1024 == 1023 {
                    pool.advance_watermark(arrival);
                }
            }
            pool.close();
        });

        let mut backlog: VecDeque<TxnSignature> = VecDeque::new();
        let mut processed = 0usize;
        let mut logical_now = 0u64;
        let mut bulk_index = 0u64;
        'windows: while processed < txns.len() {
            logical_now += cfg.interval_us.max(1);
            let wait_start = Instant::now();
            backlog.extend(pool.take_arrived(logical_now, usize::MAX));
            out.wait_us += wait_start.elapsed().as_micros() as u64;
            while !backlog.is_empty() {
                let gen_start = Instant::now();
                let bulk = generate_bulk(registry, store, &mut backlog, cfg.max_bulk, &grouping);
                let spans = spans_of(registry, &bulk)?;
                let any_unknown = bulk
                    .footprints
                    .iter()
                    .flatten()
                    .any(|op| op.item.is_coarse());
                let chosen: Option<Strategy> = match &mode {
                    ExecMode::Oracle { .. } => None,
                    ExecMode::Strategy { choice, .. } => match choice {
                        StrategyChoice::Sequential => None,
                        StrategyChoice::Fixed(s) => Some(*s),
                        StrategyChoice::Auto => {
                            if any_unknown {
                                // Only the keyed-lock path is safe without a
                                // precise conflict graph.
                                Some(Strategy::Tpl)
                            } else {
                                let ids: Vec<u64> = bulk.txns.iter().map(|t| t.id).collect();
                                let all_ops: Vec<_> =
                                    bulk.footprints.iter().flatten().copied().collect();
                                let rt =
                                    compute_ranks(&collapse_ops(&ids, &all_ops), cfg.parallel);
                                Some(choose_strategy(
                                    &stats_from_ranks(&rt, Some(&spans)),
                                    &thresholds,
                                ))
                            }
                        }
                    },
                };
                // Cross-partition transactions force the whole bulk through
                // the keyed-lock path.
                let chosen = chosen.map(|s| {
                    if matches!(s, Strategy::Part | Strategy::PartRelaxed)
                        && spans.iter().any(|sp| matches!(sp, PartitionSpan::Cross))
                    {
                        Strategy::Tpl
                    } else {
                        s
                    }
                });
                let gen_us = gen_start.elapsed().as_micros() as u64;

                let exec_start = Instant::now();
                let outcome = match (&mode, chosen) {
                    (ExecMode::Oracle { .. }, _) | (ExecMode::Strategy { .. }, None) => {
                        let default_forced = HashSet::new();
                        let forced = match &mode {
                            ExecMode::Oracle { forced } => *forced,
                            _ => &default_forced,
                        };
                        let mut ordered = bulk.txns.clone();
                        ordered.sort_by_key(|t| t.id);
                        let statuses =
                            execute_sequential(registry, store, &buf, &ordered, forced, None);
                        ExecOutcome {
                            statuses,
                            rounds: 1,
                            wall: exec_start.elapsed(),
                            lane_txn_counts: vec![bulk.len() as u64],
                        }
                    }
                    (ExecMode::Strategy { trace, .. }, Some(strategy)) => {
                        match dispatch(strategy, registry, store, &buf, &bulk, cfg, *trace) {
                            Ok(o) => o,
                            Err(ExecError::Watchdog) => {
                                out.failed = Some("watchdog expired".into());
                                break 'windows;
                            }
                            Err(e) => return Err(e.into()),
                        }
                    }
                };
                let exec_us = exec_start.elapsed().as_micros() as u64;

                let inter_start = Instant::now();
                let committed: HashSet<u64> = outcome
                    .statuses
                    .iter()
                    .filter(|(_, s)| s.committed())
                    .map(|(id, _)| *id)
                    .collect();
                {
                    let mut guard = buf.lock().unwrap();
                    merge_inserts(store, &mut guard, |id| committed.contains(&id))?;
                }
                out.inter_us += inter_start.elapsed().as_micros() as u64;

                for t in &bulk.txns {
                    out.response_sum_us +=
                        logical_now.saturating_sub(t.arrival_us) as f64 + exec_us as f64;
                }
                let types: Vec<u16> = bulk.txns.iter().map(|t| t.type_id).collect();
                let strategy_name = match chosen {
                    Some(s) => s.name().to_string(),
                    None => "seq".to_string(),
                };
                out.bulks.push(BulkMetrics {
                    index: bulk_index,
                    strategy: strategy_name,
                    size: bulk.len(),
                    committed: committed.len(),
                    aborted: outcome.aborted(),
                    rolled_back: outcome.rolled_back(),
                    gen_us,
                    exec_us,
                    rounds: outcome.rounds,
                    divergence: divergence_metric(&types, cfg.warp_size),
                });
                out.statuses.extend(outcome.statuses);
                processed += bulk.len();
                bulk_index += 1;
            }
        }
        Ok(())
    })?;
    out.wall_us = loop_start.elapsed().as_micros() as u64;
    out.statuses.sort_by_key(|(id, _)| *id);
    Ok(out)
}

/// Executes a workload against a store under the configured strategy; when
/// `cfg.verify` is set the final state and statuses are checked against a
/// sequential replay (with the strategy's rolled-back set forced) before the
/// report goes out.
pub fn run_workload(
    registry: &Registry,
    mut store: ColumnStore,
    txns: &[TxnSignature],
    cfg: &EngineConfig,
    collect_trace: bool,
) -> Result<RunResult, DriverError> {
    let oracle_store = if cfg.verify {
        Some(store.clone_data())
    } else {
        None
    };
    let trace_shared = collect_trace.then(TraceShared::new);
    let mode = ExecMode::Strategy {
        choice: cfg.strategy,
        trace: trace_shared.as_ref(),
    };
    let out = run_loop(registry, &mut store, txns, cfg, mode)?;

    let mut report = RunReport {
        strategy: cfg.strategy.name(),
        bulks: out.bulks,
        wall_us: out.wall_us,
        inter_us: out.inter_us,
        wait_us: out.wait_us,
        avg_response_us: if txns.is_empty() {
            0.0
        } else {
            out.response_sum_us / txns.len() as f64
        },
        failed: out.failed,
        ..Default::default()
    };
    report.recompute_totals();

    let final_snapshot = snapshot(&store);
    let mut verified = None;
    if let (Some(oracle_init), None) = (oracle_store, &report.failed) {
        let forced = rolled_back_ids(&out.statuses);
        let mut ostore = oracle_init;
        let oracle_out = run_loop(
            registry,
            &mut ostore,
            txns,
            cfg,
            ExecMode::Oracle { forced: &forced },
        )?;
        let osnap = snapshot(&ostore);
        let snap_ok = matches!(
            crate::storage::compare_snapshots(&final_snapshot, &osnap),
            crate::storage::SnapshotCompare::Equal
        );
        let status_ok = statuses_equivalent(&out.statuses, &oracle_out.statuses);
        verified = Some(snap_ok && status_ok.is_ok());
        if !verified.unwrap() {
            report.verified = verified;
            let detail = match (snap_ok, status_ok) {
                (false, _) => "final snapshot differs from sequential oracle".to_string(),
                (_, Err(e)) => e,
                _ => unreachable!(),
            };
            return Err(DriverError::OracleMismatch(detail));
        }
    }
    report.verified = verified;

    Ok(RunResult {
        report,
        statuses: out.statuses,
        snapshot: final_snapshot,
        store,
        trace: trace_shared.map(|t| t.events()),
    })
}

/// Convenience entry: build registry and store from a generated workload.
pub fn run_generated(
    w: &GeneratedWorkload,
    cfg: &EngineConfig,
    collect_trace: bool,
) -> Result<RunResult, DriverError> {
    let registry = build_registry(&w.spec, cfg.partition_size);
    let store = crate::storage::load_store(&w.schema_text)?;
    run_workload(&registry, store, &w.txns, cfg, collect_trace)
}

/// Sequential-oracle run used by the `oracle` CLI subcommand: executes the
/// workload with the reference executor (same batching) and returns the final
/// store dump for diffing.
pub fn oracle_dump(w: &GeneratedWorkload, cfg: &EngineConfig) -> Result<String, DriverError> {
    let registry = build_registry(&w.spec, cfg.partition_size);
    let mut store = crate::storage::load_store(&w.schema_text)?;
    let forced = HashSet::new();
    run_loop(
        &registry,
        &mut store,
        &w.txns,
        cfg,
        ExecMode::Oracle { forced: &forced },
    )?;
    Ok(crate::storage::dump_store(&store))
}
