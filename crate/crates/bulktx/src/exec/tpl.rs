//! Two-phase-locking executors: keyed (deterministic timestamp order) and
//! relaxed (0/1 spin locks, serializable only).

use super::lock::{build_lock_plan, KeyedCtx, TxnLockState};
use super::recover::{recover_tpl, rollback_one};
use super::{Bulk, ExecError, ExecOutcome, ExecutorConfig, PerTxn};
use crate::storage::{ColumnStore, InsertBuffer, LockTable};
use crate::txmodel::{DirectCtx, FatalKind, Registry, TraceShared, TxnStatus};
use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

struct LaneHarvest {
    results: Vec<(usize, PerTxn)>,
    txns_run: u64,
    fatal: Option<(usize, FatalKind)>,
}

/// Runs `lanes` worker threads pulling bulk positions from `order` through a
/// shared cursor. Hand-out follows `order`; for the keyed protocol that order
/// must be by increasing timestamp, which guarantees the lane holding the
/// smallest in-flight transaction only ever waits on completed ones.
pub(super) fn run_lanes<F>(
    lanes: usize,
    order: &[usize],
    poison: &AtomicBool,
    run_one: F,
) -> (Vec<(usize, PerTxn)>, Vec<u64>, Option<(usize, FatalKind)>)
where
    F: Fn(usize, u32) -> Result<PerTxn, FatalKind> + Sync,
{
    let cursor = AtomicUsize::new(0);
    let harvests: Vec<LaneHarvest> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..lanes)
            .map(|lane| {
                let cursor = &cursor;
                let run_one = &run_one;
                s.spawn(move || {
                    let mut h = LaneHarvest {
                        results: Vec::new(),
                        txns_run: 0,
                        fatal: None,
                    };
                    loop {
                        if poison.load(Ordering::Relaxed) {
                            break;
                        }
                        let pos = cursor.fetch_add(1, Ordering::Relaxed);
                        if pos >= order.len() {
                            break;
                        }
                        let idx = order[pos];
                        match run_one(idx, lane as u32) {
                            Ok(r) => {
                                h.results.push((idx, r));
                                h.txns_run += 1;
                            }
                            Err(k) => {
                                poison.store(true, Ordering::Relaxed);
                                h.fatal = Some((idx, k));
                                break;
                            }
                        }
                    }
                    h
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut results = Vec::new();
    let mut counts = Vec::with_capacity(lanes);
    let mut fatal: Option<(usize, FatalKind)> = None;
    for h in harvests {
        counts.push(h.txns_run);
        results.extend(h.results);
        // Poisoned lanes are echoes; keep the root cause when there is one.
        match (&fatal, &h.fatal) {
            (None, Some(_)) => fatal = h.fatal,
            (Some((_, FatalKind::Poisoned)), Some((_, k))) if !matches!(k, FatalKind::Poisoned) => {
                fatal = h.fatal
            }
            _ => {}
        }
    }
    (results, counts, fatal)
}

pub(super) fn fatal_to_error(idx_kind: (usize, FatalKind), bulk: &Bulk) -> ExecError {
    let (idx, kind) = idx_kind;
    let txn = bulk.txns.get(idx).map(|t| t.id).unwrap_or(0);
    match kind {
        FatalKind::Watchdog | FatalKind::Poisoned => ExecError::Watchdog,
        FatalKind::Undeclared(item) => ExecError::UndeclaredAccess { txn, item },
        FatalKind::MissingUndo => ExecError::MissingUndo { txn },
    }
}

/// Counter-lock two-phase locking. Conflicting accesses happen in strictly
/// increasing timestamp order; aborted transactions finish their key protocol
/// as no-ops so successors never block, and the damage is repaired afterwards
/// from the undo log (sub-DAG rollback).
pub fn exec_tpl(
    registry: &Registry,
    store: &ColumnStore,
    buf: &Mutex<InsertBuffer>,
    bulk: &Bulk,
    config: &ExecutorConfig,
    trace: Option<&TraceShared>,
) -> Result<ExecOutcome, ExecError> {
    config.validate()?;
    let start = Instant::now();
    let plan = build_lock_plan(registry, bulk, config.lock_addressing)?;
    let locks = LockTable::new(plan.slots);
    let deadline = start + config.watchdog;
    let poison = AtomicBool::new(false);
    let log_undo = registry.undo_required();
    let order = bulk.id_order();

    let run_one = |idx: usize, lane: u32| -> Result<PerTxn, FatalKind> {
        let sig = &bulk.txns[idx];
        let state = TxnLockState::new(&plan, idx);
        let mut ctx = KeyedCtx::new(
            store, buf, sig.id, lane, log_undo, trace, &locks, state, deadline, &poison,
        );
        let body_result = match registry.get(sig.type_id) {
            Ok(ty) => (ty.body)(&mut ctx, &sig.params),
            Err(e) => Err(crate::txmodel::Abort {
                reason: crate::txmodel::AbortReason::Runtime(e.to_string()),
            }),
        };
        if let Some(k) = ctx.fatal {
            return Err(k);
        }
        ctx.state.finish(&locks, deadline, &poison)?;
        let status = match body_result {
            Ok(()) => TxnStatus::Committed,
            Err(abort) => TxnStatus::Aborted(abort.reason),
        };
        Ok(PerTxn {
            status,
            undo: std::mem::take(&mut ctx.inner.undo),
            writes: ctx.inner.writes,
        })
    };

    let (results, lane_counts, fatal) = run_lanes(config.lanes, &order, &poison, run_one);
    if let Some(f) = fatal {
        return Err(fatal_to_error(f, bulk));
    }
    if !locks.verify_and_reset(&plan.expected) {
        return Err(ExecError::Protocol(
            "lock counters did not reach their per-slot totals".into(),
        ));
    }

    let mut per_txn: HashMap<u64, PerTxn> = results
        .into_iter()
        .map(|(idx, r)| (bulk.txns[idx].id, r))
        .collect();
    // Post-bulk repair: undo aborted writers and their dependent sub-DAGs.
    let statuses = recover_tpl(store, bulk, &mut per_txn)?;

    Ok(ExecOutcome {
        statuses,
        rounds: 1,
        wall: start.elapsed(),
        lane_txn_counts: lane_counts,
    })
}

/// Basic 0/1 spin-lock two-phase locking with the timestamp constraint
/// relaxed: the result is equivalent to some serial order, not necessarily
/// timestamp order. Locks are acquired in ascending slot order before the
/// body runs, which rules out deadlock (the naive form could hang).
pub fn exec_tpl_relaxed(
    registry: &Registry,
    store: &ColumnStore,
    buf: &Mutex<InsertBuffer>,
    bulk: &Bulk,
    config: &ExecutorConfig,
    trace: Option<&TraceShared>,
) -> Result<ExecOutcome, ExecError> {
    config.validate()?;
    let start = Instant::now();
    let plan = build_lock_plan(registry, bulk, config.lock_addressing)?;
    let locks = LockTable::new(plan.slots);
    let deadline = start + config.watchdog;
    let poison = AtomicBool::new(false);
    let log_undo = registry.undo_required();
    // Scheduling order as given (grouping allowed): progress relies on lock
    // ordering, not timestamps.
    let order: Vec<usize> = (0..bulk.len()).collect();
    let slot_sets: Vec<Vec<u32>> = plan
        .steps
        .iter()
        .map(|steps| {
            let mut s: Vec<u32> = steps.iter().map(|st| st.slot).collect();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();

    let run_one = |idx: usize, lane: u32| -> Result<PerTxn, FatalKind> {
        let sig = &bulk.txns[idx];
        for &slot in &slot_sets[idx] {
            let mut iters: u32 = 0;
            while !locks.try_lock(slot) {
                iters = iters.wrapping_add(1);
                if iters.is_multiple_of(1024) {
                    if poison.load(Ordering::Relaxed) {
                        return Err(FatalKind::Poisoned);
                    }
                    if Instant::now() > deadline {
                        return Err(FatalKind::Watchdog);
                    }
                }
                if iters.is_multiple_of(64) {
                    std::thread::yield_now();
                } else {
                    std::hint::spin_loop();
                }
            }
        }
        let mut ctx = DirectCtx::new(store, buf, sig.id, lane, log_undo, trace);
        let body_result = match registry.get(sig.type_id) {
            Ok(ty) => (ty.body)(&mut ctx, &sig.params),
            Err(e) => Err(crate::txmodel::Abort {
                reason: crate::txmodel::AbortReason::Runtime(e.to_string()),
            }),
        };
        let status = match body_result {
            Ok(()) => TxnStatus::Committed,
            Err(abort) => {
                // Undo while still holding the locks: nobody observes the
                // aborted writes, so no dependent rollback exists here.
                rollback_one(store, sig.id, ctx.writes, &ctx.undo)
                    .map_err(|_| FatalKind::MissingUndo)?;
                TxnStatus::Aborted(abort.reason)
            }
        };
        for &slot in slot_sets[idx].iter().rev() {
            locks.unlock(slot);
        }
        Ok(PerTxn {
            status,
            undo: Vec::new(),
            writes: 0,
        })
    };

    let (results, lane_counts, fatal) = run_lanes(config.lanes, &order, &poison, run_one);
    if let Some(f) = fatal {
        return Err(fatal_to_error(f, bulk));
    }
    let mut statuses: Vec<(u64, TxnStatus)> = results
        .into_iter()
        .map(|(idx, r)| (bulk.txns[idx].id, r.status))
        .collect();
    statuses.sort_by_key(|(id, _)| *id);
    Ok(ExecOutcome {
        statuses,
        rounds: 1,
        wall: start.elapsed(),
        lane_txn_counts: lane_counts,
    })
}
