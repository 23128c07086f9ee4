//! 0-set execution: repeatedly peel the transactions with no preceding
//! conflicting transaction and run them fully in parallel, no locks, with a
//! barrier between rounds.

use super::recover::rollback_one;
use super::{Bulk, ExecError, ExecOutcome, ExecutorConfig};
use crate::depgraph::ZeroSetExtractor;
use crate::par;
use crate::storage::{ColumnStore, InsertBuffer};
use crate::txmodel::{DirectCtx, Registry, TraceShared, TxnStatus};
use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

/// Rounds smaller than this run inline on the driving thread; scheduling a
/// parallel scope for one or two transactions costs more than it buys.
const INLINE_ROUND: usize = 3;

pub fn exec_kset(
    registry: &Registry,
    store: &ColumnStore,
    buf: &Mutex<InsertBuffer>,
    bulk: &Bulk,
    config: &ExecutorConfig,
    trace: Option<&TraceShared>,
) -> Result<ExecOutcome, ExecError> {
    config.validate()?;
    let start = Instant::now();
    let deadline = start + config.watchdog;
    let log_undo = registry.undo_required();

    let mut extractor = ZeroSetExtractor::new();
    let mut by_id: HashMap<u64, usize> = HashMap::with_capacity(bulk.len());
    for &idx in &bulk.id_order() {
        let sig = &bulk.txns[idx];
        let ops: Vec<(u64, bool)> = bulk.footprints[idx]
            .iter()
            .map(|op| (op.item.encode(), op.write))
            .collect();
        extractor.insert_txn(sig.id, &ops);
        by_id.insert(sig.id, idx);
    }

    let mut statuses: Vec<(u64, TxnStatus)> = Vec::with_capacity(bulk.len());
    let mut lane_counts = vec![0u64; config.lanes];
    let mut rounds = 0u32;
    while !extractor.is_empty() {
        if Instant::now() > deadline {
            return Err(ExecError::Watchdog);
        }
        let round = extractor.extract(None);
        assert!(!round.is_empty(), "a nonempty pool always has sources");
        rounds += 1;
        let parallel = config.parallel && round.len() >= INLINE_ROUND;
        let results: Vec<Result<(u64, TxnStatus), ExecError>> =
            par::map_indices(parallel, round.len(), |i| {
                let id = round[i];
                let idx = by_id[&id];
                let sig = &bulk.txns[idx];
                let lane = (i % config.lanes) as u32;
                let ty = registry.get(sig.type_id)?;
                let mut ctx = DirectCtx::new(store, buf, sig.id, lane, log_undo, trace);
                let status = match (ty.body)(&mut ctx, &sig.params) {
                    Ok(()) => TxnStatus::Committed,
                    Err(abort) => {
                        // No conflicting transaction shares this round, so
                        // undoing just this one repairs everything.
                        rollback_one(store, sig.id, ctx.writes, &ctx.undo)?;
                        TxnStatus::Aborted(abort.reason)
                    }
                };
                Ok((sig.id, status))
            });
        for (i, r) in results.into_iter().enumerate() {
            let (id, status) = r?;
            lane_counts[i % config.lanes] += 1;
            statuses.push((id, status));
        }
    }
    statuses.sort_by_key(|(id, _)| *id);
    Ok(ExecOutcome {
        statuses,
        rounds,
        wall: start.elapsed(),
        lane_txn_counts: lane_counts,
    })
}
