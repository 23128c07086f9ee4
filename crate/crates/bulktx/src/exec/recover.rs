//! Undo-log recovery.
//!
//! Lock-free strategies repair an abort on the spot: conflicting transactions
//! either sit in later rounds (0-set execution) or behind it in the same
//! partition lane, so nobody has observed the aborted writes yet and undoing
//! just that transaction suffices. Under counter locks, conflicting successors
//! may already have consumed dirty values by the time the bulk ends, so the
//! whole sub-DAG reachable from an aborted writer is re-marked and undone in
//! reverse timestamp order; the result equals a sequential execution that
//! treats every undone transaction as aborted.

use super::{Bulk, ExecError, PerTxn, Strategy};
use crate::depgraph::{build_graph, TDependencyGraph};
use crate::storage::{apply_undo, ColumnStore, UndoRecord};
use crate::txmodel::TxnStatus;
use std::collections::{BTreeSet, HashMap};

/// Undo state for a finished bulk, keyed by transaction id.
#[derive(Default, Clone, Debug)]
pub struct UndoLog {
    pub records: HashMap<u64, Vec<UndoRecord>>,
    /// In-place writes each transaction performed (tracked even when logging
    /// is off, to catch two-phase declarations that lied).
    pub writes: HashMap<u64, u64>,
}

#[derive(Default, Clone, Debug)]
pub struct RecoveryReport {
    /// Committed transactions that had to be undone (dependents of aborters).
    pub rolled_back: Vec<u64>,
    /// Transactions whose undo records were applied.
    pub undone: Vec<u64>,
}

/// Undoes a single transaction's effects; errors when it wrote without
/// logging.
pub(crate) fn rollback_one(
    store: &ColumnStore,
    txn: u64,
    writes: u64,
    undo: &[UndoRecord],
) -> Result<(), ExecError> {
    if writes > 0 && undo.is_empty() {
        return Err(ExecError::MissingUndo { txn });
    }
    apply_undo(store, undo)?;
    Ok(())
}

/// Post-bulk repair. `statuses` must carry the as-executed outcome; marked
/// (aborted) transactions that performed writes get undone, and under the
/// keyed-lock strategy their sub-DAG successors are re-marked and undone too.
pub fn recover(
    store: &ColumnStore,
    statuses: &mut [(u64, TxnStatus)],
    undo_log: &UndoLog,
    graph: &TDependencyGraph,
    strategy: Strategy,
) -> Result<RecoveryReport, ExecError> {
    let roots: Vec<u64> = statuses
        .iter()
        .filter(|(id, s)| {
            matches!(s, TxnStatus::Aborted(_))
                && undo_log.writes.get(id).copied().unwrap_or(0) > 0
        })
        .map(|(id, _)| *id)
        .collect();
    if roots.is_empty() {
        return Ok(RecoveryReport::default());
    }
    let mut undo_set: BTreeSet<u64> = roots.iter().copied().collect();
    let mut rolled_back = Vec::new();
    if matches!(strategy, Strategy::Tpl) {
        for dep in graph.descendants(&roots) {
            undo_set.insert(dep);
        }
        for (id, s) in statuses.iter_mut() {
            if undo_set.contains(id) && s.committed() {
                *s = TxnStatus::RolledBack;
                rolled_back.push(*id);
            }
        }
    }
    // Reverse timestamp order, records reversed within each transaction.
    let mut undone = Vec::new();
    for &id in undo_set.iter().rev() {
        let writes = undo_log.writes.get(&id).copied().unwrap_or(0);
        let empty = Vec::new();
        let records = undo_log.records.get(&id).unwrap_or(&empty);
        if writes > 0 {
            rollback_one(store, id, writes, records)?;
            undone.push(id);
        }
    }
    Ok(RecoveryReport {
        rolled_back,
        undone,
    })
}

/// Keyed-TPL internal recovery: builds the bulk's graph from the declared
/// footprints and applies [`recover`].
pub(super) fn recover_tpl(
    store: &ColumnStore,
    bulk: &Bulk,
    per_txn: &mut HashMap<u64, PerTxn>,
) -> Result<Vec<(u64, TxnStatus)>, ExecError> {
    let mut statuses: Vec<(u64, TxnStatus)> = per_txn
        .iter()
        .map(|(id, r)| (*id, r.status.clone()))
        .collect();
    statuses.sort_by_key(|(id, _)| *id);

    let any_marked_writer = statuses.iter().any(|(id, s)| {
        matches!(s, TxnStatus::Aborted(_)) && per_txn[id].writes > 0
    });
    if any_marked_writer {
        let order = bulk.id_order();
        let txn_ops: Vec<(u64, Vec<crate::txmodel::BasicOp>)> = order
            .iter()
            .map(|&i| (bulk.txns[i].id, bulk.footprints[i].clone()))
            .collect();
        let graph = build_graph(&txn_ops);
        let undo_log = UndoLog {
            records: per_txn
                .iter_mut()
                .map(|(id, r)| (*id, std::mem::take(&mut r.undo)))
                .collect(),
            writes: per_txn.iter().map(|(id, r)| (*id, r.writes)).collect(),
        };
        recover(store, &mut statuses, &undo_log, &graph, Strategy::Tpl)?;
    }
    Ok(statuses)
}
