//! Partition-based execution: one lane handles all the transactions of a
//! partition sequentially, so no locks are needed. Requires every transaction
//! in the bulk to be single-partition.

use super::recover::rollback_one;
use super::{Bulk, ExecError, ExecOutcome, ExecutorConfig, PerTxn};
use crate::par;
use crate::storage::{ColumnStore, InsertBuffer};
use crate::txmodel::{DirectCtx, PartitionSpan, Registry, TraceShared, TxnStatus};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// The sorted partition array plus each lane's ranges into it.
#[derive(Clone, Debug)]
pub struct PartitionSchedule {
    /// (partition id, bulk index); sorted by partition for the sort-based
    /// builder, grouped-by-partition for the counter-based one.
    pub entries: Vec<(u32, usize)>,
    /// Half-open ranges into `entries`, one list per lane.
    pub lane_ranges: Vec<Vec<(usize, usize)>>,
    /// Distinct partition ids in `entries` order.
    pub partitions: Vec<u32>,
}

impl PartitionSchedule {
    /// Contents per partition as sets of txn ids (order-insensitive view).
    pub fn partition_sets(&self, bulk: &Bulk) -> std::collections::BTreeMap<u32, std::collections::BTreeSet<u64>> {
        let mut out: std::collections::BTreeMap<u32, std::collections::BTreeSet<u64>> =
            Default::default();
        for &(p, idx) in &self.entries {
            out.entry(p).or_default().insert(bulk.txns[idx].id);
        }
        out
    }

    pub fn lane_txn_counts(&self, lanes: usize) -> Vec<u64> {
        let mut counts = vec![0u64; lanes];
        for (lane, ranges) in self.lane_ranges.iter().enumerate() {
            counts[lane] = ranges.iter().map(|(s, e)| (e - s) as u64).sum();
        }
        counts
    }
}

fn partition_of(registry: &Registry, bulk: &Bulk, idx: usize) -> Result<u32, ExecError> {
    let sig = &bulk.txns[idx];
    let ty = registry.get(sig.type_id)?;
    match (ty.partition)(&sig.params) {
        PartitionSpan::Single(p) => Ok(p),
        PartitionSpan::Cross => Err(ExecError::CrossPartition { txn: sig.id }),
    }
}

/// Carves boundaries and deals partitions round-robin onto lanes. Boundaries
/// are located with binary searches over the sorted entries.
fn lane_ranges_for(entries: &[(u32, usize)], lanes: usize) -> (Vec<u32>, Vec<Vec<(usize, usize)>>) {
    let mut partitions: Vec<u32> = entries.iter().map(|(p, _)| *p).collect();
    partitions.dedup();
    let mut lane_ranges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); lanes];
    for (i, &p) in partitions.iter().enumerate() {
        let start = entries.partition_point(|&(q, _)| q < p);
        let end = entries.partition_point(|&(q, _)| q <= p);
        lane_ranges[i % lanes].push((start, end));
    }
    (partitions, lane_ranges)
}

/// Sort-based schedule: map each transaction to its partition, sort by
/// (partition, timestamp), then binary-search per-lane boundaries.
pub fn build_partition_schedule(
    registry: &Registry,
    bulk: &Bulk,
    lanes: usize,
) -> Result<PartitionSchedule, ExecError> {
    let mut entries: Vec<(u32, usize)> = Vec::with_capacity(bulk.len());
    for idx in 0..bulk.len() {
        entries.push((partition_of(registry, bulk, idx)?, idx));
    }
    entries.sort_by_key(|&(p, idx)| (p, bulk.txns[idx].id));
    let (partitions, lane_ranges) = lane_ranges_for(&entries, lanes);
    Ok(PartitionSchedule {
        entries,
        lane_ranges,
        partitions,
    })
}

/// Counter-based schedule generation without any sort: each transaction
/// fetch-adds its partition's counter for a relative position, and a prefix
/// sum over the final counters yields the group start offsets. Partition
/// contents equal the sort-based schedule's; order inside a partition is
/// whatever the fetch-add race produced, which is why this variant only
/// guarantees serializability.
pub fn part_relaxed_schedule(
    registry: &Registry,
    bulk: &Bulk,
    lanes: usize,
    parallel: bool,
) -> Result<PartitionSchedule, ExecError> {
    let n = bulk.len();
    let mut pids: Vec<u32> = Vec::with_capacity(n);
    for idx in 0..n {
        pids.push(partition_of(registry, bulk, idx)?);
    }
    let mut distinct: Vec<u32> = pids.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let slot_of = |p: u32| distinct.binary_search(&p).unwrap();
    let counters: Vec<AtomicU32> = (0..distinct.len()).map(|_| AtomicU32::new(0)).collect();
    let positions: Vec<(usize, u32)> = par::map_indices(parallel, n, |idx| {
        let s = slot_of(pids[idx]);
        (s, counters[s].fetch_add(1, Ordering::Relaxed))
    });
    // Prefix sum over the final counter values gives each group's start.
    let mut starts: Vec<usize> = Vec::with_capacity(distinct.len());
    let mut acc = 0usize;
    for c in &counters {
        starts.push(acc);
        acc += c.load(Ordering::Relaxed) as usize;
    }
    let mut entries: Vec<(u32, usize)> = vec![(0, 0); n];
    for (idx, &(slot, pos)) in positions.iter().enumerate() {
        entries[starts[slot] + pos as usize] = (distinct[slot], idx);
    }
    let (partitions, lane_ranges) = lane_ranges_for(&entries, lanes);
    Ok(PartitionSchedule {
        entries,
        lane_ranges,
        partitions,
    })
}

/// Executes a partition schedule: each lane walks its partitions, running the
/// transactions of a partition one after another. Aborts are undone on the
/// spot, before the partition's next transaction runs.
pub fn exec_part_schedule(
    registry: &Registry,
    store: &ColumnStore,
    buf: &Mutex<InsertBuffer>,
    bulk: &Bulk,
    schedule: &PartitionSchedule,
    config: &ExecutorConfig,
    trace: Option<&TraceShared>,
) -> Result<ExecOutcome, ExecError> {
    config.validate()?;
    let start = Instant::now();
    let log_undo = registry.undo_required();
    let lanes = config.lanes;
    let lane_results: Vec<Result<Vec<(usize, PerTxn)>, ExecError>> =
        par::map_indices(config.parallel, lanes, |lane| {
            let mut out = Vec::new();
            for &(s, e) in &schedule.lane_ranges[lane] {
                for &(_, idx) in &schedule.entries[s..e] {
                    let sig = &bulk.txns[idx];
                    let ty = registry.get(sig.type_id)?;
                    let mut ctx =
                        DirectCtx::new(store, buf, sig.id, lane as u32, log_undo, trace);
                    let status = match (ty.body)(&mut ctx, &sig.params) {
                        Ok(()) => TxnStatus::Committed,
                        Err(abort) => {
                            rollback_one(store, sig.id, ctx.writes, &ctx.undo)?;
                            TxnStatus::Aborted(abort.reason)
                        }
                    };
                    out.push((
                        idx,
                        PerTxn {
                            status,
                            undo: Vec::new(),
                            writes: 0,
                        },
                    ));
                }
            }
            Ok(out)
        });
    let mut statuses: Vec<(u64, TxnStatus)> = Vec::with_capacity(bulk.len());
    let mut lane_counts = Vec::with_capacity(lanes);
    for r in lane_results {
        let v = r?;
        lane_counts.push(v.len() as u64);
        for (idx, p) in v {
            statuses.push((bulk.txns[idx].id, p.status));
        }
    }
    statuses.sort_by_key(|(id, _)| *id);
    Ok(ExecOutcome {
        statuses,
        rounds: 1,
        wall: start.elapsed(),
        lane_txn_counts: lane_counts,
    })
}

/// Sort-based partition execution (the strict variant: timestamp order within
/// each partition).
pub fn exec_part(
    registry: &Registry,
    store: &ColumnStore,
    buf: &Mutex<InsertBuffer>,
    bulk: &Bulk,
    config: &ExecutorConfig,
    trace: Option<&TraceShared>,
) -> Result<ExecOutcome, ExecError> {
    let schedule = build_partition_schedule(registry, bulk, config.lanes)?;
    exec_part_schedule(registry, store, buf, bulk, &schedule, config, trace)
}
