//! Bulk execution strategies over a fixed pool of worker lanes.
//!
//! All strategies own the store for the duration of a bulk and must leave it
//! exactly as the sequential reference execution would (same snapshot, same
//! per-transaction statuses). A barrier separates bulks; insert merging and
//! recovery run single-threaded in the inter-bulk window.

mod kset;
mod lock;
mod part;
mod recover;
mod tpl;

pub use kset::exec_kset;
pub use lock::{build_lock_plan, LockObject, LockPlan};
pub use part::{
    build_partition_schedule, exec_part, exec_part_schedule, part_relaxed_schedule,
    PartitionSchedule,
};
pub use recover::{recover, RecoveryReport, UndoLog};
pub use tpl::{exec_tpl, exec_tpl_relaxed};

use crate::storage::{DataItemId, LockAddressing, StorageError};
use crate::txmodel::{BasicOp, RegistryError, TxnSignature, TxnStatus};
use std::time::Duration;
use thiserror::Error;

/// The bulk execution strategies.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Strategy {
    /// Counter-keyed two-phase locking: deterministic timestamp order.
    Tpl,
    /// Partition-per-lane, lock-free; single-partition transactions only.
    Part,
    /// Iterative 0-set execution, lock-free.
    Kset,
    /// 0/1 spin-lock two-phase locking; serializable, timestamp order relaxed.
    TplRelaxed,
    /// Counter/prefix-sum schedule generation without sort; relaxed order
    /// within a partition.
    PartRelaxed,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Tpl => "tpl",
            Strategy::Part => "part",
            Strategy::Kset => "kset",
            Strategy::TplRelaxed => "tpl-relaxed",
            Strategy::PartRelaxed => "part-relaxed",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        match s {
            "tpl" => Some(Strategy::Tpl),
            "part" => Some(Strategy::Part),
            "kset" => Some(Strategy::Kset),
            "tpl-relaxed" => Some(Strategy::TplRelaxed),
            "part-relaxed" => Some(Strategy::PartRelaxed),
            _ => None,
        }
    }
}

/// Worker-lane and tuning knobs shared by every strategy.
#[derive(Clone, Debug)]
pub struct ExecutorConfig {
    /// Number of worker lanes (M). Keyed TPL spawns this many OS threads;
    /// the lock-free strategies use it as the lane-chunking width.
    pub lanes: usize,
    /// Lanes are grouped in warp-sized chunks for the divergence metric.
    pub warp_size: usize,
    /// Partition sizing input for the partition-based strategy.
    pub partition_size: u64,
    pub lock_addressing: LockAddressing,
    /// Run data-parallel loops on the rayon pool (when compiled in).
    pub parallel: bool,
    /// Record the per-access trace (test mode).
    pub trace: bool,
    /// Spin waits abort the run when they exceed this bound.
    pub watchdog: Duration,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            lanes: 8,
            warp_size: 32,
            partition_size: 128,
            lock_addressing: LockAddressing::Exact,
            parallel: crate::par::parallel_available(),
            trace: false,
            watchdog: Duration::from_secs(60),
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.lanes == 0 {
            return Err(ExecError::BadConfig("lane_count must be >= 1".into()));
        }
        if self.warp_size == 0 {
            return Err(ExecError::BadConfig("warp_size must be >= 1".into()));
        }
        if self.lanes >= self.warp_size && !self.lanes.is_multiple_of(self.warp_size) {
            return Err(ExecError::BadConfig(
                "lane_count must be a multiple of warp_size".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Error, Debug)]
pub enum ExecError {
    #[error("watchdog expired during bulk execution")]
    Watchdog,
    #[error("txn {txn} touched undeclared item {item:?}")]
    UndeclaredAccess { txn: u64, item: DataItemId },
    #[error("cross-partition txn {txn} reached the partition executor")]
    CrossPartition { txn: u64 },
    #[error("type {type_id} touches root-locked table {table} but declares no root key")]
    MissingRootKey { type_id: u16, table: u32 },
    #[error("txn {txn} wrote before aborting but has no undo records")]
    MissingUndo { txn: u64 },
    #[error("lock protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("bad config: {0}")]
    BadConfig(String),
}

/// A bulk handed to an executor: signatures in scheduling order plus their
/// declared (possibly coarsened) footprints.
#[derive(Clone, Debug, Default)]
pub struct Bulk {
    pub txns: Vec<TxnSignature>,
    /// Aligned with `txns`.
    pub footprints: Vec<Vec<BasicOp>>,
}

impl Bulk {
    pub fn len(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }

    /// Indices into `txns` in increasing id order.
    pub fn id_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.txns.len()).collect();
        order.sort_by_key(|&i| self.txns[i].id);
        order
    }
}

/// Result of one bulk execution.
#[derive(Clone, Debug)]
pub struct ExecOutcome {
    /// (txn id, status) in increasing id order.
    pub statuses: Vec<(u64, TxnStatus)>,
    /// 0-set rounds executed (1 for the non-iterative strategies).
    pub rounds: u32,
    pub wall: Duration,
    /// Transactions executed per lane.
    pub lane_txn_counts: Vec<u64>,
}

impl ExecOutcome {
    pub fn committed(&self) -> usize {
        self.statuses.iter().filter(|(_, s)| s.committed()).count()
    }

    pub fn aborted(&self) -> usize {
        self.statuses
            .iter()
            .filter(|(_, s)| matches!(s, TxnStatus::Aborted(_)))
            .count()
    }

    pub fn rolled_back(&self) -> usize {
        self.statuses
            .iter()
            .filter(|(_, s)| matches!(s, TxnStatus::RolledBack))
            .count()
    }
}

pub(crate) struct PerTxn {
    pub status: TxnStatus,
    pub undo: Vec<crate::storage::UndoRecord>,
    pub writes: u64,
}
