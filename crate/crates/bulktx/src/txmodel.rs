//! Transaction types, signatures, the submission pool, and the sequential
//! reference executor.
//!
//! A transaction type is registered as native code against the store-access
//! trait, together with a declared-footprint function used for conflict
//! analysis and lock assignment. A submitted transaction is a signature
//! `(id, type, params)`; the auto-increment id doubles as the timestamp.

use crate::storage::{
    CellValue, ColumnStore, DataItemId, InsertBuffer, StorageError, UndoRecord,
};
use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use thiserror::Error;

/// Read or write on a single data item; the unit of conflict analysis.
/// Two ops conflict iff they target the same item and at least one is a write.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BasicOp {
    pub item: DataItemId,
    pub txn: u64,
    pub write: bool,
}

impl BasicOp {
    pub fn conflicts(&self, other: &BasicOp) -> bool {
        self.item == other.item && (self.write || other.write)
    }
}

/// A submitted transaction instance. `id` is unique and strictly increasing
/// in submission order; it is also the timestamp of the bulk-correctness
/// definition.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TxnSignature {
    pub id: u64,
    pub type_id: u16,
    pub params: Vec<i64>,
    /// Logical arrival time in microseconds (driver bookkeeping).
    pub arrival_us: u64,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum AbortReason {
    /// Procedure signalled abort with an application code.
    Code(i64),
    /// Procedure hit IO/addressing trouble at run time.
    Runtime(String),
    /// Caller forced the abort (recovery replay, injection).
    Forced,
}

/// Per-transaction outcome of a bulk or sequential execution.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum TxnStatus {
    Committed,
    Aborted(AbortReason),
    /// Undone after the fact because a preceding conflicting transaction
    /// aborted mid-bulk (counter-lock strategy only).
    RolledBack,
}

impl TxnStatus {
    pub fn committed(&self) -> bool {
        matches!(self, TxnStatus::Committed)
    }
}

/// Error surface for procedure store access.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum OpError {
    #[error(transparent)]
    Storage(#[from] StorageError),
    /// Run-level failure; never converted into an abort status.
    #[error("fatal: {0:?}")]
    Fatal(FatalKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FatalKind {
    /// Spin wait exceeded the configured watchdog.
    Watchdog,
    /// A procedure touched an item missing from its declared footprint.
    Undeclared(DataItemId),
    /// Another lane already failed; this lane is bailing out.
    Poisoned,
    /// A transaction wrote before aborting but carries no undo records
    /// (a non-two-phase procedure registered as two-phase).
    MissingUndo,
}

/// Explicit abort signal from a procedure body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abort {
    pub reason: AbortReason,
}

impl Abort {
    pub fn code(code: i64) -> Self {
        Abort {
            reason: AbortReason::Code(code),
        }
    }
}

impl From<OpError> for Abort {
    fn from(e: OpError) -> Self {
        Abort {
            reason: AbortReason::Runtime(e.to_string()),
        }
    }
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum RegistryError {
    #[error("type id {0} already registered")]
    DuplicateType(u16),
    #[error("unknown type id {0}")]
    UnknownType(u16),
}

/// Abstract store accessor handed to procedure bodies. Implementations
/// enforce the concurrency strategy (or none, for the sequential oracle).
pub trait StoreCtx {
    fn read_int(&mut self, item: DataItemId) -> Result<i64, OpError>;
    fn write_int(&mut self, item: DataItemId, v: i64) -> Result<(), OpError>;
    fn read_bytes(&mut self, item: DataItemId) -> Result<Vec<u8>, OpError>;
    fn write_bytes(&mut self, item: DataItemId, v: &[u8]) -> Result<(), OpError>;
    /// Liveness-aware primary-key lookup.
    fn lookup_pk(&mut self, table: u32, key: i64) -> Result<Option<u64>, OpError>;
    /// Buffered insert; invisible to reads until the inter-bulk merge.
    fn insert_row(&mut self, table: u32, values: Vec<CellValue>) -> Result<(), OpError>;
    /// Marks the row dead. Conflict-wise a delete is a write to every field.
    fn delete_row(&mut self, table: u32, row: u64) -> Result<(), OpError>;
}

pub type ProcFn = Arc<dyn Fn(&mut dyn StoreCtx, &[i64]) -> Result<(), Abort> + Send + Sync>;
pub type FootprintFn =
    Arc<dyn Fn(&FootprintCtx<'_>, &[i64]) -> Result<Vec<(DataItemId, bool)>, FootprintUnknown> + Send + Sync>;
pub type PartitionFn = Arc<dyn Fn(&[i64]) -> PartitionSpan + Send + Sync>;
pub type RootKeyFn = Arc<dyn Fn(&[i64]) -> i64 + Send + Sync>;

/// Which partition a transaction instance touches.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PartitionSpan {
    Single(u32),
    Cross,
}

/// Raised by a footprint function when the affected items cannot be resolved
/// from the parameters; conflict analysis then coarsens to table granularity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootprintUnknown {
    /// Tables the transaction may touch; `None` means "could be anything".
    pub tables: Option<Vec<u32>>,
}

/// Read-only view used by footprint functions to resolve keys to rows at
/// bulk-generation time.
pub struct FootprintCtx<'a> {
    store: &'a ColumnStore,
}

impl<'a> FootprintCtx<'a> {
    pub fn new(store: &'a ColumnStore) -> Self {
        FootprintCtx { store }
    }

    /// Liveness-aware key resolution.
    pub fn lookup_pk(&self, table: u32, key: i64) -> Option<u64> {
        self.store.lookup_pk(table, key).ok().flatten()
    }

    /// Raw index entry, dead rows included; a lookup on a dead row still
    /// performs (and must declare) the pk-cell read.
    pub fn pk_row_any(&self, table: u32, key: i64) -> Option<u64> {
        self.store.table(table).ok().and_then(|t| t.pk_row(key))
    }

    pub fn columns(&self, table: u32) -> usize {
        self.store.table(table).map(|t| t.columns.len()).unwrap_or(0)
    }

    pub fn row_count(&self, table: u32) -> u64 {
        self.store.table(table).map(|t| t.row_count()).unwrap_or(0)
    }
}

/// A registered transaction type (stored procedure plus metadata).
#[derive(Clone)]
pub struct TxnType {
    pub type_id: u16,
    pub name: String,
    /// Reads and abort decision first, then writes that cannot abort.
    /// Two-phase types never need undo records.
    pub two_phase: bool,
    pub body: ProcFn,
    pub footprint: FootprintFn,
    pub partition: PartitionFn,
    /// Present when the type locks by the primary key of a tree-schema root
    /// relation instead of per item.
    pub root_key: Option<RootKeyFn>,
}

/// Immutable-after-setup dispatch table for transaction types.
#[derive(Default)]
pub struct Registry {
    types: HashMap<u16, TxnType>,
    /// table id -> root table id, for primary-key lock elimination.
    root_locked: HashMap<u32, u32>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_type(&mut self, spec: TxnType) -> Result<u16, RegistryError> {
        let id = spec.type_id;
        if self.types.contains_key(&id) {
            return Err(RegistryError::DuplicateType(id));
        }
        self.types.insert(id, spec);
        Ok(id)
    }

    pub fn get(&self, type_id: u16) -> Result<&TxnType, RegistryError> {
        self.types
            .get(&type_id)
            .ok_or(RegistryError::UnknownType(type_id))
    }

    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    pub fn type_ids(&self) -> Vec<u16> {
        let mut v: Vec<u16> = self.types.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Declares that `covered` tables form a tree rooted at `root_table`;
    /// the counter-lock strategy then locks on the root primary key.
    pub fn declare_root_lock(&mut self, root_table: u32, covered: &[u32]) {
        for &t in covered {
            self.root_locked.insert(t, root_table);
        }
    }

    pub fn root_table_for(&self, table: u32) -> Option<u32> {
        self.root_locked.get(&table).copied()
    }

    /// Undo logging is needed whenever some registered type may write before
    /// its abort decision. With only two-phase types no transaction writes
    /// before it could abort, so the undo log is skipped entirely.
    pub fn undo_required(&self) -> bool {
        self.types.values().any(|t| !t.two_phase)
    }
}

/// Declared conflict footprint of one signature.
pub fn declared_ops_of(
    registry: &Registry,
    store: &ColumnStore,
    sig: &TxnSignature,
) -> Result<Vec<BasicOp>, FootprintUnknown> {
    let ty = registry
        .get(sig.type_id)
        .map_err(|_| FootprintUnknown { tables: None })?;
    let ctx = FootprintCtx::new(store);
    let ops = (ty.footprint)(&ctx, &sig.params)?;
    Ok(ops
        .into_iter()
        .map(|(item, write)| BasicOp {
            item,
            txn: sig.id,
            write,
        })
        .collect())
}

/// Footprints for a whole pool with table-level coarsening applied: if any
/// transaction's footprint is unknown, every op on the affected tables (by
/// any transaction) collapses to a single whole-table write item.
pub struct PoolFootprints {
    /// Per transaction, aligned with the input slice.
    pub ops: Vec<Vec<BasicOp>>,
    pub any_unknown: bool,
}

pub fn collect_footprints(
    registry: &Registry,
    store: &ColumnStore,
    txns: &[TxnSignature],
) -> PoolFootprints {
    let raw: Vec<Result<Vec<BasicOp>, FootprintUnknown>> = txns
        .iter()
        .map(|sig| declared_ops_of(registry, store, sig))
        .collect();
    let mut coarse_tables: HashSet<u32> = HashSet::new();
    let mut coarsen_all = false;
    for r in &raw {
        if let Err(unknown) = r {
            match &unknown.tables {
                Some(ts) => coarse_tables.extend(ts.iter().copied()),
                None => coarsen_all = true,
            }
        }
    }
    let any_unknown = coarsen_all || !coarse_tables.is_empty();
    let all_tables: Vec<u32> = (0..store.table_count() as u32).collect();
    let ops = raw
        .iter()
        .zip(txns)
        .map(|(r, sig)| match r {
            Ok(ops) => {
                let mut out: Vec<BasicOp> = Vec::with_capacity(ops.len());
                for op in ops {
                    if coarsen_all || coarse_tables.contains(&op.item.table) {
                        out.push(BasicOp {
                            item: DataItemId::coarse(op.item.table),
                            txn: op.txn,
                            write: true,
                        });
                    } else {
                        out.push(*op);
                    }
                }
                out
            }
            Err(unknown) => {
                let tables = if coarsen_all {
                    &all_tables
                } else {
                    unknown.tables.as_ref().unwrap()
                };
                tables
                    .iter()
                    .map(|&t| BasicOp {
                        item: DataItemId::coarse(t),
                        txn: sig.id,
                        write: true,
                    })
                    .collect()
            }
        })
        .collect();
    PoolFootprints { ops, any_unknown }
}

// ---------------------------------------------------------------------------
// Access tracing

/// One recorded data access (test mode).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TraceEvent {
    pub item: DataItemId,
    pub txn: u64,
    pub write: bool,
    pub lane: u32,
    /// Global ticket drawn inside the access's synchronization window;
    /// per-item order of conflicting accesses is faithful.
    pub seq: u64,
}

/// Shared trace collector for one execution.
#[derive(Default)]
pub struct TraceShared {
    events: Mutex<Vec<TraceEvent>>,
    seq: AtomicU64,
}

impl TraceShared {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, item: DataItemId, txn: u64, write: bool, lane: u32) {
        let seq = self.seq.fetch_add(1, Ordering::Relaxed);
        self.events.lock().unwrap().push(TraceEvent {
            item,
            txn,
            write,
            lane,
            seq,
        });
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        let mut v = self.events.lock().unwrap().clone();
        v.sort_by_key(|e| e.seq);
        v
    }
}

/// Renders the trace in the documented line format:
/// `item <table:col:row> txn <id> <r|w> lane <lane> seq <n>`.
pub fn dump_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&format!(
            "item {} txn {} {} lane {} seq {}\n",
            e.item,
            e.txn,
            if e.write { "w" } else { "r" },
            e.lane,
            e.seq
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Direct store context (no concurrency control)

/// Store context with no synchronization: used by the sequential executor and
/// by the lock-free strategies whose schedules already guarantee disjointness.
pub struct DirectCtx<'a> {
    pub store: &'a ColumnStore,
    pub buf: &'a Mutex<InsertBuffer>,
    pub txn: u64,
    pub lane: u32,
    pub log_undo: bool,
    pub undo: Vec<UndoRecord>,
    /// In-place mutations performed (undo-policy independent).
    pub writes: u64,
    pub trace: Option<&'a TraceShared>,
}

impl<'a> DirectCtx<'a> {
    pub fn new(
        store: &'a ColumnStore,
        buf: &'a Mutex<InsertBuffer>,
        txn: u64,
        lane: u32,
        log_undo: bool,
        trace: Option<&'a TraceShared>,
    ) -> Self {
        DirectCtx {
            store,
            buf,
            txn,
            lane,
            log_undo,
            undo: Vec::new(),
            writes: 0,
            trace,
        }
    }

    fn tr(&self, item: DataItemId, write: bool) {
        if let Some(t) = self.trace {
            t.record(item, self.txn, write, self.lane);
        }
    }
}

impl StoreCtx for DirectCtx<'_> {
    fn read_int(&mut self, item: DataItemId) -> Result<i64, OpError> {
        let v = self.store.read_int(item)?;
        self.tr(item, false);
        Ok(v)
    }

    fn write_int(&mut self, item: DataItemId, v: i64) -> Result<(), OpError> {
        if self.log_undo {
            let prior = self.store.read_int(item)?;
            self.undo.push(UndoRecord::Cell {
                item,
                prior: CellValue::Int(prior),
            });
        }
        self.store.write_int(item, v)?;
        self.writes += 1;
        self.tr(item, true);
        Ok(())
    }

    fn read_bytes(&mut self, item: DataItemId) -> Result<Vec<u8>, OpError> {
        let v = self.store.read_bytes(item)?;
        self.tr(item, false);
        Ok(v)
    }

    fn write_bytes(&mut self, item: DataItemId, v: &[u8]) -> Result<(), OpError> {
        if self.log_undo {
            let prior = self.store.read_bytes(item)?;
            self.undo.push(UndoRecord::Cell {
                item,
                prior: CellValue::Bytes(prior),
            });
        }
        self.store.write_bytes(item, v)?;
        self.writes += 1;
        self.tr(item, true);
        Ok(())
    }

    fn lookup_pk(&mut self, table: u32, key: i64) -> Result<Option<u64>, OpError> {
        let t = self.store.table(table).map_err(OpError::Storage)?;
        if let Some(row) = t.pk_row(key) {
            self.tr(DataItemId::new(table, t.pk_column as u32, row), false);
            let live = self.store.is_live(table, row).map_err(OpError::Storage)?;
            return Ok(live.then_some(row));
        }
        Ok(None)
    }

    fn insert_row(&mut self, table: u32, values: Vec<CellValue>) -> Result<(), OpError> {
        self.buf
            .lock()
            .unwrap()
            .push(self.txn, table, values)
            .map_err(OpError::Storage)
    }

    fn delete_row(&mut self, table: u32, row: u64) -> Result<(), OpError> {
        let was_live = self.store.is_live(table, row)?;
        if self.log_undo {
            self.undo.push(UndoRecord::Liveness {
                table,
                row,
                prior: was_live,
            });
        }
        self.store.set_live(table, row, false)?;
        self.writes += 1;
        // A delete counts as a write to every field of the row.
        let ncols = self.store.table(table)?.columns.len();
        for col in 0..ncols {
            self.tr(DataItemId::new(table, col as u32, row), true);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Transaction pool

/// Ordered queue of submitted signatures awaiting bulk generation. One
/// producer may submit concurrently with one consumer draining; the logical
/// watermark tells the consumer how far submission has progressed.
pub struct TxnPool {
    inner: Mutex<PoolInner>,
    cv: Condvar,
}

struct PoolInner {
    queue: VecDeque<TxnSignature>,
    next_id: u64,
    watermark_us: u64,
    closed: bool,
}

impl Default for TxnPool {
    fn default() -> Self {
        Self::new()
    }
}

impl TxnPool {
    pub fn new() -> Self {
        TxnPool {
            inner: Mutex::new(PoolInner {
                queue: VecDeque::new(),
                next_id: 0,
                watermark_us: 0,
                closed: false,
            }),
            cv: Condvar::new(),
        }
    }

    pub fn submit(
        &self,
        registry: &Registry,
        type_id: u16,
        params: Vec<i64>,
        arrival_us: u64,
    ) -> Result<TxnSignature, RegistryError> {
        registry.get(type_id)?;
        let mut inner = self.inner.lock().unwrap();
        let sig = TxnSignature {
            id: inner.next_id,
            type_id,
            params,
            arrival_us,
        };
        inner.next_id += 1;
        inner.queue.push_back(sig.clone());
        Ok(sig)
    }

    /// Producer-side: submission has logically progressed through `t`.
    pub fn advance_watermark(&self, t_us: u64) {
        let mut inner = self.inner.lock().unwrap();
        inner.watermark_us = inner.watermark_us.max(t_us);
        self.cv.notify_all();
    }

    pub fn close(&self) {
        let mut inner = self.inner.lock().unwrap();
        inner.closed = true;
        self.cv.notify_all();
    }

    /// Consumer-side: waits until submissions through `upto_us` are present,
    /// then drains up to `max` signatures whose arrival is within the window.
    pub fn take_arrived(&self, upto_us: u64, max: usize) -> Vec<TxnSignature> {
        let mut inner = self.inner.lock().unwrap();
        while inner.watermark_us < upto_us && !inner.closed {
            inner = self.cv.wait(inner).unwrap();
        }
        let mut out = Vec::new();
        while out.len() < max {
            match inner.queue.front() {
                Some(sig) if sig.arrival_us <= upto_us => {
                    out.push(inner.queue.pop_front().unwrap());
                }
                _ => break,
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// ---------------------------------------------------------------------------
// Sequential reference executor

/// Executes the transactions one by one in id order against the store.
/// This is the reference semantics every bulk strategy must reproduce:
/// aborted transactions leave no writes (their effects are undone inline).
///
/// `forced_aborts` short-circuits the listed transactions into no-op aborts;
/// recovery equivalence checks use it to replay a strategy's rollback set.
pub fn execute_sequential(
    registry: &Registry,
    store: &ColumnStore,
    buf: &Mutex<InsertBuffer>,
    txns: &[TxnSignature],
    forced_aborts: &HashSet<u64>,
    trace: Option<&TraceShared>,
) -> Vec<(u64, TxnStatus)> {
    debug_assert!(txns.windows(2).all(|w| w[0].id < w[1].id));
    let mut statuses = Vec::with_capacity(txns.len());
    for sig in txns {
        if forced_aborts.contains(&sig.id) {
            statuses.push((sig.id, TxnStatus::Aborted(AbortReason::Forced)));
            continue;
        }
        let ty = match registry.get(sig.type_id) {
            Ok(t) => t,
            Err(e) => {
                statuses.push((
                    sig.id,
                    TxnStatus::Aborted(AbortReason::Runtime(e.to_string())),
                ));
                continue;
            }
        };
        let mut ctx = DirectCtx::new(store, buf, sig.id, 0, true, trace);
        match (ty.body)(&mut ctx, &sig.params) {
            Ok(()) => statuses.push((sig.id, TxnStatus::Committed)),
            Err(abort) => {
                crate::storage::apply_undo(store, &ctx.undo)
                    .expect("undo of just-written cells cannot fail");
                statuses.push((sig.id, TxnStatus::Aborted(abort.reason)));
            }
        }
    }
    statuses
}

// ---------------------------------------------------------------------------
// Workload file format
//
//   # spec key=value ...      (optional header comments)
//   [id,]type_id,p1,p2,...    one transaction per line
//
// When the id column is omitted ids are assigned in line order.

/// Parses a workload file body into (type_id, params) pairs plus explicit ids.
pub fn parse_workload_lines(text: &str) -> Result<Vec<(Option<u64>, u16, Vec<i64>)>, String> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        // Lines are `id: type, params...`; the id prefix may be omitted, in
        // which case ids are assigned in line order.
        let (id, rest) = match fields[0].split_once(':') {
            Some((id, first_after)) => {
                let id = id
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| format!("line {}: bad id: {e}", ln + 1))?;
                let mut v = vec![first_after.trim()];
                v.extend(&fields[1..]);
                (Some(id), v)
            }
            None => (None, fields.clone()),
        };
        let type_id = rest[0]
            .parse::<u16>()
            .map_err(|e| format!("line {}: bad type id: {e}", ln + 1))?;
        let params = rest[1..]
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<i64>().map_err(|e| format!("line {}: {e}", ln + 1)))
            .collect::<Result<Vec<i64>, String>>()?;
        out.push((id, type_id, params));
    }
    Ok(out)
}

pub fn write_workload_lines(txns: &[TxnSignature]) -> String {
    let mut out = String::new();
    for t in txns {
        let params: Vec<String> = t.params.iter().map(|p| p.to_string()).collect();
        if params.is_empty() {
            out.push_str(&format!("{}: {}\n", t.id, t.type_id));
        } else {
            out.push_str(&format!("{}: {}, {}\n", t.id, t.type_id, params.join(", ")));
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::storage::{ColumnDecl, ColumnKind};
    use std::collections::HashSet;

    pub(crate) fn int_table_store(rows: u64) -> ColumnStore {
        let mut s = ColumnStore::new();
        let t = s
            .add_table(
                "t",
                vec![
                    ColumnDecl {
                        name: "id".into(),
                        kind: ColumnKind::Fixed,
                    },
                    ColumnDecl {
                        name: "val".into(),
                        kind: ColumnKind::Fixed,
                    },
                ],
                0,
                Some(0),
            )
            .unwrap();
        for i in 0..rows {
            s.append_row(t, &[CellValue::Int(i as i64), CellValue::Int(0)])
                .unwrap();
        }
        s
    }

    /// Type 0: add params[1] to row params[0]'s val. Aborts with code
    /// params[2] before writing when params[2] > 0 (two-phase style).
    pub(crate) fn increment_type(type_id: u16) -> TxnType {
        TxnType {
            type_id,
            name: format!("incr{type_id}"),
            two_phase: true,
            body: Arc::new(|ctx, params| {
                let row = params[0] as u64;
                let item = DataItemId::new(0, 1, row);
                let v = ctx.read_int(item)?;
                if params.len() > 2 && params[2] > 0 {
                    return Err(Abort::code(params[2]));
                }
                ctx.write_int(item, v + params[1])?;
                Ok(())
            }),
            footprint: Arc::new(|_ctx, params| {
                Ok(vec![(DataItemId::new(0, 1, params[0] as u64), true)])
            }),
            partition: Arc::new(|params| PartitionSpan::Single(params[0] as u32)),
            root_key: None,
        }
    }

    #[test]
    fn register_and_dispatch() {
        let mut reg = Registry::new();
        assert_eq!(reg.register_type(increment_type(0)).unwrap(), 0);
        assert_eq!(reg.type_count(), 1);
        for id in 1..8u16 {
            reg.register_type(increment_type(id)).unwrap();
        }
        assert_eq!(reg.type_count(), 8);
        for id in 0..8u16 {
            assert!(reg.get(id).is_ok());
        }
        assert_eq!(
            reg.register_type(increment_type(3)).unwrap_err(),
            RegistryError::DuplicateType(3)
        );
    }

    #[test]
    fn submit_assigns_increasing_ids() {
        let mut reg = Registry::new();
        reg.register_type(increment_type(0)).unwrap();
        let pool = TxnPool::new();
        let a = pool.submit(&reg, 0, vec![0, 1], 0).unwrap();
        let b = pool.submit(&reg, 0, vec![1, 1], 0).unwrap();
        assert_eq!(a.id, 0);
        assert_eq!(b.id, 1);
        assert_eq!(
            pool.submit(&reg, 99, vec![], 0).unwrap_err(),
            RegistryError::UnknownType(99)
        );
    }

    #[test]
    fn pool_take_respects_arrival_window() {
        let mut reg = Registry::new();
        reg.register_type(increment_type(0)).unwrap();
        let pool = TxnPool::new();
        pool.submit(&reg, 0, vec![0, 1], 10).unwrap();
        pool.submit(&reg, 0, vec![1, 1], 20).unwrap();
        pool.submit(&reg, 0, vec![2, 1], 30).unwrap();
        pool.advance_watermark(100);
        let got = pool.take_arrived(25, usize::MAX);
        assert_eq!(got.len(), 2);
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn declared_footprint_matches_branch_update() {
        let mut reg = Registry::new();
        reg.register_type(increment_type(0)).unwrap();
        let store = int_table_store(8);
        let sig = TxnSignature {
            id: 0,
            type_id: 0,
            params: vec![4, 1],
            arrival_us: 0,
        };
        let ops = declared_ops_of(&reg, &store, &sig).unwrap();
        assert_eq!(
            ops,
            vec![BasicOp {
                item: DataItemId::new(0, 1, 4),
                txn: 0,
                write: true
            }]
        );
    }

    #[test]
    fn coarsening_rewrites_table_ops() {
        let mut reg = Registry::new();
        reg.register_type(increment_type(0)).unwrap();
        let mut unknown = increment_type(1);
        unknown.footprint = Arc::new(|_, _| {
            Err(FootprintUnknown {
                tables: Some(vec![0]),
            })
        });
        reg.register_type(unknown).unwrap();
        let store = int_table_store(8);
        let txns = vec![
            TxnSignature {
                id: 0,
                type_id: 0,
                params: vec![1, 1],
                arrival_us: 0,
            },
            TxnSignature {
                id: 1,
                type_id: 1,
                params: vec![2, 1],
                arrival_us: 0,
            },
        ];
        let fp = collect_footprints(&reg, &store, &txns);
        assert!(fp.any_unknown);
        assert!(fp.ops[0][0].item.is_coarse());
        assert!(fp.ops[1][0].item.is_coarse());
        assert!(fp.ops[0][0].write && fp.ops[1][0].write);
    }

    #[test]
    fn sequential_empty_is_noop() {
        let mut reg = Registry::new();
        reg.register_type(increment_type(0)).unwrap();
        let store = int_table_store(4);
        let before = crate::storage::snapshot(&store);
        let buf = Mutex::new(InsertBuffer::default());
        let st = execute_sequential(&reg, &store, &buf, &[], &HashSet::new(), None);
        assert!(st.is_empty());
        assert_eq!(
            crate::storage::compare_snapshots(&before, &crate::storage::snapshot(&store)),
            crate::storage::SnapshotCompare::Equal
        );
    }

    #[test]
    fn sequential_increment_oracle() {
        use rand::{Rng, SeedableRng};
        let mut reg = Registry::new();
        reg.register_type(increment_type(0)).unwrap();
        let rows = 16u64;
        let store = int_table_store(rows);
        let buf = Mutex::new(InsertBuffer::default());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut expected = vec![0i64; rows as usize];
        let mut txns = Vec::new();
        for id in 0..10_000u64 {
            let row = rng.gen_range(0..rows);
            expected[row as usize] += 1;
            txns.push(TxnSignature {
                id,
                type_id: 0,
                params: vec![row as i64, 1],
                arrival_us: 0,
            });
        }
        let st = execute_sequential(&reg, &store, &buf, &txns, &HashSet::new(), None);
        assert!(st.iter().all(|(_, s)| s.committed()));
        for row in 0..rows {
            assert_eq!(
                store.read_int(DataItemId::new(0, 1, row)).unwrap(),
                expected[row as usize]
            );
        }
    }

    #[test]
    fn aborted_txns_leave_no_writes() {
        let mut reg = Registry::new();
        // Non-two-phase variant: writes first, then aborts on request.
        let mut ty = increment_type(0);
        ty.two_phase = false;
        ty.body = Arc::new(|ctx, params| {
            let item = DataItemId::new(0, 1, params[0] as u64);
            let v = ctx.read_int(item)?;
            ctx.write_int(item, v + params[1])?;
            if params.len() > 2 && params[2] > 0 {
                return Err(Abort::code(params[2]));
            }
            Ok(())
        });
        reg.register_type(ty).unwrap();
        let store = int_table_store(4);
        let buf = Mutex::new(InsertBuffer::default());
        let txns = vec![
            TxnSignature {
                id: 0,
                type_id: 0,
                params: vec![1, 5, 0],
                arrival_us: 0,
            },
            TxnSignature {
                id: 1,
                type_id: 0,
                params: vec![1, 100, 9],
                arrival_us: 0,
            },
        ];
        let st = execute_sequential(&reg, &store, &buf, &txns, &HashSet::new(), None);
        assert_eq!(st[0].1, TxnStatus::Committed);
        assert_eq!(st[1].1, TxnStatus::Aborted(AbortReason::Code(9)));
        assert_eq!(store.read_int(DataItemId::new(0, 1, 1)).unwrap(), 5);
    }

    #[test]
    fn sequential_is_deterministic() {
        let mut reg = Registry::new();
        reg.register_type(increment_type(0)).unwrap();
        let mk = || {
            let store = int_table_store(8);
            let buf = Mutex::new(InsertBuffer::default());
            let txns: Vec<TxnSignature> = (0..100)
                .map(|id| TxnSignature {
                    id,
                    type_id: 0,
                    params: vec![(id % 8) as i64, id as i64],
                    arrival_us: 0,
                })
                .collect();
            execute_sequential(&reg, &store, &buf, &txns, &HashSet::new(), None);
            crate::storage::snapshot(&store)
        };
        assert_eq!(
            crate::storage::compare_snapshots(&mk(), &mk()),
            crate::storage::SnapshotCompare::Equal
        );
    }

    #[test]
    fn workload_lines_roundtrip() {
        let txns = vec![
            TxnSignature {
                id: 0,
                type_id: 3,
                params: vec![1, -2, 3],
                arrival_us: 0,
            },
            TxnSignature {
                id: 1,
                type_id: 0,
                params: vec![],
                arrival_us: 0,
            },
        ];
        let text = write_workload_lines(&txns);
        let parsed = parse_workload_lines(&text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0], (Some(0), 3, vec![1, -2, 3]));
        assert_eq!(parsed[1], (Some(1), 0, vec![]));
        // ids may be omitted
        let parsed = parse_workload_lines("2, 7, 8\n").unwrap();
        assert_eq!(parsed[0], (None, 2, vec![7, 8]));
    }
}
