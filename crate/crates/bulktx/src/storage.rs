//! In-memory column store with field-granularity addressing.
//!
//! Fixed-length columns are flat arrays of 64-bit integers; variable-length
//! columns store a packed (offset, length) slot per row pointing into a
//! per-table byte pool. Rows are appended only through the insert buffer at
//! bulk boundaries; deletes flip a per-row liveness flag. Cells are atomics so
//! worker lanes may touch disjoint items concurrently while the executor's
//! strategy orders conflicting access.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::sync::Mutex;
use thiserror::Error;

/// Reserved column index marking a whole-table conflict unit (used when a
/// transaction's footprint cannot be resolved to individual items).
pub const COARSE_COLUMN: u32 = 0xFF;
/// Reserved row index paired with [`COARSE_COLUMN`].
pub const COARSE_ROW: u64 = (1 << 48) - 1;

const MAX_TABLES: u32 = 256;
const MAX_COLUMNS: u32 = 0xFF; // 0xFF reserved for COARSE_COLUMN
const MAX_ROWS: u64 = 1 << 48;

/// Address of one data field: (table, column, row).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DataItemId {
    pub table: u32,
    pub column: u32,
    pub row: u64,
}

impl DataItemId {
    pub fn new(table: u32, column: u32, row: u64) -> Self {
        debug_assert!(table < MAX_TABLES && column <= MAX_COLUMNS && row < MAX_ROWS);
        DataItemId { table, column, row }
    }

    /// Whole-table conflict unit for footprint-unknown coarsening.
    pub fn coarse(table: u32) -> Self {
        DataItemId {
            table,
            column: COARSE_COLUMN,
            row: COARSE_ROW,
        }
    }

    pub fn is_coarse(&self) -> bool {
        self.column == COARSE_COLUMN && self.row == COARSE_ROW
    }

    /// Packs the triple into one integer; the packing preserves the
    /// (table, column, row) lexicographic order.
    pub fn encode(self) -> u64 {
        ((self.table as u64) << 56) | ((self.column as u64) << 48) | self.row
    }

    pub fn decode(v: u64) -> Self {
        DataItemId {
            table: (v >> 56) as u32,
            column: ((v >> 48) & 0xFF) as u32,
            row: v & (MAX_ROWS - 1),
        }
    }
}

impl fmt::Debug for DataItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "item({},{},{})", self.table, self.column, self.row)
    }
}

impl fmt::Display for DataItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.table, self.column, self.row)
    }
}

/// A single cell value.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CellValue {
    Int(i64),
    Bytes(Vec<u8>),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ColumnKind {
    Fixed,
    Var,
}

#[derive(Clone, Debug)]
pub struct ColumnDecl {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("unknown table {0}")]
    UnknownTable(u32),
    #[error("unknown table name {0:?}")]
    UnknownTableName(String),
    #[error("column {column} out of bounds for table {table}")]
    BadColumn { table: u32, column: u32 },
    #[error("row {row} out of bounds for table {table} (row_count {count})")]
    BadRow { table: u32, row: u64, count: u64 },
    #[error("type mismatch at {0}: fixed/var access confusion")]
    KindMismatch(DataItemId),
    #[error("duplicate primary key {key} in table {table}")]
    DuplicateKey { table: u32, key: i64 },
    #[error("row width {got} does not match table {table} width {want}")]
    BadRowWidth { table: u32, got: usize, want: usize },
    #[error("insert buffer full (capacity {0})")]
    BufferFull(usize),
    #[error("schema parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("table limit exceeded")]
    TooManyTables,
    #[error("column limit exceeded")]
    TooManyColumns,
}

/// Packed offset/length for a variable-length cell.
fn pack_span(offset: u32, len: u32) -> u64 {
    ((offset as u64) << 32) | len as u64
}

fn unpack_span(v: u64) -> (u32, u32) {
    ((v >> 32) as u32, (v & 0xFFFF_FFFF) as u32)
}

enum ColumnData {
    Fixed(Vec<AtomicI64>),
    // Packed (offset, len) per row into the table byte pool.
    Var(Vec<AtomicU64>),
}

pub struct Table {
    pub name: String,
    pub columns: Vec<ColumnDecl>,
    data: Vec<ColumnData>,
    pool: Mutex<Vec<u8>>,
    live: Vec<AtomicBool>,
    row_count: u64,
    pub pk_column: usize,
    pub partition_column: Option<usize>,
    pk_index: HashMap<i64, u64>,
}

impl Table {
    /// Raw primary-key index lookup; ignores the liveness flag.
    pub fn pk_row(&self, key: i64) -> Option<u64> {
        self.pk_index.get(&key).copied()
    }

    fn new(
        name: String,
        columns: Vec<ColumnDecl>,
        pk_column: usize,
        partition_column: Option<usize>,
    ) -> Self {
        let data = columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Fixed => ColumnData::Fixed(Vec::new()),
                ColumnKind::Var => ColumnData::Var(Vec::new()),
            })
            .collect();
        Table {
            name,
            columns,
            data,
            pool: Mutex::new(Vec::new()),
            live: Vec::new(),
            row_count: 0,
            pk_column,
            partition_column,
            pk_index: HashMap::new(),
        }
    }

    pub fn row_count(&self) -> u64 {
        self.row_count
    }

    fn push_row(&mut self, values: &[CellValue]) -> Result<(), StorageError> {
        if values.len() != self.columns.len() {
            return Err(StorageError::BadRowWidth {
                table: 0,
                got: values.len(),
                want: self.columns.len(),
            });
        }
        for (col, v) in values.iter().enumerate() {
            match (&mut self.data[col], v) {
                (ColumnData::Fixed(store), CellValue::Int(x)) => store.push(AtomicI64::new(*x)),
                (ColumnData::Var(store), CellValue::Bytes(b)) => {
                    let mut pool = self.pool.lock().unwrap();
                    let off = pool.len() as u32;
                    pool.extend_from_slice(b);
                    store.push(AtomicU64::new(pack_span(off, b.len() as u32)));
                }
                _ => {
                    return Err(StorageError::KindMismatch(DataItemId::new(
                        0,
                        col as u32,
                        self.row_count,
                    )))
                }
            }
        }
        self.live.push(AtomicBool::new(true));
        self.row_count += 1;
        Ok(())
    }
}

/// The in-memory database: a set of column-store tables plus addressing.
pub struct ColumnStore {
    tables: Vec<Table>,
    by_name: HashMap<String, u32>,
}

impl Default for ColumnStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ColumnStore {
    pub fn new() -> Self {
        ColumnStore {
            tables: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add_table(
        &mut self,
        name: &str,
        columns: Vec<ColumnDecl>,
        pk_column: usize,
        partition_column: Option<usize>,
    ) -> Result<u32, StorageError> {
        if self.tables.len() as u32 >= MAX_TABLES {
            return Err(StorageError::TooManyTables);
        }
        if columns.len() as u32 >= MAX_COLUMNS {
            return Err(StorageError::TooManyColumns);
        }
        let id = self.tables.len() as u32;
        self.by_name.insert(name.to_string(), id);
        self.tables
            .push(Table::new(name.to_string(), columns, pk_column, partition_column));
        Ok(id)
    }

    pub fn table(&self, id: u32) -> Result<&Table, StorageError> {
        self.tables
            .get(id as usize)
            .ok_or(StorageError::UnknownTable(id))
    }

    pub fn table_id(&self, name: &str) -> Result<u32, StorageError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| StorageError::UnknownTableName(name.to_string()))
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    fn check(&self, item: DataItemId) -> Result<&Table, StorageError> {
        let t = self.table(item.table)?;
        if item.column as usize >= t.columns.len() {
            return Err(StorageError::BadColumn {
                table: item.table,
                column: item.column,
            });
        }
        if item.row >= t.row_count {
            return Err(StorageError::BadRow {
                table: item.table,
                row: item.row,
                count: t.row_count,
            });
        }
        Ok(t)
    }

    /// Reads a fixed-length cell.
    pub fn read_int(&self, item: DataItemId) -> Result<i64, StorageError> {
        let t = self.check(item)?;
        match &t.data[item.column as usize] {
            ColumnData::Fixed(col) => Ok(col[item.row as usize].load(Ordering::Relaxed)),
            ColumnData::Var(_) => Err(StorageError::KindMismatch(item)),
        }
    }

    /// Writes a fixed-length cell.
    pub fn write_int(&self, item: DataItemId, v: i64) -> Result<(), StorageError> {
        let t = self.check(item)?;
        match &t.data[item.column as usize] {
            ColumnData::Fixed(col) => {
                col[item.row as usize].store(v, Ordering::Relaxed);
                Ok(())
            }
            ColumnData::Var(_) => Err(StorageError::KindMismatch(item)),
        }
    }

    /// Reads a variable-length cell (copies the bytes out).
    pub fn read_bytes(&self, item: DataItemId) -> Result<Vec<u8>, StorageError> {
        let t = self.check(item)?;
        match &t.data[item.column as usize] {
            ColumnData::Var(col) => {
                // The pool lock also covers the span load so a concurrent
                // relocation of another row cannot move the pool under us.
                let pool = t.pool.lock().unwrap();
                let (off, len) = unpack_span(col[item.row as usize].load(Ordering::Relaxed));
                Ok(pool[off as usize..(off + len) as usize].to_vec())
            }
            ColumnData::Fixed(_) => Err(StorageError::KindMismatch(item)),
        }
    }

    /// Writes a variable-length cell. The new value is appended to the byte
    /// pool and the row's span repointed; the old region becomes dead space.
    pub fn write_bytes(&self, item: DataItemId, v: &[u8]) -> Result<(), StorageError> {
        let t = self.check(item)?;
        match &t.data[item.column as usize] {
            ColumnData::Var(col) => {
                let mut pool = t.pool.lock().unwrap();
                let off = pool.len() as u32;
                pool.extend_from_slice(v);
                col[item.row as usize].store(pack_span(off, v.len() as u32), Ordering::Relaxed);
                Ok(())
            }
            ColumnData::Fixed(_) => Err(StorageError::KindMismatch(item)),
        }
    }

    pub fn read_cell(&self, item: DataItemId) -> Result<CellValue, StorageError> {
        let t = self.check(item)?;
        match &t.data[item.column as usize] {
            ColumnData::Fixed(_) => self.read_int(item).map(CellValue::Int),
            ColumnData::Var(_) => self.read_bytes(item).map(CellValue::Bytes),
        }
    }

    pub fn write_cell(&self, item: DataItemId, v: &CellValue) -> Result<(), StorageError> {
        match v {
            CellValue::Int(x) => self.write_int(item, *x),
            CellValue::Bytes(b) => self.write_bytes(item, b),
        }
    }

    /// Primary-key lookup honoring the liveness flag.
    pub fn lookup_pk(&self, table: u32, key: i64) -> Result<Option<u64>, StorageError> {
        let t = self.table(table)?;
        Ok(t.pk_index
            .get(&key)
            .copied()
            .filter(|&row| t.live[row as usize].load(Ordering::Relaxed)))
    }

    pub fn is_live(&self, table: u32, row: u64) -> Result<bool, StorageError> {
        let t = self.table(table)?;
        if row >= t.row_count {
            return Err(StorageError::BadRow {
                table,
                row,
                count: t.row_count,
            });
        }
        Ok(t.live[row as usize].load(Ordering::Relaxed))
    }

    pub fn set_live(&self, table: u32, row: u64, live: bool) -> Result<(), StorageError> {
        let t = self.table(table)?;
        if row >= t.row_count {
            return Err(StorageError::BadRow {
                table,
                row,
                count: t.row_count,
            });
        }
        t.live[row as usize].store(live, Ordering::Relaxed);
        Ok(())
    }

    /// Appends a row directly (load path; not visible to the insert buffer
    /// protocol). Fails on duplicate primary key.
    pub fn append_row(&mut self, table: u32, values: &[CellValue]) -> Result<u64, StorageError> {
        let t = self
            .tables
            .get_mut(table as usize)
            .ok_or(StorageError::UnknownTable(table))?;
        let key = match values.get(t.pk_column) {
            Some(CellValue::Int(k)) => *k,
            _ => {
                return Err(StorageError::BadRowWidth {
                    table,
                    got: values.len(),
                    want: t.columns.len(),
                })
            }
        };
        if let Some(&row) = t.pk_index.get(&key) {
            if t.live[row as usize].load(Ordering::Relaxed) {
                return Err(StorageError::DuplicateKey { table, key });
            }
        }
        let row = t.row_count;
        t.push_row(values).map_err(|e| match e {
            StorageError::BadRowWidth { got, want, .. } => {
                StorageError::BadRowWidth { table, got, want }
            }
            other => other,
        })?;
        t.pk_index.insert(key, row);
        Ok(row)
    }

    /// Deep copy of all table data; used to give the sequential oracle its
    /// own store.
    pub fn clone_data(&self) -> ColumnStore {
        let mut out = ColumnStore::new();
        for t in &self.tables {
            let id = out
                .add_table(&t.name, t.columns.clone(), t.pk_column, t.partition_column)
                .unwrap();
            let nt = &mut out.tables[id as usize];
            let pool = t.pool.lock().unwrap();
            for col in 0..t.columns.len() {
                match (&t.data[col], &mut nt.data[col]) {
                    (ColumnData::Fixed(src), ColumnData::Fixed(dst)) => {
                        dst.extend(src.iter().map(|a| AtomicI64::new(a.load(Ordering::Relaxed))));
                    }
                    (ColumnData::Var(src), ColumnData::Var(dst)) => {
                        dst.extend(
                            src.iter()
                                .map(|a| AtomicU64::new(a.load(Ordering::Relaxed))),
                        );
                    }
                    _ => unreachable!(),
                }
            }
            *nt.pool.get_mut().unwrap() = pool.clone();
            nt.live = t
                .live
                .iter()
                .map(|a| AtomicBool::new(a.load(Ordering::Relaxed)))
                .collect();
            nt.row_count = t.row_count;
            nt.pk_index = t.pk_index.clone();
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Insert buffer

/// Pending rows per table, invisible to reads until [`merge_inserts`] runs at
/// a bulk boundary. Each pending row remembers the submitting transaction so
/// rows from aborted transactions can be dropped at merge time.
pub struct InsertBuffer {
    pending: Vec<(u64, u32, Vec<CellValue>)>, // (txn id, table, values)
    capacity: usize,
}

impl Default for InsertBuffer {
    fn default() -> Self {
        Self::new(usize::MAX)
    }
}

impl InsertBuffer {
    pub fn new(capacity: usize) -> Self {
        InsertBuffer {
            pending: Vec::new(),
            capacity,
        }
    }

    pub fn push(&mut self, txn: u64, table: u32, values: Vec<CellValue>) -> Result<(), StorageError> {
        if self.pending.len() >= self.capacity {
            return Err(StorageError::BufferFull(self.capacity));
        }
        self.pending.push((txn, table, values));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

/// Merges pending inserts into the store. Rows whose transaction did not
/// commit (per `committed`) are discarded; the survivors are appended in
/// timestamp order (stable within one transaction), so row placement matches
/// a sequential execution no matter which lane buffered first. All keys are
/// validated before any row is appended, so a duplicate-key error leaves the
/// store unchanged.
pub fn merge_inserts(
    store: &mut ColumnStore,
    buf: &mut InsertBuffer,
    committed: impl Fn(u64) -> bool,
) -> Result<usize, StorageError> {
    let mut rows: Vec<_> = std::mem::take(&mut buf.pending)
        .into_iter()
        .filter(|(txn, _, _)| committed(*txn))
        .collect();
    rows.sort_by_key(|(txn, _, _)| *txn);
    // Validation pass: duplicates against live rows and within the batch.
    let mut seen: HashMap<(u32, i64), ()> = HashMap::new();
    for (_, table, values) in &rows {
        let t = store.table(*table)?;
        let key = match values.get(t.pk_column) {
            Some(CellValue::Int(k)) => *k,
            _ => {
                return Err(StorageError::BadRowWidth {
                    table: *table,
                    got: values.len(),
                    want: t.columns.len(),
                })
            }
        };
        let live_dup = t
            .pk_index
            .get(&key)
            .is_some_and(|&row| t.live[row as usize].load(Ordering::Relaxed));
        if live_dup || seen.insert((*table, key), ()).is_some() {
            return Err(StorageError::DuplicateKey { table: *table, key });
        }
    }
    let mut appended = 0;
    for (_, table, values) in rows {
        store.append_row(table, &values)?;
        appended += 1;
    }
    Ok(appended)
}

// ---------------------------------------------------------------------------
// Snapshots

/// Materialized copy of all live cell values, used as the oracle comparison
/// unit for bulk-execution correctness.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Snapshot {
    tables: Vec<TableSnap>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
struct TableSnap {
    cells: Vec<Vec<CellValue>>, // [column][row]
    live: Vec<bool>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SnapshotCompare {
    Equal,
    Differs(DataItemId),
}

pub fn snapshot(store: &ColumnStore) -> Snapshot {
    let mut tables = Vec::new();
    for (tid, t) in store.tables.iter().enumerate() {
        let mut cells = Vec::new();
        for col in 0..t.columns.len() {
            let mut v = Vec::with_capacity(t.row_count as usize);
            for row in 0..t.row_count {
                v.push(
                    store
                        .read_cell(DataItemId::new(tid as u32, col as u32, row))
                        .unwrap(),
                );
            }
            cells.push(v);
        }
        tables.push(TableSnap {
            cells,
            live: t.live.iter().map(|a| a.load(Ordering::Relaxed)).collect(),
        });
    }
    Snapshot { tables }
}

/// Exact value equality over all live cells, reporting the first differing
/// item in canonical (table, column, row) order.
pub fn compare_snapshots(a: &Snapshot, b: &Snapshot) -> SnapshotCompare {
    let nt = a.tables.len().max(b.tables.len());
    for tid in 0..nt {
        let (ta, tb) = match (a.tables.get(tid), b.tables.get(tid)) {
            (Some(x), Some(y)) => (x, y),
            _ => return SnapshotCompare::Differs(DataItemId::new(tid as u32, 0, 0)),
        };
        let ncol = ta.cells.len().max(tb.cells.len());
        for col in 0..ncol {
            let (ca, cb) = match (ta.cells.get(col), tb.cells.get(col)) {
                (Some(x), Some(y)) => (x, y),
                _ => return SnapshotCompare::Differs(DataItemId::new(tid as u32, col as u32, 0)),
            };
            let nrow = ca.len().max(cb.len());
            for row in 0..nrow {
                let item = DataItemId::new(tid as u32, col as u32, row as u64);
                match (ca.get(row), cb.get(row)) {
                    (Some(x), Some(y)) => {
                        let live_a = ta.live[row];
                        let live_b = tb.live[row];
                        if live_a != live_b {
                            return SnapshotCompare::Differs(item);
                        }
                        if live_a && x != y {
                            return SnapshotCompare::Differs(item);
                        }
                    }
                    _ => return SnapshotCompare::Differs(item),
                }
            }
        }
    }
    SnapshotCompare::Equal
}

// ---------------------------------------------------------------------------
// Lock table

/// How data items map onto lock counter slots.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LockAddressing {
    /// One counter per distinct lock object in the bulk. No collisions.
    Exact,
    /// A fixed number of slots; distinct objects may hash to the same slot,
    /// which merges their lock streams. Conservative: never violates
    /// correctness, may reduce parallelism.
    Hashed(usize),
}

/// Array of unsigned counters, one per lockable object. Counters start at
/// zero each bulk and only increase while the bulk runs.
pub struct LockTable {
    counters: Vec<AtomicU64>,
}

impl LockTable {
    pub fn new(slots: usize) -> Self {
        LockTable {
            counters: (0..slots).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    pub fn slots(&self) -> usize {
        self.counters.len()
    }

    #[inline]
    pub fn load(&self, slot: u32) -> u64 {
        self.counters[slot as usize].load(Ordering::Acquire)
    }

    #[inline]
    pub fn bump(&self, slot: u32) {
        self.counters[slot as usize].fetch_add(1, Ordering::AcqRel);
    }

    /// 0/1 spin-lock acquire used by the relaxed variants.
    #[inline]
    pub fn try_lock(&self, slot: u32) -> bool {
        self.counters[slot as usize]
            .compare_exchange(0, 1, Ordering::Acquire, Ordering::Relaxed)
            .is_ok()
    }

    #[inline]
    pub fn unlock(&self, slot: u32) {
        self.counters[slot as usize].store(0, Ordering::Release);
    }

    /// Checks that every counter reached its expected final value and resets
    /// all counters to zero, restoring the bulk-start invariant.
    pub fn verify_and_reset(&self, expected: &[u64]) -> bool {
        let mut ok = true;
        for (i, c) in self.counters.iter().enumerate() {
            if c.load(Ordering::Acquire) != expected.get(i).copied().unwrap_or(0) {
                ok = false;
            }
            c.store(0, Ordering::Release);
        }
        ok
    }

    pub fn all_zero(&self) -> bool {
        self.counters
            .iter()
            .all(|c| c.load(Ordering::Relaxed) == 0)
    }
}

// ---------------------------------------------------------------------------
// Undo records

/// One reversible effect of a write.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UndoRecord {
    Cell { item: DataItemId, prior: CellValue },
    Liveness { table: u32, row: u64, prior: bool },
}

/// Applies a transaction's undo records in reverse order, restoring every
/// item it wrote to its pre-transaction value.
pub fn apply_undo(store: &ColumnStore, records: &[UndoRecord]) -> Result<(), StorageError> {
    for rec in records.iter().rev() {
        match rec {
            UndoRecord::Cell { item, prior } => store.write_cell(*item, prior)?,
            UndoRecord::Liveness { table, row, prior } => store.set_live(*table, *row, *prior)?,
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Schema / load text format
//
// Line-oriented, lossless:
//   # comment
//   table <name>
//   col <name> fixed|var [pk] [partition]
//   row <v1>, <v2>, ...        -- fixed: integer literal; var: quoted string
//   end
//
// Variable-length values are double-quoted with \\ \" \n \r \t and \xNN
// escapes for all other non-printable bytes.

fn quote_bytes(b: &[u8]) -> String {
    let mut s = String::with_capacity(b.len() + 2);
    s.push('"');
    for &c in b {
        match c {
            b'\\' => s.push_str("\\\\"),
            b'"' => s.push_str("\\\""),
            b'\n' => s.push_str("\\n"),
            b'\r' => s.push_str("\\r"),
            b'\t' => s.push_str("\\t"),
            0x20..=0x7E => s.push(c as char),
            _ => s.push_str(&format!("\\x{c:02x}")),
        }
    }
    s.push('"');
    s
}

fn unquote_bytes(s: &str, line: usize) -> Result<(Vec<u8>, usize), StorageError> {
    let bytes = s.as_bytes();
    if bytes.first() != Some(&b'"') {
        return Err(StorageError::Parse {
            line,
            msg: "expected opening quote".into(),
        });
    }
    let mut out = Vec::new();
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => return Ok((out, i + 1)),
            b'\\' => {
                let esc = bytes.get(i + 1).ok_or(StorageError::Parse {
                    line,
                    msg: "dangling escape".into(),
                })?;
                match esc {
                    b'\\' => out.push(b'\\'),
                    b'"' => out.push(b'"'),
                    b'n' => out.push(b'\n'),
                    b'r' => out.push(b'\r'),
                    b't' => out.push(b'\t'),
                    b'x' => {
                        let hex = s.get(i + 2..i + 4).ok_or(StorageError::Parse {
                            line,
                            msg: "bad \\x escape".into(),
                        })?;
                        let v = u8::from_str_radix(hex, 16).map_err(|_| StorageError::Parse {
                            line,
                            msg: format!("bad hex {hex:?}"),
                        })?;
                        out.push(v);
                        i += 2;
                    }
                    other => {
                        return Err(StorageError::Parse {
                            line,
                            msg: format!("unknown escape \\{}", *other as char),
                        })
                    }
                }
                i += 2;
            }
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    Err(StorageError::Parse {
        line,
        msg: "unterminated string".into(),
    })
}

/// Serializes the full store (schema and live rows) in the load format.
pub fn dump_store(store: &ColumnStore) -> String {
    let mut out = String::new();
    for tid in 0..store.table_count() {
        let t = store.table(tid as u32).unwrap();
        out.push_str(&format!("table {}\n", t.name));
        for (ci, c) in t.columns.iter().enumerate() {
            let kind = match c.kind {
                ColumnKind::Fixed => "fixed",
                ColumnKind::Var => "var",
            };
            out.push_str(&format!("col {} {}", c.name, kind));
            if ci == t.pk_column {
                out.push_str(" pk");
            }
            if Some(ci) == t.partition_column {
                out.push_str(" partition");
            }
            out.push('\n');
        }
        for row in 0..t.row_count() {
            if !store.is_live(tid as u32, row).unwrap() {
                continue;
            }
            let vals: Vec<String> = (0..t.columns.len())
                .map(|col| {
                    match store
                        .read_cell(DataItemId::new(tid as u32, col as u32, row))
                        .unwrap()
                    {
                        CellValue::Int(x) => x.to_string(),
                        CellValue::Bytes(b) => quote_bytes(&b),
                    }
                })
                .collect();
            out.push_str(&format!("row {}\n", vals.join(", ")));
        }
        out.push_str("end\n");
    }
    out
}

/// Parses the load format into a fresh store.
pub fn load_store(text: &str) -> Result<ColumnStore, StorageError> {
    let mut store = ColumnStore::new();
    let mut cur: Option<(String, Vec<ColumnDecl>, Option<usize>, Option<usize>)> = None;
    let mut cur_table: Option<u32> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (word, rest) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
        match word {
            "table" => {
                if cur.is_some() {
                    return Err(StorageError::Parse {
                        line,
                        msg: "nested table declaration".into(),
                    });
                }
                cur = Some((rest.trim().to_string(), Vec::new(), None, None));
                cur_table = None;
            }
            "col" => {
                let (name, decl, pk, part) = match cur.as_mut() {
                    Some(c) => (&c.0, &mut c.1, &mut c.2, &mut c.3),
                    None => {
                        return Err(StorageError::Parse {
                            line,
                            msg: "col outside table".into(),
                        })
                    }
                };
                let _ = name;
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() < 2 {
                    return Err(StorageError::Parse {
                        line,
                        msg: "col needs name and kind".into(),
                    });
                }
                let kind = match parts[1] {
                    "fixed" => ColumnKind::Fixed,
                    "var" => ColumnKind::Var,
                    k => {
                        return Err(StorageError::Parse {
                            line,
                            msg: format!("unknown column kind {k:?}"),
                        })
                    }
                };
                let idx = decl.len();
                decl.push(ColumnDecl {
                    name: parts[0].to_string(),
                    kind,
                });
                for flag in &parts[2..] {
                    match *flag {
                        "pk" => *pk = Some(idx),
                        "partition" => *part = Some(idx),
                        f => {
                            return Err(StorageError::Parse {
                                line,
                                msg: format!("unknown column flag {f:?}"),
                            })
                        }
                    }
                }
            }
            "row" => {
                let tid = match cur_table {
                    Some(t) => t,
                    None => {
                        // First row line finalizes the table declaration.
                        let (name, cols, pk, part) = cur.clone().ok_or(StorageError::Parse {
                            line,
                            msg: "row outside table".into(),
                        })?;
                        let pk = pk.ok_or(StorageError::Parse {
                            line,
                            msg: format!("table {name} has no pk column"),
                        })?;
                        let id = store.add_table(&name, cols, pk, part)?;
                        cur_table = Some(id);
                        id
                    }
                };
                let ncols = store.table(tid)?.columns.len();
                let kinds: Vec<ColumnKind> = store.table(tid)?
                    .columns
                    .iter()
                    .map(|c| c.kind)
                    .collect();
                let mut values = Vec::with_capacity(ncols);
                let mut s = rest.trim();
                for (i, kind) in kinds.iter().enumerate() {
                    s = s.trim_start();
                    match kind {
                        ColumnKind::Fixed => {
                            let end = s.find(',').unwrap_or(s.len());
                            let tok = s[..end].trim();
                            let v = tok.parse::<i64>().map_err(|_| StorageError::Parse {
                                line,
                                msg: format!("bad integer {tok:?}"),
                            })?;
                            values.push(CellValue::Int(v));
                            s = &s[end..];
                        }
                        ColumnKind::Var => {
                            let (bytes, consumed) = unquote_bytes(s, line)?;
                            values.push(CellValue::Bytes(bytes));
                            s = &s[consumed..];
                            s = s.trim_start();
                        }
                    }
                    if i + 1 < ncols {
                        s = s.trim_start();
                        s = s.strip_prefix(',').ok_or(StorageError::Parse {
                            line,
                            msg: "expected comma between values".into(),
                        })?;
                    }
                }
                store.append_row(tid, &values)?;
            }
            "end" => {
                if cur.is_none() {
                    return Err(StorageError::Parse {
                        line,
                        msg: "end outside table".into(),
                    });
                }
                if cur_table.is_none() {
                    // Table with zero rows; still must be declared.
                    let (name, cols, pk, part) = cur.clone().unwrap();
                    let pk = pk.ok_or(StorageError::Parse {
                        line,
                        msg: format!("table {name} has no pk column"),
                    })?;
                    store.add_table(&name, cols, pk, part)?;
                }
                cur = None;
                cur_table = None;
            }
            other => {
                return Err(StorageError::Parse {
                    line,
                    msg: format!("unknown directive {other:?}"),
                })
            }
        }
    }
    if cur.is_some() {
        return Err(StorageError::Parse {
            line: text.lines().count(),
            msg: "unterminated table".into(),
        });
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_col_store(rows: u64) -> ColumnStore {
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
                    ColumnDecl {
                        name: "note".into(),
                        kind: ColumnKind::Var,
                    },
                ],
                0,
                None,
            )
            .unwrap();
        for i in 0..rows {
            s.append_row(
                t,
                &[
                    CellValue::Int(i as i64),
                    CellValue::Int(0),
                    CellValue::Bytes(b"x".to_vec()),
                ],
            )
            .unwrap();
        }
        s
    }

    #[test]
    fn read_your_write() {
        let s = two_col_store(4);
        let item = DataItemId::new(0, 1, 2);
        s.write_int(item, 7).unwrap();
        assert_eq!(s.read_int(item).unwrap(), 7);
    }

    #[test]
    fn fresh_column_reads_zero() {
        let s = two_col_store(3);
        assert_eq!(s.read_int(DataItemId::new(0, 1, 0)).unwrap(), 0);
    }

    #[test]
    fn last_writer_wins() {
        let s = two_col_store(1);
        let item = DataItemId::new(0, 1, 0);
        s.write_int(item, 3).unwrap();
        s.write_int(item, 9).unwrap();
        assert_eq!(s.read_int(item).unwrap(), 9);
    }

    #[test]
    fn out_of_bounds_errors() {
        let s = two_col_store(2);
        assert!(matches!(
            s.read_int(DataItemId::new(0, 1, 5)),
            Err(StorageError::BadRow { .. })
        ));
        assert!(matches!(
            s.write_int(DataItemId::new(0, 9, 0), 1),
            Err(StorageError::BadColumn { .. })
        ));
    }

    #[test]
    fn var_write_relocates_and_all_rows_survive() {
        let s = two_col_store(4);
        let item = DataItemId::new(0, 2, 1);
        s.write_bytes(item, b"a much longer value than before")
            .unwrap();
        assert_eq!(
            s.read_bytes(item).unwrap(),
            b"a much longer value than before".to_vec()
        );
        for row in [0u64, 2, 3] {
            assert_eq!(
                s.read_bytes(DataItemId::new(0, 2, row)).unwrap(),
                b"x".to_vec()
            );
        }
    }

    #[test]
    fn encode_decode_roundtrip_and_order() {
        let ids = [
            DataItemId::new(0, 0, 0),
            DataItemId::new(0, 0, 5),
            DataItemId::new(0, 1, 0),
            DataItemId::new(2, 0, 1),
            DataItemId::coarse(2),
        ];
        for w in ids.windows(2) {
            assert!(w[0] < w[1]);
            assert!(w[0].encode() < w[1].encode());
        }
        for id in ids {
            assert_eq!(DataItemId::decode(id.encode()), id);
        }
    }

    #[test]
    fn merge_empty_buffer() {
        let mut s = two_col_store(1);
        let mut buf = InsertBuffer::default();
        assert_eq!(merge_inserts(&mut s, &mut buf, |_| true).unwrap(), 0);
    }

    #[test]
    fn merge_appends_and_indexes() {
        let mut s = two_col_store(2);
        let mut buf = InsertBuffer::default();
        for k in 10..13 {
            buf.push(
                0,
                0,
                vec![
                    CellValue::Int(k),
                    CellValue::Int(k * 2),
                    CellValue::Bytes(vec![]),
                ],
            )
            .unwrap();
        }
        assert_eq!(merge_inserts(&mut s, &mut buf, |_| true).unwrap(), 3);
        assert_eq!(s.table(0).unwrap().row_count(), 5);
        assert_eq!(s.lookup_pk(0, 11).unwrap(), Some(3));
        assert_eq!(s.read_int(DataItemId::new(0, 1, 3)).unwrap(), 22);
        assert!(buf.is_empty());
    }

    #[test]
    fn merge_duplicate_key_leaves_store_unchanged() {
        let mut s = two_col_store(2);
        let before = snapshot(&s);
        let mut buf = InsertBuffer::default();
        buf.push(
            0,
            0,
            vec![CellValue::Int(5), CellValue::Int(0), CellValue::Bytes(vec![])],
        )
        .unwrap();
        buf.push(
            0,
            0,
            vec![CellValue::Int(1), CellValue::Int(0), CellValue::Bytes(vec![])],
        )
        .unwrap();
        let err = merge_inserts(&mut s, &mut buf, |_| true).unwrap_err();
        assert_eq!(err, StorageError::DuplicateKey { table: 0, key: 1 });
        assert_eq!(compare_snapshots(&before, &snapshot(&s)), SnapshotCompare::Equal);
    }

    #[test]
    fn merge_skips_uncommitted() {
        let mut s = two_col_store(1);
        let mut buf = InsertBuffer::default();
        buf.push(
            7,
            0,
            vec![CellValue::Int(9), CellValue::Int(0), CellValue::Bytes(vec![])],
        )
        .unwrap();
        assert_eq!(merge_inserts(&mut s, &mut buf, |t| t != 7).unwrap(), 0);
        assert_eq!(s.table(0).unwrap().row_count(), 1);
    }

    #[test]
    fn snapshot_self_equal_and_one_cell_diff() {
        let s = two_col_store(3);
        let a = snapshot(&s);
        assert_eq!(compare_snapshots(&a, &a), SnapshotCompare::Equal);
        s.write_int(DataItemId::new(0, 1, 2), 42).unwrap();
        let b = snapshot(&s);
        assert_eq!(
            compare_snapshots(&a, &b),
            SnapshotCompare::Differs(DataItemId::new(0, 1, 2))
        );
    }

    #[test]
    fn dead_rows_do_not_affect_compare_but_liveness_does() {
        let s = two_col_store(2);
        let a = snapshot(&s);
        s.set_live(0, 1, false).unwrap();
        let b = snapshot(&s);
        assert_eq!(
            compare_snapshots(&a, &b),
            SnapshotCompare::Differs(DataItemId::new(0, 0, 1))
        );
    }

    #[test]
    fn undo_restores_prior_values() {
        let s = two_col_store(2);
        let item = DataItemId::new(0, 1, 0);
        let prior = s.read_int(item).unwrap();
        let before = snapshot(&s);
        s.write_int(item, 99).unwrap();
        s.set_live(0, 1, false).unwrap();
        apply_undo(
            &s,
            &[
                UndoRecord::Cell {
                    item,
                    prior: CellValue::Int(prior),
                },
                UndoRecord::Liveness {
                    table: 0,
                    row: 1,
                    prior: true,
                },
            ],
        )
        .unwrap();
        assert_eq!(compare_snapshots(&before, &snapshot(&s)), SnapshotCompare::Equal);
    }

    #[test]
    fn lock_table_basics() {
        let lt = LockTable::new(3);
        assert!(lt.all_zero());
        lt.bump(1);
        lt.bump(1);
        assert_eq!(lt.load(1), 2);
        assert!(lt.verify_and_reset(&[0, 2, 0]));
        assert!(lt.all_zero());
        assert!(lt.try_lock(0));
        assert!(!lt.try_lock(0));
        lt.unlock(0);
        assert!(lt.try_lock(0));
    }

    #[test]
    fn schema_roundtrip() {
        let mut s = two_col_store(3);
        s.write_bytes(DataItemId::new(0, 2, 1), b"quote\" slash\\ nl\n ctrl\x01")
            .unwrap();
        s.add_table(
            "empty",
            vec![ColumnDecl {
                name: "k".into(),
                kind: ColumnKind::Fixed,
            }],
            0,
            Some(0),
        )
        .unwrap();
        let text = dump_store(&s);
        let s2 = load_store(&text).unwrap();
        assert_eq!(
            compare_snapshots(&snapshot(&s), &snapshot(&s2)),
            SnapshotCompare::Equal
        );
        assert_eq!(dump_store(&s2), text);
        assert_eq!(s2.table(1).unwrap().partition_column, Some(0));
    }

    #[test]
    fn schema_parse_errors() {
        assert!(matches!(
            load_store("col x fixed\n"),
            Err(StorageError::Parse { .. })
        ));
        assert!(matches!(
            load_store("table t\ncol a fixed\nrow 1\nend\n"),
            Err(StorageError::Parse { .. }) // no pk
        ));
    }
}
