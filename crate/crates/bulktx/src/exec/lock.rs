//! Counter-keyed lock plans.
//!
//! Each data item maps to a lock object: the item itself, or — for tables
//! declared as part of a tree schema — the primary key of the root relation,
//! which eliminates the per-item locks underneath it. Lock objects map to
//! counter slots (exactly, or hashed into a fixed-size table where collisions
//! merge lock streams conservatively).
//!
//! Keys: within one slot, the transactions touching it are numbered 0..n-1 in
//! timestamp order, one key per transaction. A lane spins until the counter
//! equals its key, performs the transaction's accesses on that slot, and the
//! last declared access carries the release mark that bumps the counter. Keys
//! only ever wait on smaller timestamps, so the wait graph is acyclic and the
//! protocol cannot deadlock.

use super::{Bulk, ExecError};
use crate::storage::{CellValue, ColumnStore, DataItemId, InsertBuffer, LockAddressing, LockTable};
use crate::txmodel::{
    DirectCtx, FatalKind, OpError, Registry, StoreCtx, TraceShared,
};
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// What a counter slot guards.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum LockObject {
    Item(DataItemId),
    RootKey { table: u32, key: i64 },
}

/// Per-transaction, per-slot protocol state computed before execution.
#[derive(Clone, Debug)]
pub struct SlotStep {
    pub slot: u32,
    /// Position of this transaction among the slot's transactions, in
    /// timestamp order.
    pub key: u64,
    /// Declared accesses mapping to this slot; the last one releases.
    pub declared: u32,
    /// Whole-table (coarsened) steps have no meaningful access count; they
    /// hold until the transaction finishes.
    pub coarse: bool,
}

/// Lock layout for one bulk.
pub struct LockPlan {
    pub slots: usize,
    /// Steps per bulk position (scheduling order), each in first-access order.
    pub steps: Vec<Vec<SlotStep>>,
    /// item encoding -> index into `steps[i]`, per bulk position.
    pub item_step: Vec<HashMap<u64, usize>>,
    /// Expected counter value per slot after a fully completed bulk.
    pub expected: Vec<u64>,
}

fn hash_object(obj: &LockObject) -> u64 {
    let mut h = DefaultHasher::new();
    obj.hash(&mut h);
    h.finish()
}

/// Maps a footprint item to its lock object, applying primary-key lock
/// elimination for root-locked tables.
fn lock_object_for(
    registry: &Registry,
    type_id: u16,
    params: &[i64],
    item: DataItemId,
) -> Result<LockObject, ExecError> {
    if item.is_coarse() {
        return Ok(LockObject::Item(item));
    }
    match registry.root_table_for(item.table) {
        Some(root) => {
            let ty = registry.get(type_id)?;
            let key_fn = ty.root_key.as_ref().ok_or(ExecError::MissingRootKey {
                type_id,
                table: item.table,
            })?;
            Ok(LockObject::RootKey {
                table: root,
                key: key_fn(params),
            })
        }
        None => Ok(LockObject::Item(item)),
    }
}

/// Builds the keyed lock plan for a bulk from its declared footprints.
pub fn build_lock_plan(
    registry: &Registry,
    bulk: &Bulk,
    addressing: LockAddressing,
) -> Result<LockPlan, ExecError> {
    let n = bulk.len();
    // Pass 1: resolve lock objects per transaction (first-access order).
    let mut txn_objects: Vec<Vec<(LockObject, Vec<u64>)>> = Vec::with_capacity(n);
    for (sig, ops) in bulk.txns.iter().zip(&bulk.footprints) {
        let mut order: Vec<(LockObject, Vec<u64>)> = Vec::new();
        for op in ops {
            let obj = lock_object_for(registry, sig.type_id, &sig.params, op.item)?;
            match order.iter_mut().find(|(o, _)| *o == obj) {
                Some((_, items)) => items.push(op.item.encode()),
                None => order.push((obj, vec![op.item.encode()])),
            }
        }
        txn_objects.push(order);
    }
    // Pass 2: slot assignment.
    let mut slot_of: HashMap<LockObject, u32> = HashMap::new();
    let mut slots = 0u32;
    let mut resolve = |obj: LockObject| -> u32 {
        match addressing {
            LockAddressing::Exact => *slot_of.entry(obj).or_insert_with(|| {
                let s = slots;
                slots += 1;
                s
            }),
            LockAddressing::Hashed(size) => (hash_object(&obj) % size as u64) as u32,
        }
    };
    let mut txn_slots: Vec<Vec<(u32, Vec<u64>)>> = Vec::with_capacity(n);
    for objects in txn_objects {
        let mut per: Vec<(u32, Vec<u64>)> = Vec::new();
        for (obj, items) in objects {
            let slot = resolve(obj);
            // Hash collisions can fold two objects of one txn onto one slot.
            match per.iter_mut().find(|(s, _)| *s == slot) {
                Some((_, all)) => all.extend(items),
                None => per.push((slot, items)),
            }
        }
        txn_slots.push(per);
    }
    let slot_count = match addressing {
        LockAddressing::Exact => slots as usize,
        LockAddressing::Hashed(size) => size,
    };
    // Pass 3: keys per slot in timestamp order.
    let order = bulk.id_order();
    let mut next_key: Vec<u64> = vec![0; slot_count];
    let mut steps: Vec<Vec<SlotStep>> = vec![Vec::new(); n];
    let mut item_step: Vec<HashMap<u64, usize>> = vec![HashMap::new(); n];
    for &i in &order {
        for (slot, items) in &txn_slots[i] {
            let key = next_key[*slot as usize];
            next_key[*slot as usize] += 1;
            let idx = steps[i].len();
            steps[i].push(SlotStep {
                slot: *slot,
                key,
                declared: items.len() as u32,
                coarse: items
                    .iter()
                    .any(|&enc| DataItemId::decode(enc).is_coarse()),
            });
            for &enc in items {
                item_step[i].insert(enc, idx);
            }
        }
    }
    Ok(LockPlan {
        slots: slot_count,
        steps,
        item_step,
        expected: next_key,
    })
}

/// Spins until a counter reaches `key`. Yields periodically so oversubscribed
/// lanes cannot starve the lane currently able to make progress.
pub(crate) fn spin_until(
    locks: &LockTable,
    slot: u32,
    key: u64,
    deadline: Instant,
    poison: &AtomicBool,
) -> Result<(), FatalKind> {
    let mut iters: u32 = 0;
    loop {
        if locks.load(slot) == key {
            return Ok(());
        }
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

/// Runtime state of one transaction's keyed protocol.
pub(crate) struct TxnLockState<'p> {
    steps: &'p [SlotStep],
    item_step: &'p HashMap<u64, usize>,
    acquired: Vec<bool>,
    remaining: Vec<u32>,
    released: Vec<bool>,
}

impl<'p> TxnLockState<'p> {
    pub fn new(plan: &'p LockPlan, bulk_idx: usize) -> Self {
        let steps = &plan.steps[bulk_idx];
        TxnLockState {
            steps,
            item_step: &plan.item_step[bulk_idx],
            acquired: vec![false; steps.len()],
            remaining: steps.iter().map(|s| s.declared).collect(),
            released: vec![false; steps.len()],
        }
    }

    fn step_for(&self, item: DataItemId) -> Option<usize> {
        self.item_step
            .get(&item.encode())
            .or_else(|| self.item_step.get(&DataItemId::coarse(item.table).encode()))
            .copied()
    }

    /// Acquire-before-access; returns the step index.
    fn ensure(
        &mut self,
        item: DataItemId,
        locks: &LockTable,
        deadline: Instant,
        poison: &AtomicBool,
        txn: u64,
    ) -> Result<usize, OpError> {
        let idx = match self.step_for(item) {
            Some(i) => i,
            None => return Err(OpError::Fatal(FatalKind::Undeclared(item))),
        };
        let _ = txn;
        if self.remaining[idx] == 0 && !self.steps[idx].coarse {
            // More actual accesses than declared: the release mark already
            // fired, so continuing would race with the next key holder.
            return Err(OpError::Fatal(FatalKind::Undeclared(item)));
        }
        if !self.acquired[idx] {
            let step = &self.steps[idx];
            spin_until(locks, step.slot, step.key, deadline, poison)
                .map_err(OpError::Fatal)?;
            self.acquired[idx] = true;
        }
        Ok(idx)
    }

    /// Consume one declared access; the last one releases the slot. Coarse
    /// steps never count down — they release with the transaction.
    fn consume(&mut self, idx: usize, locks: &LockTable) {
        if self.steps[idx].coarse {
            return;
        }
        self.remaining[idx] -= 1;
        if self.remaining[idx] == 0 && !self.released[idx] {
            locks.bump(self.steps[idx].slot);
            self.released[idx] = true;
        }
    }

    /// Completes the key protocol after the body finished (committed or
    /// aborted): every slot still holds its key window until bumped, so
    /// successors would otherwise wait forever.
    pub fn finish(
        &mut self,
        locks: &LockTable,
        deadline: Instant,
        poison: &AtomicBool,
    ) -> Result<(), FatalKind> {
        for i in 0..self.steps.len() {
            if self.released[i] {
                continue;
            }
            if !self.acquired[i] {
                let step = &self.steps[i];
                spin_until(locks, step.slot, step.key, deadline, poison)?;
                self.acquired[i] = true;
            }
            locks.bump(self.steps[i].slot);
            self.released[i] = true;
        }
        Ok(())
    }
}

/// Store context that runs the keyed protocol around every access.
pub(crate) struct KeyedCtx<'a, 'p> {
    pub inner: DirectCtx<'a>,
    pub locks: &'a LockTable,
    pub state: TxnLockState<'p>,
    pub deadline: Instant,
    pub poison: &'a AtomicBool,
    /// Run-level failure observed by this context; checked after the body
    /// returns (procedures propagate it as an abort, which must not stick).
    pub fatal: Option<FatalKind>,
}

impl<'a, 'p> KeyedCtx<'a, 'p> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &'a ColumnStore,
        buf: &'a Mutex<InsertBuffer>,
        txn: u64,
        lane: u32,
        log_undo: bool,
        trace: Option<&'a TraceShared>,
        locks: &'a LockTable,
        state: TxnLockState<'p>,
        deadline: Instant,
        poison: &'a AtomicBool,
    ) -> Self {
        KeyedCtx {
            inner: DirectCtx::new(store, buf, txn, lane, log_undo, trace),
            locks,
            state,
            deadline,
            poison,
            fatal: None,
        }
    }

    fn guard(&mut self, item: DataItemId) -> Result<usize, OpError> {
        let r = self
            .state
            .ensure(item, self.locks, self.deadline, self.poison, self.inner.txn);
        if let Err(OpError::Fatal(k)) = &r {
            self.fatal.get_or_insert(*k);
        }
        r
    }
}

impl StoreCtx for KeyedCtx<'_, '_> {
    fn read_int(&mut self, item: DataItemId) -> Result<i64, OpError> {
        let idx = self.guard(item)?;
        let v = self.inner.read_int(item)?;
        self.state.consume(idx, self.locks);
        Ok(v)
    }

    fn write_int(&mut self, item: DataItemId, v: i64) -> Result<(), OpError> {
        let idx = self.guard(item)?;
        self.inner.write_int(item, v)?;
        self.state.consume(idx, self.locks);
        Ok(())
    }

    fn read_bytes(&mut self, item: DataItemId) -> Result<Vec<u8>, OpError> {
        let idx = self.guard(item)?;
        let v = self.inner.read_bytes(item)?;
        self.state.consume(idx, self.locks);
        Ok(v)
    }

    fn write_bytes(&mut self, item: DataItemId, v: &[u8]) -> Result<(), OpError> {
        let idx = self.guard(item)?;
        self.inner.write_bytes(item, v)?;
        self.state.consume(idx, self.locks);
        Ok(())
    }

    fn lookup_pk(&mut self, table: u32, key: i64) -> Result<Option<u64>, OpError> {
        // Synchronize on the pk cell when the footprint declared it; a row
        // that was dead at footprint time cannot come alive mid-bulk, so an
        // undeclared lookup needs no ordering.
        let t = self.inner.store.table(table).map_err(OpError::Storage)?;
        if let Some(row) = t.pk_row(key) {
            let item = DataItemId::new(table, t.pk_column as u32, row);
            if let Some(idx) = self.state.step_for(item) {
                if self.state.remaining[idx] > 0 {
                    let idx = self.guard(item)?;
                    let out = self.inner.lookup_pk(table, key)?;
                    self.state.consume(idx, self.locks);
                    return Ok(out);
                }
            }
        }
        self.inner.lookup_pk(table, key)
    }

    fn insert_row(&mut self, table: u32, values: Vec<CellValue>) -> Result<(), OpError> {
        self.inner.insert_row(table, values)
    }

    fn delete_row(&mut self, table: u32, row: u64) -> Result<(), OpError> {
        // All columns of the row share one slot under root locking; under
        // item locking each column is its own declared write.
        let ncols = self
            .inner
            .store
            .table(table)
            .map_err(OpError::Storage)?
            .columns
            .len();
        let mut idxs = Vec::with_capacity(ncols);
        for col in 0..ncols {
            idxs.push(self.guard(DataItemId::new(table, col as u32, row))?);
        }
        self.inner.delete_row(table, row)?;
        for idx in idxs {
            self.state.consume(idx, self.locks);
        }
        Ok(())
    }
}
