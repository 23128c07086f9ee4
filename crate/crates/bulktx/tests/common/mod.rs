//! Shared fixtures and independent oracles for the integration suites.
//!
//! The oracles here re-derive expected values from first principles (pairwise
//! condition checks, longest paths over the brute-force edge set) and stay
//! independent of the library's own graph machinery.

#![allow(dead_code)]

use bulktx::exec::Bulk;
use bulktx::storage::{
    snapshot, ColumnDecl, ColumnKind, ColumnStore, DataItemId, InsertBuffer, Snapshot,
    SnapshotCompare,
};
use bulktx::txmodel::{
    collect_footprints, execute_sequential, Abort, BasicOp, PartitionSpan, Registry, TxnSignature,
    TxnStatus, TxnType,
};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::{Arc, Mutex};

// ---------------------------------------------------------------------------
// Brute-force dependency-graph oracles

pub fn txns_conflict(a: &[BasicOp], b: &[BasicOp]) -> bool {
    a.iter().any(|x| b.iter().any(|y| x.conflicts(y)))
}

/// Edge set straight from the three conditions, checked over all pairs.
pub fn brute_force_edges(txn_ops: &[(u64, Vec<BasicOp>)]) -> BTreeSet<(u64, u64)> {
    let mut edges = BTreeSet::new();
    for (i, (t1, o1)) in txn_ops.iter().enumerate() {
        for (t2, o2) in txn_ops.iter().skip(i + 1) {
            if !txns_conflict(o1, o2) {
                continue;
            }
            let shadowed = txn_ops
                .iter()
                .any(|(tm, om)| tm > t1 && tm < t2 && txns_conflict(o1, om) && txns_conflict(om, o2));
            if !shadowed {
                edges.insert((*t1, *t2));
            }
        }
    }
    edges
}

/// Longest-path depths over an arbitrary edge set (ids are a topological
/// order by construction).
pub fn longest_path_depths(
    ids: &[u64],
    edges: &BTreeSet<(u64, u64)>,
) -> HashMap<u64, u32> {
    let mut preds: HashMap<u64, Vec<u64>> = HashMap::new();
    for &(a, b) in edges {
        preds.entry(b).or_default().push(a);
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut depth = HashMap::new();
    for v in sorted {
        let d = preds
            .get(&v)
            .map(|ps| ps.iter().map(|p| depth[p] + 1).max().unwrap())
            .unwrap_or(0);
        depth.insert(v, d);
    }
    depth
}

/// Property 1: within any depth class, all pairs are conflict-free.
pub fn check_depth_classes_conflict_free(
    txn_ops: &[(u64, Vec<BasicOp>)],
    depths: &HashMap<u64, u32>,
) -> Result<(), String> {
    for (i, (t1, o1)) in txn_ops.iter().enumerate() {
        for (t2, o2) in txn_ops.iter().skip(i + 1) {
            if depths[t1] == depths[t2] && txns_conflict(o1, o2) {
                return Err(format!(
                    "txns {t1} and {t2} share depth {} but conflict",
                    depths[t1]
                ));
            }
        }
    }
    Ok(())
}

/// Property 2: every transaction at depth k >= 1 conflicts with at least one
/// at depth k-1.
pub fn check_depth_support(
    txn_ops: &[(u64, Vec<BasicOp>)],
    depths: &HashMap<u64, u32>,
) -> Result<(), String> {
    for (t, ops) in txn_ops {
        let k = depths[t];
        if k == 0 {
            continue;
        }
        let supported = txn_ops.iter().any(|(p, po)| {
            p < t && depths[p] == k - 1 && txns_conflict(po, ops)
        });
        if !supported {
            return Err(format!("txn {t} at depth {k} has no support at depth {}", k - 1));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Small bank fixture built through the public registration API

pub const BANK_ROWS: u64 = 16;

/// One table (`id`, `val`); type 0 adds `params[1]` to row `params[0]`'s val.
/// `params[2] > 0` aborts before the write (two-phase). A second, non-two-
/// phase type 1 writes first and then aborts when `params[2] > 1`.
pub fn bank_fixture(rows: u64, with_non_two_phase: bool) -> (Registry, ColumnStore) {
    let mut store = ColumnStore::new();
    let t = store
        .add_table(
            "bank",
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
        store
            .append_row(
                t,
                &[
                    bulktx::storage::CellValue::Int(i as i64),
                    bulktx::storage::CellValue::Int(0),
                ],
            )
            .unwrap();
    }
    let mut registry = Registry::new();
    registry
        .register_type(TxnType {
            type_id: 0,
            name: "add".into(),
            two_phase: true,
            body: Arc::new(|ctx, params| {
                let item = DataItemId::new(0, 1, params[0] as u64);
                let v = ctx.read_int(item)?;
                if params.len() > 2 && params[2] > 0 {
                    return Err(Abort::code(params[2]));
                }
                ctx.write_int(item, v + params[1])?;
                Ok(())
            }),
            footprint: Arc::new(|_, params| {
                let item = DataItemId::new(0, 1, params[0] as u64);
                Ok(vec![(item, false), (item, true)])
            }),
            partition: Arc::new(|params| PartitionSpan::Single(params[0] as u32)),
            root_key: None,
        })
        .unwrap();
    if with_non_two_phase {
        registry
            .register_type(TxnType {
                type_id: 1,
                name: "add_then_maybe_abort".into(),
                two_phase: false,
                body: Arc::new(|ctx, params| {
                    let item = DataItemId::new(0, 1, params[0] as u64);
                    let v = ctx.read_int(item)?;
                    ctx.write_int(item, v + params[1])?;
                    if params.len() > 2 && params[2] > 1 {
                        return Err(Abort::code(params[2]));
                    }
                    Ok(())
                }),
                footprint: Arc::new(|_, params| {
                    let item = DataItemId::new(0, 1, params[0] as u64);
                    Ok(vec![(item, false), (item, true)])
                }),
                partition: Arc::new(|params| PartitionSpan::Single(params[0] as u32)),
                root_key: None,
            })
            .unwrap();
    }
    (registry, store)
}

pub fn sig(id: u64, type_id: u16, params: Vec<i64>) -> TxnSignature {
    TxnSignature {
        id,
        type_id,
        params,
        arrival_us: 0,
    }
}

/// Builds a bulk (id order) with footprints resolved against the store.
pub fn bulk_of(registry: &Registry, store: &ColumnStore, txns: Vec<TxnSignature>) -> Bulk {
    let footprints = collect_footprints(registry, store, &txns);
    Bulk {
        txns,
        footprints: footprints.ops,
    }
}

/// Runs the sequential reference on a clone of `store` and returns its final
/// snapshot plus statuses, with `forced` treated as no-op aborts.
pub fn oracle_run(
    registry: &Registry,
    store: &ColumnStore,
    txns: &[TxnSignature],
    forced: &HashSet<u64>,
) -> (Snapshot, Vec<(u64, TxnStatus)>) {
    let clone = store.clone_data();
    let buf = Mutex::new(InsertBuffer::default());
    let mut ordered = txns.to_vec();
    ordered.sort_by_key(|t| t.id);
    let statuses = execute_sequential(registry, &clone, &buf, &ordered, forced, None);
    let mut merged = clone;
    {
        let committed: HashSet<u64> = statuses
            .iter()
            .filter(|(_, s)| s.committed())
            .map(|(id, _)| *id)
            .collect();
        let mut guard = buf.lock().unwrap();
        bulktx::storage::merge_inserts(&mut merged, &mut guard, |id| committed.contains(&id))
            .unwrap();
    }
    (snapshot(&merged), statuses)
}

pub fn assert_snapshots_equal(a: &Snapshot, b: &Snapshot, what: &str) {
    match bulktx::storage::compare_snapshots(a, b) {
        SnapshotCompare::Equal => {}
        SnapshotCompare::Differs(item) => panic!("{what}: snapshots differ at {item:?}"),
    }
}
