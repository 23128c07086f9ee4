//! Property tests for the storage and planner invariants.

mod common;

use bulktx::planner::{divergence_metric, group_by_type, GroupingConfig};
use bulktx::storage::{
    compare_snapshots, dump_store, load_store, merge_inserts, snapshot, CellValue, ColumnDecl,
    ColumnKind, ColumnStore, DataItemId, InsertBuffer, SnapshotCompare,
};
use bulktx::txmodel::TxnSignature;
use proptest::prelude::*;

fn small_store(rows: u64) -> ColumnStore {
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
                    name: "a".into(),
                    kind: ColumnKind::Fixed,
                },
                ColumnDecl {
                    name: "b".into(),
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
                CellValue::Bytes(vec![]),
            ],
        )
        .unwrap();
    }
    s
}

proptest! {
    /// Final reads equal the last write per item, for any write sequence
    /// over fixed and variable-length cells.
    #[test]
    fn last_write_wins(ops in prop::collection::vec(
        (0u64..4, prop::bool::ANY, prop::collection::vec(any::<u8>(), 0..24), any::<i64>()),
        1..64,
    )) {
        let store = small_store(4);
        let mut last_int = std::collections::HashMap::new();
        let mut last_bytes = std::collections::HashMap::new();
        for (row, is_var, bytes, val) in &ops {
            if *is_var {
                store.write_bytes(DataItemId::new(0, 2, *row), bytes).unwrap();
                last_bytes.insert(*row, bytes.clone());
            } else {
                store.write_int(DataItemId::new(0, 1, *row), *val).unwrap();
                last_int.insert(*row, *val);
            }
        }
        for (row, val) in last_int {
            prop_assert_eq!(store.read_int(DataItemId::new(0, 1, row)).unwrap(), val);
        }
        for (row, bytes) in last_bytes {
            prop_assert_eq!(store.read_bytes(DataItemId::new(0, 2, row)).unwrap(), bytes);
        }
    }

    /// Batched merge is equivalent to appending the same rows one at a time
    /// in buffer order.
    #[test]
    fn merge_equals_one_at_a_time(keys in prop::collection::vec(10i64..200, 0..20)) {
        let mut dedup = keys.clone();
        dedup.sort_unstable();
        dedup.dedup();
        let mut batched = small_store(4);
        let mut buf = InsertBuffer::default();
        for (i, k) in dedup.iter().enumerate() {
            buf.push(
                i as u64,
                0,
                vec![CellValue::Int(*k), CellValue::Int(*k * 2), CellValue::Bytes(vec![1])],
            )
            .unwrap();
        }
        merge_inserts(&mut batched, &mut buf, |_| true).unwrap();
        let mut serial = small_store(4);
        for k in &dedup {
            serial
                .append_row(0, &[CellValue::Int(*k), CellValue::Int(*k * 2), CellValue::Bytes(vec![1])])
                .unwrap();
        }
        prop_assert_eq!(
            compare_snapshots(&snapshot(&batched), &snapshot(&serial)),
            SnapshotCompare::Equal
        );
    }

    /// The schema/load text format round-trips arbitrary byte strings.
    #[test]
    fn schema_text_roundtrip(cells in prop::collection::vec(
        prop::collection::vec(any::<u8>(), 0..32), 1..8,
    )) {
        let store = small_store(cells.len() as u64);
        for (row, bytes) in cells.iter().enumerate() {
            store.write_bytes(DataItemId::new(0, 2, row as u64), bytes).unwrap();
        }
        let text = dump_store(&store);
        let back = load_store(&text).unwrap();
        prop_assert_eq!(
            compare_snapshots(&snapshot(&store), &snapshot(&back)),
            SnapshotCompare::Equal
        );
        prop_assert_eq!(dump_store(&back), text);
    }

    /// Grouping permutes the multiset of signatures and never raises the
    /// divergence metric above the ungrouped order.
    #[test]
    fn grouping_permutes_and_helps(
        types in prop::collection::vec(0u16..12, 1..256),
        passes in 0u32..3,
    ) {
        let orig: Vec<TxnSignature> = types
            .iter()
            .enumerate()
            .map(|(i, &t)| TxnSignature {
                id: i as u64,
                type_id: t,
                params: vec![],
                arrival_us: 0,
            })
            .collect();
        let mut grouped = orig.clone();
        group_by_type(&mut grouped, &GroupingConfig::new(2, passes, 12));
        let mut a: Vec<(u64, u16)> = orig.iter().map(|s| (s.id, s.type_id)).collect();
        let mut b: Vec<(u64, u16)> = grouped.iter().map(|s| (s.id, s.type_id)).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        if passes >= GroupingConfig::full_passes(12, 2) {
            let seq: Vec<u16> = grouped.iter().map(|s| s.type_id).collect();
            prop_assert!(divergence_metric(&seq, 32) <= 11);
        }
    }
}
