//! Run-gating checks: oracle equivalence of statuses and the trace-based
//! ordering/serializability checkers.

use crate::txmodel::{AbortReason, TraceEvent, TxnStatus};
use std::collections::{BTreeSet, HashMap};

/// Conflicting accesses to one item must appear in strictly increasing
/// transaction-id order (the deterministic-timestamp guarantee of the keyed
/// lock strategy). Same-transaction pairs are exempt.
pub fn check_item_order(events: &[TraceEvent]) -> Result<(), String> {
    #[derive(Default)]
    struct ItemState {
        max_any: Option<u64>,
        max_write: Option<u64>,
    }
    let mut per_item: HashMap<u64, ItemState> = HashMap::new();
    for e in events {
        let st = per_item.entry(e.item.encode()).or_default();
        let against = if e.write { st.max_any } else { st.max_write };
        if let Some(prev) = against {
            if prev > e.txn {
                return Err(format!(
                    "item {:?}: txn {} accessed after txn {}",
                    e.item, e.txn, prev
                ));
            }
        }
        st.max_any = Some(st.max_any.map_or(e.txn, |m| m.max(e.txn)));
        if e.write {
            st.max_write = Some(st.max_write.map_or(e.txn, |m| m.max(e.txn)));
        }
    }
    Ok(())
}

/// Conflict-serializability check over a trace: per item, nearest-conflict
/// edges point from the earlier access's transaction to the later one; the
/// trace is serializable iff that precedence graph is acyclic. (Any
/// conflicting pair is connected through nearest-conflict edges, so checking
/// the reduced edge set decides the full one.)
pub fn serialization_graph_acyclic(events: &[TraceEvent]) -> Result<(), String> {
    let mut per_item: HashMap<u64, Vec<(u64, bool)>> = HashMap::new();
    for e in events {
        per_item
            .entry(e.item.encode())
            .or_default()
            .push((e.txn, e.write));
    }
    let mut edges: BTreeSet<(u64, u64)> = BTreeSet::new();
    for list in per_item.values() {
        for (i, &(txn, write)) in list.iter().enumerate() {
            let earlier = &list[..i];
            if write {
                match earlier.iter().rposition(|&(t, w)| w && t != txn) {
                    Some(iw) => {
                        let (wt, _) = earlier[iw];
                        let mut any_reader = false;
                        for &(t, w) in &earlier[iw + 1..] {
                            if !w && t != txn {
                                edges.insert((t, txn));
                                any_reader = true;
                            }
                        }
                        if !any_reader {
                            edges.insert((wt, txn));
                        }
                    }
                    None => {
                        for &(t, w) in earlier {
                            if !w && t != txn {
                                edges.insert((t, txn));
                            }
                        }
                    }
                }
            } else if let Some(&(t, _)) =
                earlier.iter().rev().find(|&&(t, w)| w && t != txn)
            {
                edges.insert((t, txn));
            }
        }
    }
    // Kahn over the precedence graph.
    let mut nodes: BTreeSet<u64> = BTreeSet::new();
    for &(a, b) in &edges {
        nodes.insert(a);
        nodes.insert(b);
    }
    let mut indeg: HashMap<u64, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    let mut succ: HashMap<u64, Vec<u64>> = HashMap::new();
    for &(a, b) in &edges {
        *indeg.get_mut(&b).unwrap() += 1;
        succ.entry(a).or_default().push(b);
    }
    let mut queue: Vec<u64> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| n)
        .collect();
    let mut seen = 0usize;
    while let Some(n) = queue.pop() {
        seen += 1;
        if let Some(next) = succ.get(&n) {
            for &m in next {
                let d = indeg.get_mut(&m).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(m);
                }
            }
        }
    }
    if seen != nodes.len() {
        return Err(format!(
            "precedence graph has a cycle ({} of {} nodes ordered)",
            seen,
            nodes.len()
        ));
    }
    Ok(())
}

/// Status equivalence against a forced-abort oracle replay: transactions the
/// strategy rolled back are forced aborts in the replay; everything else must
/// match exactly.
pub fn statuses_equivalent(
    strategy: &[(u64, TxnStatus)],
    oracle: &[(u64, TxnStatus)],
) -> Result<(), String> {
    if strategy.len() != oracle.len() {
        return Err(format!(
            "status count mismatch: {} vs {}",
            strategy.len(),
            oracle.len()
        ));
    }
    for ((sid, s), (oid, o)) in strategy.iter().zip(oracle) {
        if sid != oid {
            return Err(format!("txn id mismatch: {sid} vs {oid}"));
        }
        let ok = match (s, o) {
            (TxnStatus::Committed, TxnStatus::Committed) => true,
            (TxnStatus::RolledBack, TxnStatus::Aborted(AbortReason::Forced)) => true,
            (TxnStatus::Aborted(a), TxnStatus::Aborted(b)) => a == b,
            _ => false,
        };
        if !ok {
            return Err(format!("txn {sid}: strategy {s:?} vs oracle {o:?}"));
        }
    }
    Ok(())
}

/// The rolled-back ids of an outcome — the forced-abort set for the replay.
pub fn rolled_back_ids(statuses: &[(u64, TxnStatus)]) -> std::collections::HashSet<u64> {
    statuses
        .iter()
        .filter(|(_, s)| matches!(s, TxnStatus::RolledBack))
        .map(|(id, _)| *id)
        .collect()
}
