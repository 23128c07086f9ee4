//! Timestamped dependency graph machinery.
//!
//! Three views of the same structure, used for different jobs:
//!
//! * [`TDependencyGraph`] — explicit vertex/edge construction by the
//!   data-oriented per-item scan. An edge `t1 -> t2` exists iff the two
//!   transactions conflict, `t1` has the smaller timestamp, and no
//!   transaction between them conflicts with both. This is the slow exact
//!   path and the correctness oracle for the rank pipeline.
//! * [`compute_ranks`] — the sort/scan pipeline that assigns every collapsed
//!   basic operation a rank within its per-item group and every transaction
//!   the maximum rank of its operations. Within one group the scan follows
//!   the read/write rank rule; across items, transaction depths feed back
//!   into the group scans and the whole thing iterates to a fixpoint so that
//!   the reported depth equals the longest-path depth of the explicit graph
//!   even when transactions touch several items.
//! * [`ZeroSetExtractor`] — incremental peeling of the 0-set (transactions
//!   with no preceding conflicting transaction) without recomputing ranks
//!   from scratch per round.

use crate::par;
use crate::txmodel::{BasicOp, PartitionSpan};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};

/// One collapsed basic operation: at most one entry per (item, transaction),
/// write-if-any-write. Collapsing keeps the group scan's "previous operation"
/// logic per transaction, matching how ranks chain between distinct
/// transactions only.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct CollapsedOp {
    pub item: u64,
    pub txn: u64,
    pub write: bool,
}

/// Collapses raw footprint ops, keeping every transaction id (some may have
/// empty footprints and sit at depth zero).
pub fn collapse_ops(txn_ids: &[u64], ops: &[BasicOp]) -> PoolOps {
    let mut entries: Vec<CollapsedOp> = ops
        .iter()
        .map(|op| CollapsedOp {
            item: op.item.encode(),
            txn: op.txn,
            write: op.write,
        })
        .collect();
    entries.sort_by_key(|e| (e.item, e.txn));
    entries.dedup_by(|b, a| {
        if a.item == b.item && a.txn == b.txn {
            a.write |= b.write;
            true
        } else {
            false
        }
    });
    let mut txns: Vec<u64> = txn_ids.to_vec();
    txns.extend(entries.iter().map(|e| e.txn));
    txns.sort_unstable();
    txns.dedup();
    PoolOps { entries, txns }
}

/// Sorted collapsed operations for one pool.
#[derive(Clone, Debug)]
pub struct PoolOps {
    /// Sorted by (item, txn).
    pub entries: Vec<CollapsedOp>,
    /// Sorted distinct transaction ids in the pool.
    pub txns: Vec<u64>,
}

impl PoolOps {
    /// Group boundaries: half-open entry ranges sharing one item.
    pub fn group_ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.entries.len() {
            if i == self.entries.len() || self.entries[i].item != self.entries[start].item {
                out.push((start, i));
                start = i;
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Rank pipeline

/// Per-operation ranks plus per-transaction depths.
#[derive(Clone, Debug)]
pub struct RankTable {
    pub entries: Vec<CollapsedOp>,
    /// Aligned with `entries`.
    pub ranks: Vec<u32>,
    /// Sorted by transaction id.
    depths: Vec<(u64, u32)>,
}

impl RankTable {
    pub fn depth_of(&self, txn: u64) -> u32 {
        match self.depths.binary_search_by_key(&txn, |d| d.0) {
            Ok(i) => self.depths[i].1,
            Err(_) => 0,
        }
    }

    pub fn depths(&self) -> &[(u64, u32)] {
        &self.depths
    }

    pub fn max_depth(&self) -> u32 {
        self.depths.iter().map(|d| d.1).max().unwrap_or(0)
    }

    pub fn zero_set(&self) -> Vec<u64> {
        self.depths
            .iter()
            .filter(|(_, d)| *d == 0)
            .map(|(t, _)| *t)
            .collect()
    }
}

/// The five-step pipeline: (1) sort ops by (item, id) — done by [`collapse_ops`];
/// (2) mark group boundaries; (3) scan ranks within each group, one worker per
/// group; (4) sort (id, rank) pairs; (5) per-transaction boundary maximum =
/// transaction depth. Steps 2–3 repeat until transaction depths stop changing,
/// which resolves rank constraints that cross items.
pub fn compute_ranks(pool: &PoolOps, parallel: bool) -> RankTable {
    let groups = pool.group_ranges();
    let n_txn = pool.txns.len();
    let depth_slots: Vec<AtomicU32> = (0..n_txn).map(|_| AtomicU32::new(0)).collect();
    let txn_slot = |txn: u64| pool.txns.binary_search(&txn).expect("txn listed");

    let mut ranks = vec![0u32; pool.entries.len()];
    loop {
        let changed = AtomicBool::new(false);
        // Disjoint rank slices per group; depths are shared monotone cells.
        {
            let mut rest: &mut [u32] = &mut ranks;
            let mut slices: Vec<&mut [u32]> = Vec::with_capacity(groups.len());
            let mut cut = 0;
            for &(s, e) in &groups {
                let (a, b) = rest.split_at_mut(e - cut);
                debug_assert_eq!(a.len(), e - s);
                slices.push(a);
                rest = b;
                cut = e;
            }
            par::for_each_slice(parallel, slices, |gi, rank_slice| {
                let (s, e) = groups[gi];
                let entries = &pool.entries[s..e];
                // Running maxima over earlier entries in the group, folding in
                // each transaction's currently-known depth.
                let mut max_any: Option<u32> = None;
                let mut max_write: Option<u32> = None;
                for (i, op) in entries.iter().enumerate() {
                    let rank = if op.write {
                        match max_any {
                            Some(m) => m + 1,
                            None => 0,
                        }
                    } else {
                        match max_write {
                            Some(m) => m + 1,
                            None => 0,
                        }
                    };
                    rank_slice[i] = rank;
                    let slot = &depth_slots[txn_slot(op.txn)];
                    let eff = rank.max(slot.load(Ordering::Relaxed));
                    if slot.fetch_max(rank, Ordering::Relaxed) < rank {
                        changed.store(true, Ordering::Relaxed);
                    }
                    max_any = Some(max_any.map_or(eff, |m| m.max(eff)));
                    if op.write {
                        max_write = Some(max_write.map_or(eff, |m| m.max(eff)));
                    }
                }
            });
        }
        if !changed.load(Ordering::Relaxed) {
            break;
        }
    }

    // Steps 4–5: sort (id, rank), take the maximum per transaction boundary.
    let mut by_txn: Vec<(u64, u32)> = pool
        .entries
        .iter()
        .zip(&ranks)
        .map(|(e, &r)| (e.txn, r))
        .collect();
    by_txn.sort_unstable();
    let mut depths: Vec<(u64, u32)> = Vec::with_capacity(n_txn);
    let mut iter = by_txn.into_iter().peekable();
    for &txn in &pool.txns {
        let mut depth = 0;
        while let Some(&(t, r)) = iter.peek() {
            if t != txn {
                break;
            }
            depth = depth.max(r);
            iter.next();
        }
        depths.push((txn, depth));
        debug_assert_eq!(
            depth,
            depth_slots[txn_slot(txn)].load(Ordering::Relaxed),
            "boundary scan and fixpoint slots disagree for txn {txn}"
        );
    }

    RankTable {
        entries: pool.entries.clone(),
        ranks,
        depths,
    }
}

// ---------------------------------------------------------------------------
// Explicit graph (oracle path)

/// Explicit dependency graph over a pool, built one transaction at a time in
/// increasing timestamp order via per-item transaction lists.
///
/// The per-item scan yields nearest conflicts on each item; an edge candidate
/// still falls to the third condition when some transaction between the two
/// endpoints conflicts with both through other items. Filtering at insertion
/// time is exact because later transactions can never sit between existing
/// ones.
#[derive(Default, Clone, Debug)]
pub struct TDependencyGraph {
    vertices: Vec<u64>,
    edges: BTreeSet<(u64, u64)>,
    per_item: HashMap<u64, Vec<(u64, bool)>>,
    /// Collapsed ops per transaction, sorted by item.
    txn_ops: HashMap<u64, Vec<(u64, bool)>>,
}

/// Two sorted per-item op lists conflict iff they share an item with at least
/// one write.
fn ops_conflict(a: &[(u64, bool)], b: &[(u64, bool)]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if a[i].1 || b[j].1 {
                    return true;
                }
                i += 1;
                j += 1;
            }
        }
    }
    false
}

impl TDependencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a transaction with its collapsed per-item ops (sorted by item).
    /// Must be called in increasing id order.
    pub fn add_txn(&mut self, txn: u64, ops: &[(u64, bool)]) {
        debug_assert!(self.vertices.last().is_none_or(|&v| v < txn));
        debug_assert!(ops.windows(2).all(|w| w[0].0 < w[1].0));
        let mut candidates: BTreeSet<u64> = BTreeSet::new();
        for &(item, write) in ops {
            let list = self.per_item.entry(item).or_default();
            if write {
                // Scan back to the last writer; every reader after it (or the
                // writer itself when it is the tail) is a nearest conflict.
                let last_write = list.iter().rposition(|&(_, w)| w);
                match last_write {
                    Some(iw) if iw == list.len() - 1 => {
                        candidates.insert(list[iw].0);
                    }
                    Some(iw) => {
                        candidates.extend(list[iw + 1..].iter().map(|&(r, _)| r));
                    }
                    None => {
                        candidates.extend(list.iter().map(|&(r, _)| r));
                    }
                }
            } else if let Some(&(writer, _)) = list.iter().rev().find(|&&(_, w)| w) {
                candidates.insert(writer);
            }
            list.push((txn, write));
        }
        for from in candidates {
            let from_ops = &self.txn_ops[&from];
            let lo = self.vertices.partition_point(|&v| v <= from);
            let shadowed = self.vertices[lo..]
                .iter()
                .take_while(|&&v| v < txn)
                .any(|v| {
                    let mid = &self.txn_ops[v];
                    ops_conflict(from_ops, mid) && ops_conflict(mid, ops)
                });
            if !shadowed {
                self.edges.insert((from, txn));
            }
        }
        self.txn_ops.insert(txn, ops.to_vec());
        self.vertices.push(txn);
    }

    pub fn vertices(&self) -> &[u64] {
        &self.vertices
    }

    pub fn edges(&self) -> &BTreeSet<(u64, u64)> {
        &self.edges
    }

    /// Longest-path depth per vertex; sources sit at depth zero. Edges always
    /// point from smaller to larger id, so a single id-ordered pass settles it.
    pub fn depths(&self) -> HashMap<u64, u32> {
        let mut preds: HashMap<u64, Vec<u64>> = HashMap::new();
        for &(a, b) in &self.edges {
            preds.entry(b).or_default().push(a);
        }
        let mut depth: HashMap<u64, u32> = HashMap::new();
        for &v in &self.vertices {
            let d = preds
                .get(&v)
                .map(|ps| ps.iter().map(|p| depth[p] + 1).max().unwrap())
                .unwrap_or(0);
            depth.insert(v, d);
        }
        depth
    }

    pub fn in_degrees(&self) -> HashMap<u64, usize> {
        let mut deg: HashMap<u64, usize> = self.vertices.iter().map(|&v| (v, 0)).collect();
        for &(_, b) in &self.edges {
            *deg.get_mut(&b).unwrap() += 1;
        }
        deg
    }

    /// Transitive successors of each root (the sub-DAG the recovery pass must
    /// repair when a root aborted after writing).
    pub fn descendants(&self, roots: &[u64]) -> BTreeSet<u64> {
        let mut succs: HashMap<u64, Vec<u64>> = HashMap::new();
        for &(a, b) in &self.edges {
            succs.entry(a).or_default().push(b);
        }
        let mut out = BTreeSet::new();
        let mut stack: Vec<u64> = roots.to_vec();
        while let Some(v) = stack.pop() {
            if let Some(next) = succs.get(&v) {
                for &n in next {
                    if out.insert(n) {
                        stack.push(n);
                    }
                }
            }
        }
        for r in roots {
            out.remove(r);
        }
        out
    }

    pub fn has_cycle(&self) -> bool {
        // Structural: every edge goes small -> large id.
        self.edges.iter().any(|&(a, b)| a >= b)
    }
}

/// Builds the explicit graph from per-transaction footprints
/// (ids must be increasing).
pub fn build_graph(txn_ops: &[(u64, Vec<BasicOp>)]) -> TDependencyGraph {
    let mut g = TDependencyGraph::new();
    for (txn, ops) in txn_ops {
        let mut collapsed: BTreeMap<u64, bool> = BTreeMap::new();
        for op in ops {
            let e = collapsed.entry(op.item.encode()).or_insert(false);
            *e |= op.write;
        }
        let list: Vec<(u64, bool)> = collapsed.into_iter().collect();
        g.add_txn(*txn, &list);
    }
    g
}

/// Line-oriented debug dump: one `txn <id> depth <d> -> a,b,c` line per
/// vertex, ids ascending.
pub fn dump_graph(g: &TDependencyGraph) -> String {
    let depths = g.depths();
    let mut succs: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &(a, b) in g.edges() {
        succs.entry(a).or_default().push(b);
    }
    let mut out = String::new();
    for &v in g.vertices() {
        let s = succs
            .get(&v)
            .map(|ss| {
                ss.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .unwrap_or_default();
        out.push_str(&format!("txn {} depth {} -> {}\n", v, depths[&v], s));
    }
    out
}

// ---------------------------------------------------------------------------
// Graph statistics

/// Structural parameters driving strategy choice: graph depth `d`, 0-set size
/// `w0`, and `c`, the cross-partition proxy.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct GraphStats {
    pub depth: u32,
    pub zero_set_size: usize,
    pub multi_pred: usize,
}

/// Stats from a rank table; `c` counts transactions whose footprint spans
/// more than one partition when spans are supplied.
pub fn stats_from_ranks(rt: &RankTable, spans: Option<&[PartitionSpan]>) -> GraphStats {
    let c = spans
        .map(|sp| {
            sp.iter()
                .filter(|s| matches!(s, PartitionSpan::Cross))
                .count()
        })
        .unwrap_or(0);
    GraphStats {
        depth: rt.max_depth(),
        zero_set_size: rt.zero_set().len(),
        multi_pred: c,
    }
}

/// Stats from the explicit graph; `c` falls back to in-degree > 1.
pub fn stats_from_graph(g: &TDependencyGraph) -> GraphStats {
    let depths = g.depths();
    GraphStats {
        depth: depths.values().copied().max().unwrap_or(0),
        zero_set_size: depths.values().filter(|&&d| d == 0).count(),
        multi_pred: g.in_degrees().values().filter(|&&d| d > 1).count(),
    }
}

// ---------------------------------------------------------------------------
// Incremental 0-set extraction

/// Peels 0-sets off a pool round by round. New transactions merge into the
/// per-item sorted lists; a removal only rescans the group heads it exposed,
/// so a full rank recomputation per round is never needed.
#[derive(Default)]
pub struct ZeroSetExtractor {
    groups: HashMap<u64, Group>,
    txns: BTreeMap<u64, TxnState>,
    ready: BTreeSet<u64>,
}

struct Group {
    entries: Vec<GroupEntry>,
    /// First live index.
    head: usize,
    /// First live write index (entries.len() when none).
    first_write: usize,
}

struct GroupEntry {
    txn: u64,
    write: bool,
    live: bool,
    notified: bool,
}

struct TxnState {
    blocked: usize,
    /// (item, index of this txn's entry in the group).
    slots: Vec<(u64, usize)>,
}

impl ZeroSetExtractor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pool(pool: &PoolOps) -> Self {
        let mut ex = Self::new();
        let mut by_txn: HashMap<u64, Vec<(u64, bool)>> = HashMap::new();
        for e in &pool.entries {
            by_txn.entry(e.txn).or_default().push((e.item, e.write));
        }
        for &txn in &pool.txns {
            let ops = by_txn.remove(&txn).unwrap_or_default();
            ex.insert_txn(txn, &ops);
        }
        ex
    }

    pub fn remaining(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }

    /// Merges a new transaction's collapsed ops at the group tails. Ids must
    /// arrive in increasing order.
    pub fn insert_txn(&mut self, txn: u64, ops: &[(u64, bool)]) {
        debug_assert!(!self.txns.contains_key(&txn));
        let mut collapsed: BTreeMap<u64, bool> = BTreeMap::new();
        for &(item, write) in ops {
            *collapsed.entry(item).or_insert(false) |= write;
        }
        let mut blocked = 0;
        let mut slots = Vec::with_capacity(collapsed.len());
        for (item, write) in collapsed {
            let group = self.groups.entry(item).or_insert(Group {
                entries: Vec::new(),
                head: 0,
                first_write: 0,
            });
            let idx = group.entries.len();
            // A tail write is unblocked iff nothing live precedes it; a tail
            // read iff no live write precedes it (first_write == idx means
            // there is none among the existing entries).
            let unblocked = if write {
                group.head == idx
            } else {
                group.first_write == idx
            };
            group.entries.push(GroupEntry {
                txn,
                write,
                live: true,
                notified: unblocked,
            });
            if !write && group.first_write == idx {
                // Still no live write; keep the sentinel at entries.len().
                group.first_write = idx + 1;
            }
            if !unblocked {
                blocked += 1;
            }
            slots.push((item, idx));
        }
        self.txns.insert(txn, TxnState { blocked, slots });
        if blocked == 0 {
            self.ready.insert(txn);
        }
    }

    /// Removes and returns the current 0-set (id order), up to `max`. The
    /// residual structure updates incrementally.
    pub fn extract(&mut self, max: Option<usize>) -> Vec<u64> {
        let take = max.unwrap_or(usize::MAX);
        let bulk: Vec<u64> = self.ready.iter().copied().take(take).collect();
        let mut touched: BTreeSet<u64> = BTreeSet::new();
        for &txn in &bulk {
            self.ready.remove(&txn);
            let state = self.txns.remove(&txn).expect("ready txn present");
            for (item, idx) in state.slots {
                let g = self.groups.get_mut(&item).expect("group exists");
                g.entries[idx].live = false;
                touched.insert(item);
            }
        }
        for item in touched {
            self.refresh_group(item);
        }
        bulk
    }

    /// Advances head/first-write past dead entries and notifies entries that
    /// lost their last in-group blocker.
    fn refresh_group(&mut self, item: u64) {
        let g = self.groups.get_mut(&item).expect("group exists");
        let n = g.entries.len();
        while g.head < n && !g.entries[g.head].live {
            g.head += 1;
        }
        if g.first_write < n && !g.entries[g.first_write].live {
            let mut fw = g.first_write + 1;
            while fw < n && !(g.entries[fw].live && g.entries[fw].write) {
                fw += 1;
            }
            g.first_write = fw;
        }
        let mut newly: Vec<u64> = Vec::new();
        // Reads before the first live write are unblocked.
        let scan_end = g.first_write.min(n);
        for i in g.head..scan_end {
            let e = &mut g.entries[i];
            if e.live && !e.write && !e.notified {
                e.notified = true;
                newly.push(e.txn);
            }
        }
        // A write is unblocked only as the first live entry.
        if g.head < n && g.head == g.first_write {
            let e = &mut g.entries[g.head];
            if e.live && e.write && !e.notified {
                e.notified = true;
                newly.push(e.txn);
            }
        }
        for txn in newly {
            let st = self.txns.get_mut(&txn).expect("live txn");
            st.blocked -= 1;
            if st.blocked == 0 {
                self.ready.insert(txn);
            }
        }
    }
}
