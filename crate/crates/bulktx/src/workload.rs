//! Workload generators: the controlled micro benchmark plus desk-scale
//! analogues of two public OLTP benchmarks (a bank-branch stress test and a
//! telecom subscriber workload). Generation is deterministic in the seed;
//! the same spec always produces byte-identical schema and workload files.
//!
//! Sizing: the micro workload uses `tuple_count` rows in one table. The
//! branch workload uses `scale` branches with `tuple_count` accounts spread
//! over them. The telecom workload uses `scale * 100` subscribers, one
//! facility row each, and `subscribers / 2` initial call-forwarding rows.

use crate::storage::{CellValue, ColumnDecl, ColumnKind, ColumnStore, DataItemId};
use crate::txmodel::{Abort, PartitionSpan, Registry, TxnSignature, TxnType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum WorkloadKind {
    Micro,
    TpcbLike,
    Tm1Like,
}

impl WorkloadKind {
    pub fn name(&self) -> &'static str {
        match self {
            WorkloadKind::Micro => "micro",
            WorkloadKind::TpcbLike => "tpcb",
            WorkloadKind::Tm1Like => "tm1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "micro" => Some(WorkloadKind::Micro),
            "tpcb" | "tpcb_like" => Some(WorkloadKind::TpcbLike),
            "tm1" | "tm1_like" => Some(WorkloadKind::Tm1Like),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// T: number of registered transaction types (micro).
    pub type_count: u32,
    /// x: each transaction runs the synthetic kernel 100*x times.
    pub compute: u32,
    /// Probability of hitting the first tuple; the rest is uniform.
    pub alpha: f64,
    pub tuple_count: u64,
    pub txn_count: u64,
    /// f: partition-count driver for the public analogues.
    pub scale: u64,
    /// Probability of an injected abort on the abort-capable types.
    pub abort_rate: f64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            kind: WorkloadKind::Micro,
            type_count: 8,
            compute: 16,
            alpha: 0.0,
            tuple_count: 65_536,
            txn_count: 16_384,
            scale: 8,
            abort_rate: 0.0,
            seed: 1,
        }
    }
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("tuple_count must be > 0")]
    NoTuples,
    #[error("scale factor must be >= 1")]
    BadScale,
    #[error("alpha must lie in [0, 1]")]
    BadAlpha,
    #[error("type_count must be >= 1")]
    NoTypes,
    #[error("workload parse: {0}")]
    Parse(String),
}

/// Everything a run needs: schema text (load format) plus submissions.
#[derive(Debug)]
pub struct GeneratedWorkload {
    pub spec: WorkloadSpec,
    pub schema_text: String,
    pub txns: Vec<TxnSignature>,
}

/// Iterated integer mix standing in for per-transaction computation. The
/// chain is data-dependent so the optimizer cannot collapse the loop; the
/// weight knob is the paper-style 100*x iteration count.
#[inline]
pub fn compute_mix(seed: i64, iters: u64) -> i64 {
    let mut s = seed as u64;
    for _ in 0..iters {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        s ^= s >> 29;
    }
    s as i64
}

fn fixed(name: &str) -> ColumnDecl {
    ColumnDecl {
        name: name.into(),
        kind: ColumnKind::Fixed,
    }
}

fn var(name: &str) -> ColumnDecl {
    ColumnDecl {
        name: name.into(),
        kind: ColumnKind::Var,
    }
}

fn validate(spec: &WorkloadSpec) -> Result<(), WorkloadError> {
    if !(0.0..=1.0).contains(&spec.alpha) {
        return Err(WorkloadError::BadAlpha);
    }
    match spec.kind {
        WorkloadKind::Micro => {
            if spec.tuple_count == 0 {
                return Err(WorkloadError::NoTuples);
            }
            if spec.type_count == 0 {
                return Err(WorkloadError::NoTypes);
            }
        }
        WorkloadKind::TpcbLike | WorkloadKind::Tm1Like => {
            if spec.scale == 0 {
                return Err(WorkloadError::BadScale);
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Micro benchmark: every transaction reads one tuple, computes, writes back.

const MICRO_VAL: u32 = 1; // column index of the value column

fn micro_store(spec: &WorkloadSpec) -> ColumnStore {
    let mut s = ColumnStore::new();
    let t = s
        .add_table("tuples", vec![fixed("id"), fixed("val")], 0, Some(0))
        .unwrap();
    for i in 0..spec.tuple_count {
        s.append_row(t, &[CellValue::Int(i as i64), CellValue::Int(0)])
            .unwrap();
    }
    s
}

fn micro_registry(spec: &WorkloadSpec, partition_size: u64) -> Registry {
    let mut reg = Registry::new();
    let iters = 100 * spec.compute as u64;
    for type_id in 0..spec.type_count as u16 {
        let salt = 0x9E37_79B9u64
            .wrapping_mul(type_id as u64 + 1)
            .wrapping_add(0x7F4A_7C15) as i64;
        let ps = partition_size.max(1);
        reg.register_type(TxnType {
            type_id,
            name: format!("micro_{type_id}"),
            two_phase: true,
            body: Arc::new(move |ctx, params| {
                let item = DataItemId::new(0, MICRO_VAL, params[0] as u64);
                let v = ctx.read_int(item)?;
                let out = compute_mix(v ^ salt, iters);
                ctx.write_int(item, out)?;
                Ok(())
            }),
            footprint: Arc::new(|_, params| {
                let item = DataItemId::new(0, MICRO_VAL, params[0] as u64);
                Ok(vec![(item, false), (item, true)])
            }),
            partition: Arc::new(move |params| {
                PartitionSpan::Single((params[0] as u64 / ps) as u32)
            }),
            root_key: None,
        })
        .unwrap();
    }
    reg
}

fn gen_micro(spec: &WorkloadSpec) -> (ColumnStore, Vec<TxnSignature>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let store = micro_store(spec);
    let txns = (0..spec.txn_count)
        .map(|id| {
            let type_id = rng.gen_range(0..spec.type_count) as u16;
            let row = if rng.gen_bool(spec.alpha) {
                0
            } else {
                rng.gen_range(0..spec.tuple_count)
            };
            TxnSignature {
                id,
                type_id,
                params: vec![row as i64],
                arrival_us: 0,
            }
        })
        .collect();
    (store, txns)
}

// ---------------------------------------------------------------------------
// Branch workload: one type updating a branch balance plus one of its
// accounts. The branch id partitions the data and roots the lock tree.

const BR_BALANCE: u32 = 1;
const ACCT_BALANCE: u32 = 2;

fn tpcb_store(spec: &WorkloadSpec) -> ColumnStore {
    let mut s = ColumnStore::new();
    let b = s
        .add_table("branches", vec![fixed("id"), fixed("balance")], 0, Some(0))
        .unwrap();
    let a = s
        .add_table(
            "accounts",
            vec![fixed("id"), fixed("branch"), fixed("balance")],
            0,
            Some(1),
        )
        .unwrap();
    let per_branch = (spec.tuple_count / spec.scale).max(1);
    for i in 0..spec.scale {
        s.append_row(b, &[CellValue::Int(i as i64), CellValue::Int(0)])
            .unwrap();
    }
    for i in 0..spec.scale * per_branch {
        let branch = (i / per_branch) as i64;
        s.append_row(
            a,
            &[CellValue::Int(i as i64), CellValue::Int(branch), CellValue::Int(0)],
        )
        .unwrap();
    }
    s
}

fn tpcb_registry(spec: &WorkloadSpec) -> Registry {
    let mut reg = Registry::new();
    let iters = 100 * spec.compute as u64;
    reg.register_type(TxnType {
        type_id: 0,
        name: "branch_update".into(),
        two_phase: true,
        body: Arc::new(move |ctx, params| {
            let (branch, account, delta) = (params[0] as u64, params[1] as u64, params[2]);
            let b = DataItemId::new(0, BR_BALANCE, branch);
            let v = ctx.read_int(b)?;
            // Computation weight only; the balance math stays exact.
            std::hint::black_box(compute_mix(v ^ delta, iters));
            ctx.write_int(b, v + delta)?;
            let a = DataItemId::new(1, ACCT_BALANCE, account);
            let av = ctx.read_int(a)?;
            ctx.write_int(a, av + delta)?;
            Ok(())
        }),
        footprint: Arc::new(|_, params| {
            let b = DataItemId::new(0, BR_BALANCE, params[0] as u64);
            let a = DataItemId::new(1, ACCT_BALANCE, params[1] as u64);
            Ok(vec![(b, false), (b, true), (a, false), (a, true)])
        }),
        partition: Arc::new(|params| PartitionSpan::Single(params[0] as u32)),
        root_key: Some(Arc::new(|params| params[0])),
    })
    .unwrap();
    reg.declare_root_lock(0, &[0, 1]);
    reg
}

fn gen_tpcb(spec: &WorkloadSpec) -> (ColumnStore, Vec<TxnSignature>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let store = tpcb_store(spec);
    let per_branch = (spec.tuple_count / spec.scale).max(1);
    let txns = (0..spec.txn_count)
        .map(|id| {
            let branch = rng.gen_range(0..spec.scale);
            let account = branch * per_branch + rng.gen_range(0..per_branch);
            let delta = rng.gen_range(-100..=100i64);
            TxnSignature {
                id,
                type_id: 0,
                params: vec![branch as i64, account as i64, delta],
                arrival_us: 0,
            }
        })
        .collect();
    (store, txns)
}

// ---------------------------------------------------------------------------
// Telecom workload: seven subscriber-keyed procedures plus the split-off
// subscriber lookup. Lookup-style updates are emitted as two submissions.

pub const TM1_READ_SUB: u16 = 0;
pub const TM1_GET_DESTINATION: u16 = 1;
pub const TM1_READ_FACILITY: u16 = 2;
pub const TM1_UPDATE_SUB: u16 = 3; // not two-phase: writes, then may abort
pub const TM1_UPDATE_LOCATION: u16 = 4;
pub const TM1_INSERT_FWD: u16 = 5;
pub const TM1_DELETE_FWD: u16 = 6;
pub const TM1_LOOKUP_SUB: u16 = 7;

const SUB_LOCATION: u32 = 1;
const SUB_DATA: u32 = 2;
const FAC_ACTIVE: u32 = 1;
const FAC_DATA: u32 = 2;
const FWD_SUB: u32 = 1;
const FWD_ACTIVE: u32 = 2;
const FWD_NUMBER: u32 = 3;

fn tm1_subscribers(spec: &WorkloadSpec) -> u64 {
    spec.scale * 100
}

fn tm1_store(spec: &WorkloadSpec) -> ColumnStore {
    let mut s = ColumnStore::new();
    let subs = tm1_subscribers(spec);
    let t_sub = s
        .add_table(
            "subscribers",
            vec![fixed("id"), fixed("location"), fixed("data")],
            0,
            Some(0),
        )
        .unwrap();
    let t_fac = s
        .add_table(
            "facilities",
            vec![fixed("id"), fixed("active"), fixed("fdata")],
            0,
            Some(0),
        )
        .unwrap();
    let t_fwd = s
        .add_table(
            "forwarding",
            vec![fixed("id"), fixed("sub"), fixed("active"), var("number")],
            0,
            Some(1),
        )
        .unwrap();
    for i in 0..subs {
        s.append_row(
            t_sub,
            &[CellValue::Int(i as i64), CellValue::Int(0), CellValue::Int(0)],
        )
        .unwrap();
        s.append_row(
            t_fac,
            &[CellValue::Int(i as i64), CellValue::Int(1), CellValue::Int(0)],
        )
        .unwrap();
    }
    for cf in 0..subs / 2 {
        let sub = (cf * 2) % subs;
        s.append_row(
            t_fwd,
            &[
                CellValue::Int(cf as i64),
                CellValue::Int(sub as i64),
                CellValue::Int(1),
                CellValue::Bytes(format!("nr-{cf}").into_bytes()),
            ],
        )
        .unwrap();
    }
    s
}

fn tm1_registry(spec: &WorkloadSpec, partition_size: u64) -> Registry {
    let mut reg = Registry::new();
    let iters = 100 * spec.compute as u64;
    let ps = partition_size.max(1);
    let part_by_sub: crate::txmodel::PartitionFn =
        Arc::new(move |params: &[i64]| PartitionSpan::Single((params[0] as u64 / ps) as u32));
    let root_by_sub: crate::txmodel::RootKeyFn = Arc::new(|params: &[i64]| params[0]);

    // Footprint helper for call-forwarding lookups: the pk-cell read always
    // happens when the key is indexed; follow-on ops only when the row is live.
    let fwd_lookup_items = |ctx: &crate::txmodel::FootprintCtx<'_>,
                            cf: i64|
     -> (Option<DataItemId>, Option<u64>) {
        match ctx.pk_row_any(2, cf) {
            Some(row) => {
                let pk = DataItemId::new(2, 0, row);
                let live = ctx.lookup_pk(2, cf);
                (Some(pk), live)
            }
            None => (None, None),
        }
    };

    reg.register_type(TxnType {
        type_id: TM1_READ_SUB,
        name: "read_subscriber".into(),
        two_phase: true,
        body: Arc::new(move |ctx, params| {
            let sub = params[0] as u64;
            let loc = ctx.read_int(DataItemId::new(0, SUB_LOCATION, sub))?;
            let data = ctx.read_int(DataItemId::new(0, SUB_DATA, sub))?;
            let _ = compute_mix(loc ^ data, iters);
            Ok(())
        }),
        footprint: Arc::new(|_, params| {
            let sub = params[0] as u64;
            Ok(vec![
                (DataItemId::new(0, SUB_LOCATION, sub), false),
                (DataItemId::new(0, SUB_DATA, sub), false),
            ])
        }),
        partition: part_by_sub.clone(),
        root_key: Some(root_by_sub.clone()),
    })
    .unwrap();

    let fwd_items = fwd_lookup_items;
    reg.register_type(TxnType {
        type_id: TM1_GET_DESTINATION,
        name: "get_destination".into(),
        two_phase: true,
        body: Arc::new(move |ctx, params| {
            let cf = params[1];
            let row = ctx.lookup_pk(2, cf)?.ok_or(Abort::code(5))?;
            let active = ctx.read_int(DataItemId::new(2, FWD_ACTIVE, row))?;
            if active == 0 {
                return Err(Abort::code(5));
            }
            let _ = ctx.read_bytes(DataItemId::new(2, FWD_NUMBER, row))?;
            Ok(())
        }),
        footprint: Arc::new(move |ctx, params| {
            let (pk, live) = fwd_items(ctx, params[1]);
            let mut ops = Vec::new();
            if let Some(pk) = pk {
                ops.push((pk, false));
            }
            if let Some(row) = live {
                ops.push((DataItemId::new(2, FWD_ACTIVE, row), false));
                ops.push((DataItemId::new(2, FWD_NUMBER, row), false));
            }
            Ok(ops)
        }),
        partition: part_by_sub.clone(),
        root_key: Some(root_by_sub.clone()),
    })
    .unwrap();

    reg.register_type(TxnType {
        type_id: TM1_READ_FACILITY,
        name: "read_facility".into(),
        two_phase: true,
        body: Arc::new(move |ctx, params| {
            let sub = params[0] as u64;
            let a = ctx.read_int(DataItemId::new(1, FAC_ACTIVE, sub))?;
            let d = ctx.read_int(DataItemId::new(1, FAC_DATA, sub))?;
            let _ = compute_mix(a ^ d, iters);
            Ok(())
        }),
        footprint: Arc::new(|_, params| {
            let sub = params[0] as u64;
            Ok(vec![
                (DataItemId::new(1, FAC_ACTIVE, sub), false),
                (DataItemId::new(1, FAC_DATA, sub), false),
            ])
        }),
        partition: part_by_sub.clone(),
        root_key: Some(root_by_sub.clone()),
    })
    .unwrap();

    // Writes subscriber data and facility data, then decides; an injected
    // abort lands after the writes, which is exactly what forces undo
    // logging and the dependent rollback path under counter locks.
    reg.register_type(TxnType {
        type_id: TM1_UPDATE_SUB,
        name: "update_subscriber".into(),
        two_phase: false,
        body: Arc::new(move |ctx, params| {
            let (sub, delta, abort_flag) = (params[0] as u64, params[1], params[2]);
            let d = DataItemId::new(0, SUB_DATA, sub);
            let v = ctx.read_int(d)?;
            ctx.write_int(d, compute_mix(v + delta, iters.min(32)))?;
            let f = DataItemId::new(1, FAC_DATA, sub);
            let fv = ctx.read_int(f)?;
            ctx.write_int(f, fv + delta)?;
            if abort_flag != 0 {
                return Err(Abort::code(2));
            }
            Ok(())
        }),
        footprint: Arc::new(|_, params| {
            let sub = params[0] as u64;
            let d = DataItemId::new(0, SUB_DATA, sub);
            let f = DataItemId::new(1, FAC_DATA, sub);
            Ok(vec![(d, false), (d, true), (f, false), (f, true)])
        }),
        partition: part_by_sub.clone(),
        root_key: Some(root_by_sub.clone()),
    })
    .unwrap();

    reg.register_type(TxnType {
        type_id: TM1_UPDATE_LOCATION,
        name: "update_location".into(),
        two_phase: true,
        body: Arc::new(|ctx, params| {
            let (sub, newloc, abort_flag) = (params[0] as u64, params[1], params[2]);
            let l = DataItemId::new(0, SUB_LOCATION, sub);
            let _ = ctx.read_int(l)?;
            if abort_flag != 0 {
                return Err(Abort::code(1));
            }
            ctx.write_int(l, newloc)?;
            Ok(())
        }),
        footprint: Arc::new(|_, params| {
            let l = DataItemId::new(0, SUB_LOCATION, params[0] as u64);
            Ok(vec![(l, false), (l, true)])
        }),
        partition: part_by_sub.clone(),
        root_key: Some(root_by_sub.clone()),
    })
    .unwrap();

    reg.register_type(TxnType {
        type_id: TM1_INSERT_FWD,
        name: "insert_forwarding".into(),
        two_phase: true,
        body: Arc::new(|ctx, params| {
            let (sub, cf, seq) = (params[0], params[1], params[2]);
            if ctx.lookup_pk(2, cf)?.is_some() {
                return Err(Abort::code(3));
            }
            ctx.insert_row(
                2,
                vec![
                    CellValue::Int(cf),
                    CellValue::Int(sub),
                    CellValue::Int(1),
                    CellValue::Bytes(format!("nr-{seq}").into_bytes()),
                ],
            )?;
            Ok(())
        }),
        footprint: Arc::new(move |ctx, params| {
            let (pk, _) = fwd_items(ctx, params[1]);
            Ok(pk.map(|p| (p, false)).into_iter().collect())
        }),
        partition: part_by_sub.clone(),
        root_key: Some(root_by_sub.clone()),
    })
    .unwrap();

    reg.register_type(TxnType {
        type_id: TM1_DELETE_FWD,
        name: "delete_forwarding".into(),
        two_phase: true,
        body: Arc::new(|ctx, params| {
            let cf = params[1];
            let row = ctx.lookup_pk(2, cf)?.ok_or(Abort::code(4))?;
            ctx.delete_row(2, row)?;
            Ok(())
        }),
        footprint: Arc::new(move |ctx, params| {
            let (pk, live) = fwd_items(ctx, params[1]);
            let mut ops = Vec::new();
            if let Some(pk) = pk {
                ops.push((pk, false));
            }
            if let Some(row) = live {
                for col in 0..ctx.columns(2) as u32 {
                    ops.push((DataItemId::new(2, col, row), true));
                }
            }
            Ok(ops)
        }),
        partition: part_by_sub.clone(),
        root_key: Some(root_by_sub.clone()),
    })
    .unwrap();

    reg.register_type(TxnType {
        type_id: TM1_LOOKUP_SUB,
        name: "lookup_subscriber".into(),
        two_phase: true,
        body: Arc::new(|ctx, params| {
            // Models the static string-to-id resolution half of the split
            // transactions: a read against the subscriber row.
            let _ = ctx.read_int(DataItemId::new(0, 0, params[0] as u64))?;
            Ok(())
        }),
        footprint: Arc::new(|_, params| {
            Ok(vec![(DataItemId::new(0, 0, params[0] as u64), false)])
        }),
        partition: part_by_sub.clone(),
        root_key: Some(root_by_sub.clone()),
    })
    .unwrap();

    reg.declare_root_lock(0, &[0, 1, 2]);
    let _ = FWD_SUB;
    reg
}

fn gen_tm1(spec: &WorkloadSpec) -> (ColumnStore, Vec<TxnSignature>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let store = tm1_store(spec);
    let subs = tm1_subscribers(spec);
    // Ownership ledger for call-forwarding keys, mirroring the initial rows.
    let mut owner: HashMap<i64, i64> = (0..subs / 2)
        .map(|cf| (cf as i64, ((cf * 2) % subs) as i64))
        .collect();
    let mut next_cf = (subs / 2) as i64;
    // Keys already targeted by an insert or delete. A duplicate-key insert is
    // only generated against untouched initial rows, so the row is guaranteed
    // live at execution and the abort is deterministic; without this a second
    // insert of a still-pending key would blow up the batched merge.
    let mut touched: HashSet<i64> = HashSet::new();
    let mut txns: Vec<TxnSignature> = Vec::with_capacity(spec.txn_count as usize);
    let mut id = 0u64;
    let push = |txns: &mut Vec<TxnSignature>, id: &mut u64, type_id: u16, params: Vec<i64>| {
        txns.push(TxnSignature {
            id: *id,
            type_id,
            params,
            arrival_us: 0,
        });
        *id += 1;
    };
    while id < spec.txn_count {
        let sub = rng.gen_range(0..subs) as i64;
        let action = rng.gen_range(0..7u32);
        let abort = rng.gen_bool(spec.abort_rate) as i64;
        match action {
            0 => push(&mut txns, &mut id, TM1_READ_SUB, vec![sub]),
            1 => {
                let cf = rng.gen_range(0..next_cf.max(1));
                let s = owner.get(&cf).copied().unwrap_or(sub);
                push(&mut txns, &mut id, TM1_GET_DESTINATION, vec![s, cf]);
            }
            2 => push(&mut txns, &mut id, TM1_READ_FACILITY, vec![sub]),
            3 => push(
                &mut txns,
                &mut id,
                TM1_UPDATE_SUB,
                vec![sub, rng.gen_range(-50..=50), abort],
            ),
            4 => {
                push(&mut txns, &mut id, TM1_LOOKUP_SUB, vec![sub]);
                if id < spec.txn_count {
                    push(
                        &mut txns,
                        &mut id,
                        TM1_UPDATE_LOCATION,
                        vec![sub, rng.gen_range(0..1 << 20), abort],
                    );
                }
            }
            5 => {
                // Mostly fresh keys; sometimes an untouched initial one,
                // which is still live and aborts as a duplicate.
                let initial = (subs / 2) as i64;
                let dup = rng.gen_bool(0.25).then(|| {
                    (0..8)
                        .map(|_| rng.gen_range(0..initial))
                        .find(|cf| !touched.contains(cf))
                });
                let (cf, s) = match dup.flatten() {
                    Some(cf) => (cf, owner[&cf]),
                    None => {
                        let cf = next_cf;
                        next_cf += 1;
                        owner.insert(cf, sub);
                        (cf, sub)
                    }
                };
                touched.insert(cf);
                push(&mut txns, &mut id, TM1_LOOKUP_SUB, vec![s]);
                if id < spec.txn_count {
                    push(&mut txns, &mut id, TM1_INSERT_FWD, vec![s, cf, cf]);
                }
            }
            _ => {
                let cf = rng.gen_range(0..next_cf.max(1));
                let s = owner.get(&cf).copied().unwrap_or(sub);
                touched.insert(cf);
                push(&mut txns, &mut id, TM1_LOOKUP_SUB, vec![s]);
                if id < spec.txn_count {
                    push(&mut txns, &mut id, TM1_DELETE_FWD, vec![s, cf]);
                }
            }
        }
    }
    (store, txns)
}

// ---------------------------------------------------------------------------

/// Generates schema and submissions for a spec.
pub fn generate(spec: &WorkloadSpec) -> Result<GeneratedWorkload, WorkloadError> {
    validate(spec)?;
    let (store, txns) = match spec.kind {
        WorkloadKind::Micro => gen_micro(spec),
        WorkloadKind::TpcbLike => gen_tpcb(spec),
        WorkloadKind::Tm1Like => gen_tm1(spec),
    };
    Ok(GeneratedWorkload {
        spec: *spec,
        schema_text: crate::storage::dump_store(&store),
        txns,
    })
}

/// Builds the procedure registry for a spec (partition extractors capture the
/// configured partition size).
pub fn build_registry(spec: &WorkloadSpec, partition_size: u64) -> Registry {
    match spec.kind {
        WorkloadKind::Micro => micro_registry(spec, partition_size),
        WorkloadKind::TpcbLike => tpcb_registry(spec),
        WorkloadKind::Tm1Like => tm1_registry(spec, partition_size),
    }
}

/// Registered type count for a spec.
pub fn registered_types(spec: &WorkloadSpec) -> u32 {
    match spec.kind {
        WorkloadKind::Micro => spec.type_count,
        WorkloadKind::TpcbLike => 1,
        WorkloadKind::Tm1Like => 8,
    }
}

// ---------------------------------------------------------------------------
// Workload file format: `# spec` header + one transaction per line.

pub fn write_workload_file(w: &GeneratedWorkload) -> String {
    let s = &w.spec;
    let mut out = format!(
        "# spec kind={} types={} compute={} alpha={} tuples={} txns={} scale={} abort_rate={} seed={}\n",
        s.kind.name(),
        s.type_count,
        s.compute,
        s.alpha,
        s.tuple_count,
        s.txn_count,
        s.scale,
        s.abort_rate,
        s.seed
    );
    out.push_str(&crate::txmodel::write_workload_lines(&w.txns));
    out
}

pub fn parse_workload_file(text: &str) -> Result<GeneratedWorkload, WorkloadError> {
    let mut spec = WorkloadSpec::default();
    let mut saw_spec = false;
    for line in text.lines() {
        let l = line.trim();
        if let Some(rest) = l.strip_prefix("# spec ") {
            saw_spec = true;
            for kv in rest.split_whitespace() {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| WorkloadError::Parse(format!("bad spec field {kv:?}")))?;
                let bad = |e: &dyn std::fmt::Display| {
                    WorkloadError::Parse(format!("spec {k}: {e}"))
                };
                match k {
                    "kind" => {
                        spec.kind = WorkloadKind::parse(v)
                            .ok_or_else(|| WorkloadError::Parse(format!("kind {v:?}")))?
                    }
                    "types" => spec.type_count = v.parse().map_err(|e| bad(&e))?,
                    "compute" => spec.compute = v.parse().map_err(|e| bad(&e))?,
                    "alpha" => spec.alpha = v.parse().map_err(|e| bad(&e))?,
                    "tuples" => spec.tuple_count = v.parse().map_err(|e| bad(&e))?,
                    "txns" => spec.txn_count = v.parse().map_err(|e| bad(&e))?,
                    "scale" => spec.scale = v.parse().map_err(|e| bad(&e))?,
                    "abort_rate" => spec.abort_rate = v.parse().map_err(|e| bad(&e))?,
                    "seed" => spec.seed = v.parse().map_err(|e| bad(&e))?,
                    other => {
                        return Err(WorkloadError::Parse(format!("unknown spec key {other:?}")))
                    }
                }
            }
        }
    }
    if !saw_spec {
        return Err(WorkloadError::Parse("missing `# spec` header".into()));
    }
    let lines = crate::txmodel::parse_workload_lines(text).map_err(WorkloadError::Parse)?;
    let mut txns = Vec::with_capacity(lines.len());
    for (i, (id, type_id, params)) in lines.into_iter().enumerate() {
        txns.push(TxnSignature {
            id: id.unwrap_or(i as u64),
            type_id,
            params,
            arrival_us: 0,
        });
    }
    // The schema is regenerated from the spec (generation is deterministic).
    let (store, _) = match spec.kind {
        WorkloadKind::Micro => gen_micro(&spec),
        WorkloadKind::TpcbLike => gen_tpcb(&spec),
        WorkloadKind::Tm1Like => gen_tm1(&spec),
    };
    Ok(GeneratedWorkload {
        spec,
        schema_text: crate::storage::dump_store(&store),
        txns,
    })
}
