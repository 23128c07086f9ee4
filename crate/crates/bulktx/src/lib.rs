//! In-memory OLTP bulk-execution engine.
//!
//! Pre-registered stored-procedure transactions are submitted to a pool,
//! batched into bulks by logical arrival time, and executed over a fixed set
//! of worker lanes under one of three interchangeable concurrency strategies:
//!
//! * counter-keyed two-phase locking (deterministic timestamp order),
//! * partition-per-lane execution (lock-free, single-partition only),
//! * iterative 0-set execution driven by the timestamped dependency graph.
//!
//! Every strategy must reproduce the sequential execution of the bulk in
//! timestamp order — the driver checks that equivalence on every run before
//! reporting throughput.

pub mod config;
pub mod depgraph;
pub mod driver;
pub mod exec;
pub mod par;
pub mod planner;
pub mod report;
pub mod storage;
pub mod txmodel;
pub mod verify;
pub mod workload;

pub use config::{EngineConfig, StrategyChoice};
pub use driver::{run_generated, run_workload, RunResult};
pub use exec::{ExecOutcome, ExecutorConfig, Strategy};
pub use storage::{ColumnStore, DataItemId, Snapshot};
pub use txmodel::{Registry, TxnSignature, TxnStatus};
pub use workload::{WorkloadKind, WorkloadSpec};
