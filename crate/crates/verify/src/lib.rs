//! Verification tooling for `cmpq`: a deterministic scheduler that explores
//! interleavings of the real queue code, history checkers, a reclamation log
//! auditor and fault-injection scenarios.

pub mod check;
pub mod explore;
pub mod history;
pub mod scenarios;
pub mod sched;
pub mod strategy;
pub mod stress;
pub mod trace;

pub use check::{
    audit_reclamation_log, check_linearizable_fifo, check_sequential_fifo, AuditViolation,
    CheckError, FifoViolation, LinearizabilityViolation, Verdict, MAX_LIN_OPS, MAX_LIN_THREADS,
};
pub use explore::{
    explore_interleavings, explore_with, run_once, ExploreConfig, ExploreMode, Exploration,
    Execution, Scenario, ScriptOp, StallHandle, ThreadScript,
};
pub use history::{EventKind, HistoryBuilder, OpEvent, OpHistory, Payload};
pub use sched::{Ctx, ExecError, Granularity, HistoryMode};
