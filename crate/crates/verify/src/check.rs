//! History and log checkers.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use cmpq::{is_reclaimable, safe_cycle, ReclaimRecord};
use thiserror::Error;

use crate::history::{HistoryError, OpHistory, OpKind, Operation, Payload};

/// Largest history the brute-force linearizability search accepts.
pub const MAX_LIN_THREADS: usize = 3;
pub const MAX_LIN_OPS: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict<W> {
    Pass,
    Fail(W),
}

impl<W> Verdict<W> {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn witness(&self) -> Option<&W> {
        match self {
            Verdict::Pass => None,
            Verdict::Fail(w) => Some(w),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("malformed history: {0}")]
    Malformed(#[from] HistoryError),
    #[error("history is not sequential: {0}")]
    NotSequential(&'static str),
    #[error("history too large for brute force: {threads} threads, {ops} completed operations")]
    BoundExceeded { threads: usize, ops: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FifoViolation {
    /// `dequeued` came out while `expected`, enqueued earlier, was still in.
    Inversion { dequeued: u64, expected: u64 },
    /// Dequeued a payload that was not in the queue.
    Phantom(u64),
    /// Reported empty while `front` was queued.
    SpuriousEmpty { front: u64 },
    ResidueMismatch { expected: Vec<u64>, actual: Vec<u64> },
}

impl fmt::Display for FifoViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FifoViolation::Inversion { dequeued, expected } => {
                write!(f, "inversion ({dequeued},{expected}): dequeued {dequeued} before {expected}")
            }
            FifoViolation::Phantom(v) => write!(f, "dequeued {v}, which was not in the queue"),
            FifoViolation::SpuriousEmpty { front } => {
                write!(f, "reported EMPTY while {front} was queued")
            }
            FifoViolation::ResidueMismatch { expected, actual } => {
                write!(f, "residue {actual:?}, expected {expected:?}")
            }
        }
    }
}

/// Exact FIFO check for a history produced by a single thread.
pub fn check_sequential_fifo(history: &OpHistory) -> Result<Verdict<FifoViolation>, CheckError> {
    let ops = history.operations()?;
    if history.threads() > 1 {
        return Err(CheckError::NotSequential("more than one thread"));
    }
    if ops.iter().any(|o| o.returned.is_none()) {
        return Err(CheckError::NotSequential("pending operation"));
    }
    let mut model: VecDeque<u64> = history.initial.iter().copied().collect();
    for op in &ops {
        match op.kind {
            OpKind::Enq(v) => model.push_back(v),
            OpKind::Deq(Payload::Id(v)) => match model.front() {
                Some(&front) if front == v => {
                    model.pop_front();
                }
                Some(&front) if model.contains(&v) => {
                    return Ok(Verdict::Fail(FifoViolation::Inversion {
                        dequeued: v,
                        expected: front,
                    }))
                }
                _ => return Ok(Verdict::Fail(FifoViolation::Phantom(v))),
            },
            OpKind::Deq(Payload::Empty) => {
                if let Some(&front) = model.front() {
                    return Ok(Verdict::Fail(FifoViolation::SpuriousEmpty { front }));
                }
            }
            OpKind::Deq(_) => {}
        }
    }
    let expected: Vec<u64> = model.into_iter().collect();
    if expected != history.residue {
        return Ok(Verdict::Fail(FifoViolation::ResidueMismatch {
            expected,
            actual: history.residue.clone(),
        }));
    }
    Ok(Verdict::Pass)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearizabilityViolation {
    /// Longest prefix of operations (indices into the paired operation list)
    /// that could be linearized.
    pub longest_prefix: Vec<usize>,
    pub operations: Vec<Operation>,
}

impl fmt::Display for LinearizabilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "no FIFO linearization exists; longest consistent prefix:")?;
        for &i in &self.longest_prefix {
            let o = &self.operations[i];
            writeln!(f, "  op {i}: thread {} {:?} [{}, {:?}]", o.thread_id, o.kind, o.invoked, o.returned)?;
        }
        write!(f, "  ({} of {} operations)", self.longest_prefix.len(), self.operations.len())
    }
}

struct Search<'a> {
    ops: &'a [Operation],
    residue: &'a [u64],
    required: u32,
    failed: HashSet<(u32, Vec<u64>)>,
    path: Vec<usize>,
    best: Vec<usize>,
}

impl Search<'_> {
    fn run(&mut self, done: u32, queue: &mut VecDeque<u64>) -> bool {
        if done & self.required == self.required && queue.iter().eq(self.residue.iter()) {
            return true;
        }
        let key = (done, queue.iter().copied().collect::<Vec<_>>());
        if self.failed.contains(&key) {
            return false;
        }
        // An operation may go next only if no other outstanding operation
        // returned before it was invoked.
        let horizon = self
            .ops
            .iter()
            .enumerate()
            .filter(|(i, _)| done & (1 << i) == 0)
            .filter_map(|(_, o)| o.returned)
            .min()
            .unwrap_or(u64::MAX);
        for (i, op) in self.ops.iter().enumerate() {
            if done & (1 << i) != 0 || op.invoked > horizon {
                continue;
            }
            let undo = match (op.kind, op.returned) {
                (OpKind::Enq(v), _) => {
                    queue.push_back(v);
                    Undo::PopBack
                }
                (OpKind::Deq(Payload::Id(v)), _) => {
                    if queue.front() != Some(&v) {
                        continue;
                    }
                    queue.pop_front();
                    Undo::PushFront(v)
                }
                (OpKind::Deq(Payload::Empty), _) => {
                    if !queue.is_empty() {
                        continue;
                    }
                    Undo::Nothing
                }
                // Still pending: may have removed the front.
                (OpKind::Deq(_), None) => match queue.pop_front() {
                    Some(v) => Undo::PushFront(v),
                    None => Undo::Nothing,
                },
                (OpKind::Deq(_), Some(_)) => Undo::Nothing,
            };
            self.path.push(i);
            if self.path.len() > self.best.len() {
                self.best = self.path.clone();
            }
            let found = self.run(done | (1 << i), queue);
            match undo {
                Undo::PopBack => {
                    queue.pop_back();
                }
                Undo::PushFront(v) => queue.push_front(v),
                Undo::Nothing => {}
            }
            if found {
                return true;
            }
            self.path.pop();
        }
        self.failed.insert(key);
        false
    }
}

enum Undo {
    PopBack,
    PushFront(u64),
    Nothing,
}

/// Brute-force search for a sequential FIFO execution consistent with the
/// real-time order of the history. Pending operations may or may not take
/// effect; RETRY results take none.
pub fn check_linearizable_fifo(
    history: &OpHistory,
) -> Result<Verdict<LinearizabilityViolation>, CheckError> {
    let all = history.operations()?;
    let threads = history.threads();
    let completed = all.iter().filter(|o| o.returned.is_some()).count();
    if threads > MAX_LIN_THREADS || completed > MAX_LIN_OPS {
        return Err(CheckError::BoundExceeded {
            threads,
            ops: completed,
        });
    }
    let ops: Vec<Operation> = all
        .into_iter()
        .filter(|o| o.kind != OpKind::Deq(Payload::Retry))
        .collect();
    let required = ops
        .iter()
        .enumerate()
        .filter(|(_, o)| o.returned.is_some())
        .fold(0u32, |m, (i, _)| m | (1 << i));
    let mut search = Search {
        ops: &ops,
        residue: &history.residue,
        required,
        failed: HashSet::new(),
        path: Vec::new(),
        best: Vec::new(),
    };
    let mut queue: VecDeque<u64> = history.initial.iter().copied().collect();
    if search.run(0, &mut queue) {
        return Ok(Verdict::Pass);
    }
    let longest_prefix = search.best;
    Ok(Verdict::Fail(LinearizabilityViolation {
        longest_prefix,
        operations: ops,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuditViolation {
    pub index: usize,
    pub record: ReclaimRecord,
}

impl fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.record;
        write!(
            f,
            "record {}: freed {:?} node with cycle {} at frontier {} (window {}, boundary {})",
            self.index,
            r.state,
            r.cycle,
            r.deque_cycle_at_free,
            r.window,
            safe_cycle(r.deque_cycle_at_free, r.window)
        )
    }
}

/// Every freed node must have left the queue and trail the frontier by more
/// than the window.
pub fn audit_reclamation_log(log: &[ReclaimRecord]) -> Verdict<AuditViolation> {
    log.iter()
        .enumerate()
        .find(|(_, r)| !is_reclaimable(r.state, r.cycle, safe_cycle(r.deque_cycle_at_free, r.window)))
        .map_or(Verdict::Pass, |(index, record)| {
            Verdict::Fail(AuditViolation {
                index,
                record: *record,
            })
        })
}
