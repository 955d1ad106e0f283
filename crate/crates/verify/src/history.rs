//! Recorded operation histories.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    EnqInvoke,
    EnqReturn,
    DeqInvoke,
    DeqReturn,
}

impl EventKind {
    pub fn is_invoke(self) -> bool {
        matches!(self, EventKind::EnqInvoke | EventKind::DeqInvoke)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Payload {
    Id(u64),
    /// Dequeue found the queue empty.
    Empty,
    /// Dequeue gave up after a transient failure without removing anything.
    Retry,
    /// Dequeue invocations carry no payload.
    Unset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpEvent {
    pub thread_id: usize,
    pub kind: EventKind,
    pub payload: Payload,
    pub logical_time: u64,
}

impl fmt::Display for OpEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match (self.kind, self.payload) {
            (EventKind::EnqInvoke, Payload::Id(v)) => format!("enq({v}) invoke"),
            (EventKind::EnqReturn, Payload::Id(v)) => format!("enq({v}) return"),
            (EventKind::DeqInvoke, _) => "deq invoke".to_owned(),
            (EventKind::DeqReturn, Payload::Id(v)) => format!("deq -> {v}"),
            (EventKind::DeqReturn, Payload::Empty) => "deq -> EMPTY".to_owned(),
            (EventKind::DeqReturn, Payload::Retry) => "deq -> RETRY".to_owned(),
            (k, p) => format!("{k:?} {p:?}"),
        };
        write!(f, "t={:<4} thread {} {}", self.logical_time, self.thread_id, what)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("event {index}: return on thread {thread} without a pending invocation")]
    UnmatchedReturn { index: usize, thread: usize },
    #[error("event {index}: thread {thread} invoked while another of its operations is pending")]
    NestedInvoke { index: usize, thread: usize },
    #[error("event {index}: return kind does not match the pending invocation")]
    KindMismatch { index: usize },
    #[error("event {index}: logical time does not increase")]
    TimeNotIncreasing { index: usize },
    #[error("enqueue payload {0} appears more than once")]
    DuplicateEnqueue(u64),
}

/// One operation paired from its invocation and response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Operation {
    pub thread_id: usize,
    pub kind: OpKind,
    pub invoked: u64,
    /// `None` while the operation is still pending.
    pub returned: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Enq(u64),
    /// Dequeue with its result; `Unset` if still pending.
    Deq(Payload),
}

/// Ordered event log plus the payloads left in the queue afterwards.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpHistory {
    /// Queue content before the first event, front first.
    pub initial: Vec<u64>,
    pub events: Vec<OpEvent>,
    /// Queue content drained after the last event, front first.
    pub residue: Vec<u64>,
}

impl OpHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn threads(&self) -> usize {
        let mut ids: Vec<usize> = self.events.iter().map(|e| e.thread_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Checks well-formedness and pairs invocations with responses.
    pub fn operations(&self) -> Result<Vec<Operation>, HistoryError> {
        let mut pending: HashMap<usize, usize> = HashMap::new();
        let mut ops: Vec<Operation> = Vec::new();
        let mut last_time = None;
        for (index, e) in self.events.iter().enumerate() {
            if last_time.is_some_and(|t| e.logical_time <= t) {
                return Err(HistoryError::TimeNotIncreasing { index });
            }
            last_time = Some(e.logical_time);
            if e.kind.is_invoke() {
                if pending.contains_key(&e.thread_id) {
                    return Err(HistoryError::NestedInvoke {
                        index,
                        thread: e.thread_id,
                    });
                }
                let kind = match (e.kind, e.payload) {
                    (EventKind::EnqInvoke, Payload::Id(v)) => OpKind::Enq(v),
                    (EventKind::DeqInvoke, _) => OpKind::Deq(Payload::Unset),
                    _ => return Err(HistoryError::KindMismatch { index }),
                };
                pending.insert(e.thread_id, ops.len());
                ops.push(Operation {
                    thread_id: e.thread_id,
                    kind,
                    invoked: e.logical_time,
                    returned: None,
                });
            } else {
                let Some(i) = pending.remove(&e.thread_id) else {
                    return Err(HistoryError::UnmatchedReturn {
                        index,
                        thread: e.thread_id,
                    });
                };
                let op = &mut ops[i];
                match (op.kind, e.kind, e.payload) {
                    (OpKind::Enq(v), EventKind::EnqReturn, Payload::Id(w)) if v == w => {}
                    (OpKind::Deq(_), EventKind::DeqReturn, p) if p != Payload::Unset => {
                        op.kind = OpKind::Deq(p);
                    }
                    _ => return Err(HistoryError::KindMismatch { index }),
                }
                op.returned = Some(e.logical_time);
            }
        }
        let mut seen = HashMap::new();
        for op in &ops {
            if let OpKind::Enq(v) = op.kind {
                if seen.insert(v, ()).is_some() {
                    return Err(HistoryError::DuplicateEnqueue(v));
                }
            }
        }
        Ok(ops)
    }

    pub fn completed_ops(&self) -> usize {
        self.events.iter().filter(|e| !e.kind.is_invoke()).count()
    }

    /// Multiset conservation: everything that went in (initial content plus
    /// enqueues) came out exactly once, either dequeued or left over.
    pub fn conservation(&self) -> Result<(), ConservationError> {
        let mut balance: HashMap<u64, i64> = HashMap::new();
        for &v in &self.initial {
            *balance.entry(v).or_default() += 1;
        }
        for e in &self.events {
            match (e.kind, e.payload) {
                (EventKind::EnqInvoke, Payload::Id(v)) => *balance.entry(v).or_default() += 1,
                (EventKind::DeqReturn, Payload::Id(v)) => *balance.entry(v).or_default() -= 1,
                _ => {}
            }
        }
        for &v in &self.residue {
            *balance.entry(v).or_default() -= 1;
        }
        let mut bad: Vec<(u64, i64)> = balance.into_iter().filter(|&(_, b)| b != 0).collect();
        bad.sort_unstable();
        match bad.first() {
            None => Ok(()),
            Some(&(id, b)) if b > 0 => Err(ConservationError::Lost(id)),
            Some(&(id, _)) => Err(ConservationError::Duplicated(id)),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConservationError {
    #[error("payload {0} was enqueued but neither dequeued nor left in the queue")]
    Lost(u64),
    #[error("payload {0} came out more often than it went in")]
    Duplicated(u64),
}

impl fmt::Display for OpHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "initial: {:?}", self.initial)?;
        for e in &self.events {
            writeln!(f, "  {e}")?;
        }
        write!(f, "residue: {:?}", self.residue)
    }
}

/// Builds histories by hand, mostly for tests.
#[derive(Debug, Default)]
pub struct HistoryBuilder {
    history: OpHistory,
    time: u64,
}

impl HistoryBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn initial(mut self, items: &[u64]) -> Self {
        self.history.initial = items.to_vec();
        self
    }

    pub fn event(mut self, thread_id: usize, kind: EventKind, payload: Payload) -> Self {
        self.time += 1;
        self.history.events.push(OpEvent {
            thread_id,
            kind,
            payload,
            logical_time: self.time,
        });
        self
    }

    pub fn enq_invoke(self, t: usize, v: u64) -> Self {
        self.event(t, EventKind::EnqInvoke, Payload::Id(v))
    }

    pub fn enq_return(self, t: usize, v: u64) -> Self {
        self.event(t, EventKind::EnqReturn, Payload::Id(v))
    }

    pub fn deq_invoke(self, t: usize) -> Self {
        self.event(t, EventKind::DeqInvoke, Payload::Unset)
    }

    pub fn deq_return(self, t: usize, p: Payload) -> Self {
        self.event(t, EventKind::DeqReturn, p)
    }

    /// A complete enqueue with nothing overlapping it.
    pub fn enq(self, t: usize, v: u64) -> Self {
        self.enq_invoke(t, v).enq_return(t, v)
    }

    pub fn deq(self, t: usize, p: Payload) -> Self {
        self.deq_invoke(t).deq_return(t, p)
    }

    pub fn residue(mut self, items: &[u64]) -> Self {
        self.history.residue = items.to_vec();
        self
    }

    pub fn build(self) -> OpHistory {
        self.history
    }
}
