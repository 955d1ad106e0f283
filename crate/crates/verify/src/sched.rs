//! Deterministic scheduler.
//!
//! Scenario threads are real OS threads, but only the thread holding the
//! token runs. A thread gives the token up at every probe yield point,
//! announcing the shared access it is about to make, and the active
//! [`Strategy`] decides who runs next. Code between two yield points runs
//! atomically with respect to the other scenario threads.

use std::cell::Cell;
use std::fmt;
use std::num::NonZeroU64;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicPtr, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use cmpq::probe::{Access, Marker, Phase, Point, Probe};
use cmpq::{CmpQueue, NodePool, TryDequeue};

use crate::history::{EventKind, OpEvent, Payload};
use crate::strategy::{Choice, Strategy};

pub type SchedQueue = CmpQueue<NonZeroU64, SchedProbe>;

thread_local! {
    static WORKER: Cell<Option<usize>> = const { Cell::new(None) };
}

fn current_worker() -> Option<usize> {
    WORKER.with(|w| w.get())
}

/// What a step touches, at the granularity used for independence checks.
/// Every field of one node is a single location.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Loc {
    Var(usize),
    Node(u32),
    /// Pool operations touch the free list and initialise node fields.
    AllNodes,
    /// Invocations read it, responses write it.
    History,
    /// Stall control for one thread.
    Control(usize),
    /// An atomic section: conflicts with everything.
    Global,
}

impl Loc {
    fn overlaps(self, other: Loc) -> bool {
        match (self, other) {
            (Loc::Global, _) | (_, Loc::Global) => true,
            (Loc::AllNodes, Loc::Node(_) | Loc::AllNodes) | (Loc::Node(_), Loc::AllNodes) => true,
            (a, b) => a == b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Touch {
    pub loc: Loc,
    pub write: bool,
}

impl Touch {
    pub fn conflicts(self, other: Touch) -> bool {
        (self.write || other.write) && self.loc.overlaps(other.loc)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Footprint {
    touches: [Option<Touch>; 2],
}

impl Footprint {
    pub fn one(t: Touch) -> Self {
        Footprint {
            touches: [Some(t), None],
        }
    }

    fn with_extra(mut self, t: Option<Touch>) -> Self {
        self.touches[1] = t;
        self
    }

    pub fn touches(&self) -> impl Iterator<Item = Touch> + '_ {
        self.touches.iter().flatten().copied()
    }

    pub fn writes(&self) -> bool {
        self.touches().any(|t| t.write)
    }

    pub fn dependent(&self, other: &Footprint) -> bool {
        self.touches().any(|a| other.touches().any(|b| a.conflicts(b)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpLabel {
    Enq(u64),
    Deq,
    Reclaim,
}

impl fmt::Display for OpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpLabel::Enq(v) => write!(f, "enq({v})"),
            OpLabel::Deq => f.write_str("deq"),
            OpLabel::Reclaim => f.write_str("reclaim"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Access { point: Point, access: Access },
    Invoke(OpLabel),
    Return(OpLabel),
    Resume(usize),
    /// Parked by a stall until resumed.
    Paused(StallAt),
    /// Enters a section that runs without yielding.
    Atomic,
    /// Waiting for another thread to write before retrying.
    Spin(Point),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub kind: StepKind,
    pub footprint: Footprint,
}

/// One yield per atomic access, or one per algorithm phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Granularity {
    #[default]
    Access,
    Phase,
}

/// Whether invocations and responses are scheduling steps of their own, or
/// are stamped at the first and last access of the operation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HistoryMode {
    #[default]
    Steps,
    Inline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StallSpec {
    pub thread: usize,
    pub at: StallAt,
    /// Which occurrence triggers the stall, counting from 1.
    pub occurrence: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StallAt {
    /// Right after the thread completes the phase.
    After(Phase),
    /// Right before the thread performs the access at this point.
    Before(Point),
}

impl fmt::Display for StallAt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StallAt::After(p) => write!(f, "after {p}"),
            StallAt::Before(p) => write!(f, "before {p:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceItem {
    Step { tid: usize, step: Step },
    Marker { tid: usize, marker: Marker },
    Event(OpEvent),
    Stalled { tid: usize, at: StallAt },
    AutoResume { tid: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("no runnable thread; waiting: {0:?}")]
    Deadlock(Vec<usize>),
    #[error("step bound {0} exceeded")]
    StepBound(usize),
    #[error("thread {thread} panicked: {message}")]
    Panic { thread: usize, message: String },
    #[error("replayed schedule diverged at depth {0}")]
    Nondeterminism(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Starting,
    Ready,
    Running,
    Done,
}

struct Worker {
    status: Status,
    pending: Option<Step>,
    /// Spinning on a value only another thread's write can change.
    blocked: bool,
    /// Write count when this thread last loaded the tail.
    snapshot: u64,
    stalled: bool,
    extra: Option<Touch>,
    pending_invoke: Option<OpEvent>,
    phase_points: u64,
    stall_counts: Vec<(StallAt, usize)>,
    /// Inside an atomic section: no yields.
    atomic: bool,
}

impl Worker {
    fn new() -> Self {
        Worker {
            status: Status::Starting,
            pending: None,
            blocked: false,
            snapshot: 0,
            stalled: false,
            extra: None,
            pending_invoke: None,
            phase_points: 0,
            stall_counts: Vec::new(),
            atomic: false,
        }
    }
}

pub(crate) struct State {
    workers: Vec<Worker>,
    current: Option<usize>,
    last: Option<usize>,
    strategy: Option<Box<dyn Strategy>>,
    pub(crate) trace: Vec<TraceItem>,
    pub(crate) events: Vec<OpEvent>,
    pub(crate) schedule: Vec<usize>,
    time: u64,
    writes: u64,
    max_steps: usize,
    stalls: Vec<(StallSpec, bool)>,
    pub(crate) error: Option<ExecError>,
    finished: bool,
}

/// Unwinds a worker out of the queue when an execution is abandoned.
struct Abandon;

pub struct Sched {
    state: Mutex<State>,
    cv: Condvar,
    pool: AtomicPtr<NodePool>,
    granularity: Granularity,
    history: HistoryMode,
}

impl Sched {
    pub(crate) fn new(
        threads: usize,
        strategy: Box<dyn Strategy>,
        stalls: &[StallSpec],
        max_steps: usize,
        granularity: Granularity,
        history: HistoryMode,
    ) -> Self {
        Sched {
            state: Mutex::new(State {
                workers: (0..threads).map(|_| Worker::new()).collect(),
                current: None,
                last: None,
                strategy: Some(strategy),
                trace: Vec::new(),
                events: Vec::new(),
                schedule: Vec::new(),
                time: 0,
                writes: 0,
                max_steps,
                stalls: stalls.iter().map(|s| (*s, false)).collect(),
                error: None,
                finished: threads == 0,
            }),
            cv: Condvar::new(),
            pool: AtomicPtr::new(std::ptr::null_mut()),
            granularity,
            history,
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn set_pool(&self, pool: &NodePool) {
        self.pool.store(pool as *const NodePool as *mut NodePool, Ordering::Release);
    }

    fn classify(&self, access: Access) -> Touch {
        let pool = self.pool.load(Ordering::Acquire);
        let loc = if pool as usize == access.loc {
            Loc::AllNodes
        } else {
            // SAFETY: the pool outlives every execution that can yield.
            match unsafe { pool.as_ref() }.and_then(|p| p.slot_of(access.loc)) {
                Some(slot) => Loc::Node(slot),
                None => Loc::Var(access.loc),
            }
        };
        Touch {
            loc,
            write: access.is_write(),
        }
    }

    /// Parks the calling worker with `step` announced and returns once the
    /// strategy picked it.
    fn yield_step(&self, tid: usize, step: Step) {
        let mut st = self.lock();
        if st.workers[tid].atomic {
            stamp_invoke(&mut st, tid);
            return;
        }
        {
            let w = &mut st.workers[tid];
            w.pending = Some(step);
            w.status = Status::Ready;
        }
        if st.current == Some(tid) {
            st.current = None;
        }
        self.schedule(&mut st, Some(tid));
        while st.current != Some(tid) {
            if st.error.is_some() {
                drop(st);
                panic::resume_unwind(Box::new(Abandon));
            }
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        st.workers[tid].status = Status::Running;
        if let StepKind::Resume(target) = step.kind {
            st.workers[target].stalled = false;
        }
        stamp_invoke(&mut st, tid);
    }

    /// Counts one occurrence of `at` for `tid` and reports whether a stall
    /// fires there. Marks the thread stalled if so.
    fn stall_fires(&self, st: &mut State, tid: usize, at: StallAt) -> bool {
        if st.stalls.is_empty() || st.workers[tid].atomic {
            return false;
        }
        let w = &mut st.workers[tid];
        let count = match w.stall_counts.iter_mut().find(|(a, _)| *a == at) {
            Some((_, c)) => {
                *c += 1;
                *c
            }
            None => {
                w.stall_counts.push((at, 1));
                1
            }
        };
        let mut fires = false;
        for (spec, fired) in st.stalls.iter_mut() {
            if !*fired && spec.thread == tid && spec.at == at && spec.occurrence == count {
                *fired = true;
                fires = true;
            }
        }
        if fires {
            st.workers[tid].stalled = true;
            st.trace.push(TraceItem::Stalled { tid, at });
        }
        fires
    }

    fn pause(&self, tid: usize, at: StallAt) {
        self.yield_step(
            tid,
            Step {
                kind: StepKind::Paused(at),
                footprint: Footprint::one(Touch {
                    loc: Loc::Control(tid),
                    write: false,
                }),
            },
        );
    }

    fn schedule(&self, st: &mut State, caller: Option<usize>) {
        if st.current.is_some() || st.finished || st.error.is_some() {
            return;
        }
        if st.workers.iter().any(|w| w.status == Status::Starting) {
            return;
        }
        let mut enabled = enabled(st);
        if enabled.is_empty() {
            if st.workers.iter().all(|w| w.status == Status::Done) {
                st.finished = true;
                self.cv.notify_all();
                return;
            }
            // Stalls last until resumed or until nothing else can run.
            let live_unstalled = st
                .workers
                .iter()
                .any(|w| w.status != Status::Done && !w.stalled && !w.blocked);
            if !live_unstalled {
                if let Some(tid) = st.workers.iter().position(|w| w.stalled) {
                    st.workers[tid].stalled = false;
                    st.trace.push(TraceItem::AutoResume { tid });
                    enabled = self::enabled(st);
                }
            }
            if enabled.is_empty() {
                let waiting = (0..st.workers.len())
                    .filter(|&i| st.workers[i].status != Status::Done)
                    .collect();
                st.error = Some(ExecError::Deadlock(waiting));
                self.cv.notify_all();
                return;
            }
        }
        if st.schedule.len() >= st.max_steps {
            st.error = Some(ExecError::StepBound(st.max_steps));
            self.cv.notify_all();
            return;
        }
        self.refresh_acquires(st);
        let pending: Vec<Option<Footprint>> = st
            .workers
            .iter()
            .map(|w| {
                if w.status == Status::Ready {
                    w.pending.map(|s| s.footprint)
                } else {
                    None
                }
            })
            .collect();
        let choice = Choice {
            depth: st.schedule.len(),
            enabled: &enabled,
            pending: &pending,
            last: st.last,
        };
        let mut strategy = st.strategy.take().expect("strategy present");
        let picked = strategy.choose(&choice);
        st.strategy = Some(strategy);
        let tid = match picked {
            Ok(t) if enabled.contains(&t) => t,
            _ => {
                st.error = Some(ExecError::Nondeterminism(st.schedule.len()));
                self.cv.notify_all();
                return;
            }
        };
        let step = st.workers[tid].pending.take().expect("ready worker has a step");
        if let StepKind::Access {
            point: Point::EnqLoadTail,
            ..
        } = step.kind
        {
            st.workers[tid].snapshot = st.writes;
        }
        if step.footprint.writes() {
            st.writes += 1;
            for (i, w) in st.workers.iter_mut().enumerate() {
                if i != tid {
                    w.blocked = false;
                }
            }
        }
        st.schedule.push(tid);
        st.trace.push(TraceItem::Step { tid, step });
        st.current = Some(tid);
        st.last = Some(tid);
        if caller != Some(tid) {
            self.cv.notify_all();
        }
    }

    /// A pool acquire pops whatever node heads the free list when it runs,
    /// so its footprint is recomputed for the current state.
    fn refresh_acquires(&self, st: &mut State) {
        let pool = self.pool.load(Ordering::Acquire);
        // SAFETY: the pool outlives every execution that can yield.
        let Some(pool) = (unsafe { pool.as_ref() }) else { return };
        let fp = match pool.peek_free() {
            Some(slot) => Footprint::one(Touch {
                loc: Loc::Var(pool as *const NodePool as usize),
                write: true,
            })
            .with_extra(Some(Touch {
                loc: Loc::Node(slot),
                write: true,
            })),
            None => Footprint::one(Touch {
                loc: Loc::AllNodes,
                write: true,
            }),
        };
        for w in st.workers.iter_mut().filter(|w| w.status == Status::Ready) {
            if let Some(step) = w.pending.as_mut() {
                if let StepKind::Access {
                    point: Point::EnqAcquire,
                    ..
                } = step.kind
                {
                    step.footprint = fp;
                }
            }
        }
    }

    fn exit(&self, tid: usize) {
        let mut st = self.lock();
        st.workers[tid].status = Status::Done;
        st.workers[tid].pending = None;
        if st.current == Some(tid) {
            st.current = None;
        }
        self.schedule(&mut st, None);
        self.cv.notify_all();
    }

    fn fail(&self, err: ExecError) {
        let mut st = self.lock();
        if st.error.is_none() {
            st.error = Some(err);
        }
        self.cv.notify_all();
    }

    /// Blocks the controller until every worker is done or the run failed.
    pub(crate) fn wait_finished(&self) {
        let mut st = self.lock();
        while !st.finished && st.error.is_none() {
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub(crate) fn failed(&self) -> bool {
        self.lock().error.is_some()
    }

    pub(crate) fn into_parts(self) -> (State, Box<dyn Strategy>) {
        let mut st = self.state.into_inner().unwrap_or_else(|e| e.into_inner());
        let strategy = st.strategy.take().expect("strategy present");
        (st, strategy)
    }

    fn record_event(&self, tid: usize, kind: EventKind, payload: Payload) {
        let mut st = self.lock();
        let mut ev = OpEvent {
            thread_id: tid,
            kind,
            payload,
            logical_time: 0,
        };
        stamp_invoke(&mut st, tid);
        st.time += 1;
        ev.logical_time = st.time;
        st.events.push(ev);
        st.trace.push(TraceItem::Event(ev));
    }
}

fn stamp_invoke(st: &mut State, tid: usize) {
    if let Some(mut ev) = st.workers[tid].pending_invoke.take() {
        st.time += 1;
        ev.logical_time = st.time;
        st.events.push(ev);
        st.trace.push(TraceItem::Event(ev));
    }
}

fn enabled(st: &State) -> Vec<usize> {
    st.workers
        .iter()
        .enumerate()
        .filter(|(_, w)| w.status == Status::Ready && !w.blocked && !w.stalled)
        .map(|(i, _)| i)
        .collect()
}

fn phase_start(point: Point) -> bool {
    matches!(
        point,
        Point::EnqAcquire
            | Point::EnqLoadTail
            | Point::DeqLoadFrontier
            | Point::DeqClaim
            | Point::DeqRecheckState
            | Point::DeqCursorCheck
            | Point::DeqLoadBoundary
            | Point::ReclaimEnter
    )
}

/// Probe that hands every yield point to the deterministic scheduler.
/// Calls from threads that are not scenario workers pass straight through.
#[derive(Clone)]
pub struct SchedProbe {
    sched: Arc<Sched>,
}

impl SchedProbe {
    pub(crate) fn new(sched: Arc<Sched>) -> Self {
        SchedProbe { sched }
    }
}

impl Probe for SchedProbe {
    const ENABLED: bool = true;

    fn yield_point(&self, point: Point, access: Access) {
        let Some(tid) = current_worker() else { return };
        let s = &self.sched;
        let touch = s.classify(access);
        let (extra, stall) = {
            let mut st = s.lock();
            if st.workers[tid].atomic {
                return;
            }
            let stall = s.stall_fires(&mut st, tid, StallAt::Before(point));
            let w = &mut st.workers[tid];
            if s.granularity == Granularity::Phase {
                let bit = 1u64 << (point as u32);
                if !phase_start(point) || w.phase_points & bit != 0 {
                    drop(st);
                    if stall {
                        s.pause(tid, StallAt::Before(point));
                    }
                    return;
                }
                w.phase_points |= bit;
            }
            (w.extra.take(), stall)
        };
        if stall {
            s.pause(tid, StallAt::Before(point));
        }
        let footprint = Footprint::one(touch).with_extra(extra);
        s.yield_step(
            tid,
            Step {
                kind: StepKind::Access { point, access },
                footprint,
            },
        );
    }

    fn also_touches(&self, access: Access) {
        let Some(tid) = current_worker() else { return };
        let touch = self.sched.classify(access);
        self.sched.lock().workers[tid].extra = Some(touch);
    }

    fn spin(&self, point: Point) {
        let Some(tid) = current_worker() else { return };
        let s = &self.sched;
        {
            let mut st = s.lock();
            let writes = st.writes;
            let w = &mut st.workers[tid];
            if point == Point::DeqRetry {
                w.phase_points = 0;
            }
            if point != Point::EnqRetry || w.atomic {
                return;
            }
            // A retry after nothing changed would read the same values again.
            if w.snapshot != writes {
                w.snapshot = writes;
                return;
            }
            w.blocked = true;
        }
        s.yield_step(
            tid,
            Step {
                kind: StepKind::Spin(point),
                footprint: Footprint::one(Touch {
                    loc: Loc::Control(tid),
                    write: false,
                }),
            },
        );
    }

    fn marker(&self, marker: Marker) {
        let Some(tid) = current_worker() else { return };
        let s = &self.sched;
        let stall = {
            let mut st = s.lock();
            st.trace.push(TraceItem::Marker { tid, marker });
            match marker {
                Marker::PhaseDone(phase) => s.stall_fires(&mut st, tid, StallAt::After(phase)),
                _ => false,
            }
        };
        if let (true, Marker::PhaseDone(phase)) = (stall, marker) {
            s.pause(tid, StallAt::After(phase));
        }
    }
}

/// Handle a scenario thread uses to run queue operations.
pub struct Ctx<'a> {
    tid: usize,
    queue: &'a SchedQueue,
    sched: &'a Sched,
}

impl<'a> Ctx<'a> {
    pub fn tid(&self) -> usize {
        self.tid
    }

    /// Direct queue access. Anything done through it outside the recorded
    /// operations is not part of the history.
    pub fn queue(&self) -> &'a SchedQueue {
        self.queue
    }

    fn begin(&self, label: OpLabel, kind: EventKind, payload: Payload) {
        {
            let mut st = self.sched.lock();
            let w = &mut st.workers[self.tid];
            w.phase_points = 0;
            w.pending_invoke = Some(OpEvent {
                thread_id: self.tid,
                kind,
                payload,
                logical_time: 0,
            });
        }
        if self.sched.history == HistoryMode::Steps {
            self.sched.yield_step(
                self.tid,
                Step {
                    kind: StepKind::Invoke(label),
                    footprint: Footprint::one(Touch {
                        loc: Loc::History,
                        write: false,
                    }),
                },
            );
        }
    }

    fn end(&self, label: OpLabel, kind: EventKind, payload: Payload) {
        if self.sched.history == HistoryMode::Steps {
            self.sched.yield_step(
                self.tid,
                Step {
                    kind: StepKind::Return(label),
                    footprint: Footprint::one(Touch {
                        loc: Loc::History,
                        write: true,
                    }),
                },
            );
        }
        self.sched.record_event(self.tid, kind, payload);
    }

    /// # Panics
    /// If the queue reports FULL; scenarios size their pools to avoid it.
    pub fn enq(&self, v: u64) {
        let id = NonZeroU64::new(v).expect("payload ids start at 1");
        self.begin(OpLabel::Enq(v), EventKind::EnqInvoke, Payload::Id(v));
        if self.queue.enqueue(id).is_err() {
            panic!("enqueue of {v} found the pool exhausted");
        }
        self.end(OpLabel::Enq(v), EventKind::EnqReturn, Payload::Id(v));
    }

    pub fn deq(&self) -> Option<u64> {
        self.begin(OpLabel::Deq, EventKind::DeqInvoke, Payload::Unset);
        let r = self.queue.dequeue().map(NonZeroU64::get);
        let payload = r.map_or(Payload::Empty, Payload::Id);
        self.end(OpLabel::Deq, EventKind::DeqReturn, payload);
        r
    }

    /// A single attempt; RETRY is recorded as an operation without effect.
    pub fn try_deq(&self) -> TryDequeue<u64> {
        self.begin(OpLabel::Deq, EventKind::DeqInvoke, Payload::Unset);
        let r = match self.queue.try_dequeue() {
            TryDequeue::Item(v) => TryDequeue::Item(v.get()),
            TryDequeue::Empty => TryDequeue::Empty,
            TryDequeue::Retry => TryDequeue::Retry,
        };
        let payload = match r {
            TryDequeue::Item(v) => Payload::Id(v),
            TryDequeue::Empty => Payload::Empty,
            TryDequeue::Retry => Payload::Retry,
        };
        self.end(OpLabel::Deq, EventKind::DeqReturn, payload);
        r
    }

    /// Runs a reclamation pass. Not part of the history.
    pub fn reclaim(&self) -> usize {
        self.sched.lock().workers[self.tid].phase_points = 0;
        self.queue.reclaim()
    }

    /// Runs `f` as a single scheduling step that conflicts with every other
    /// step. Stalls do not fire inside it and spins do not block.
    pub fn atomic<R>(&self, f: impl FnOnce() -> R) -> R {
        self.sched.yield_step(
            self.tid,
            Step {
                kind: StepKind::Atomic,
                footprint: Footprint::one(Touch {
                    loc: Loc::Global,
                    write: true,
                }),
            },
        );
        self.sched.lock().workers[self.tid].atomic = true;
        struct Leave<'a>(&'a Sched, usize);
        impl Drop for Leave<'_> {
            fn drop(&mut self) {
                self.0.lock().workers[self.1].atomic = false;
            }
        }
        let _leave = Leave(self.sched, self.tid);
        f()
    }

    /// Lets a stalled thread continue.
    pub fn resume(&self, thread: usize) {
        self.sched.yield_step(
            self.tid,
            Step {
                kind: StepKind::Resume(thread),
                footprint: Footprint::one(Touch {
                    loc: Loc::Control(thread),
                    write: true,
                }),
            },
        );
    }
}

pub(crate) type Body<'s> = Box<dyn FnOnce(&Ctx<'_>) + Send + 's>;

/// Runs one execution: every body on its own worker thread under `sched`.
pub(crate) fn run_workers(sched: &Sched, queue: &SchedQueue, bodies: Vec<Body<'_>>) {
    std::thread::scope(|s| {
        for (tid, body) in bodies.into_iter().enumerate() {
            s.spawn(move || {
                WORKER.with(|w| w.set(Some(tid)));
                let ctx = Ctx { tid, queue, sched };
                let r = panic::catch_unwind(AssertUnwindSafe(|| body(&ctx)));
                if let Err(payload) = r {
                    if !payload.is::<Abandon>() {
                        let message = payload
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "non-string panic".to_owned());
                        sched.fail(ExecError::Panic { thread: tid, message });
                    }
                }
                sched.exit(tid);
                WORKER.with(|w| w.set(None));
            });
        }
        sched.wait_finished();
    });
}
