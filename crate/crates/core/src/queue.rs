//! The queue proper.
//!
//! Nodes form a singly linked list starting at a permanent dummy (`head`).
//! A node is in the abstract queue while it is linked and AVAILABLE; the
//! AVAILABLE -> CLAIMED transition is the dequeue. Claimed nodes stay linked
//! until a reclaimer unlinks a prefix of them whose cycles trail the dequeue
//! frontier by more than the protection window.

use std::marker::PhantomData;
use std::num::NonZeroUsize;
use std::ptr::{self, NonNull};
use std::sync::atomic::{AtomicBool, AtomicPtr, AtomicU64, Ordering};
use std::sync::Mutex;

use crossbeam_utils::CachePadded;
use thiserror::Error;

use crate::config::{safe_cycle, ConfigError, QueueConfig};
use crate::handle::Handle;
use crate::pool::{Node, NodePool, NodeState, PoolError, PoolStats};
use crate::probe::{Access, DequeuePhase, EnqueuePhase, Marker, NoProbe, Phase, Point, Probe};

const AVAILABLE: u8 = NodeState::Available as u8;
const CLAIMED: u8 = NodeState::Claimed as u8;

/// Cannot equal any frontier value a real run reaches.
const FRONTIER_SENTINEL: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum QueueError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pool(#[from] PoolError),
}

/// Enqueue failure. Only produced by fixed-capacity pools.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnqueueError<T> {
    #[error("queue full: node pool exhausted after reclamation")]
    Full(T),
}

impl<T> EnqueueError<T> {
    pub fn into_inner(self) -> T {
        match self {
            EnqueueError::Full(t) => t,
        }
    }
}

/// Outcome of a single dequeue attempt.
#[derive(Debug, PartialEq, Eq)]
pub enum TryDequeue<T> {
    Item(T),
    /// Reached the end of the list without finding an AVAILABLE node.
    Empty,
    /// Lost a race with recycling or a concurrent cursor move. Nothing was
    /// removed from the queue on behalf of this caller.
    Retry,
}

impl<T> TryDequeue<T> {
    pub fn item(self) -> Option<T> {
        match self {
            TryDequeue::Item(t) => Some(t),
            _ => None,
        }
    }
}

/// One freed node, as seen by the reclaimer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReclaimRecord {
    pub cycle: u64,
    pub state: NodeState,
    /// Frontier value the pass computed its boundary from.
    pub deque_cycle_at_free: u64,
    pub window: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueueStats {
    pub cycle: u64,
    pub deque_cycle: u64,
    pub pool: PoolStats,
    /// Enqueues that hit the reclamation trigger.
    pub reclaim_attempts: u64,
    /// Passes that actually ran (the single-reclaimer flag was free).
    pub reclaim_passes: u64,
    pub reclaimed_nodes: u64,
    /// Claimed nodes freed before their claimer took the payload.
    pub abandoned_payloads: u64,
}

/// Read-only view of a node, for tests and auditors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeView {
    pub slot: u32,
    pub cycle: u64,
    pub state: NodeState,
    pub has_data: bool,
}

impl NodeView {
    fn of(node: &Node) -> Self {
        NodeView {
            slot: node.slot(),
            cycle: node.cycle(),
            state: node.state(),
            has_data: node.data_raw() != 0,
        }
    }
}

#[derive(Default)]
struct Counters {
    reclaim_attempts: AtomicU64,
    reclaim_passes: AtomicU64,
    reclaimed: AtomicU64,
    abandoned: AtomicU64,
}

pub struct CmpQueue<T: Handle, P: Probe = NoProbe> {
    head: CachePadded<AtomicPtr<Node>>,
    tail: CachePadded<AtomicPtr<Node>>,
    scan_cursor: CachePadded<AtomicPtr<Node>>,
    cycle: CachePadded<AtomicU64>,
    deque_cycle: CachePadded<AtomicU64>,
    reclaim_active: CachePadded<AtomicBool>,
    counters: CachePadded<Counters>,
    reclaim_log: Mutex<Vec<ReclaimRecord>>,
    config: QueueConfig,
    pool: NodePool,
    probe: P,
    _payload: PhantomData<T>,
}

// SAFETY: payloads move between threads by value (T: Send); everything else
// is atomic or behind a Mutex.
unsafe impl<T: Handle, P: Probe> Send for CmpQueue<T, P> {}
unsafe impl<T: Handle, P: Probe> Sync for CmpQueue<T, P> {}

#[inline(always)]
fn node<'a>(p: *mut Node) -> &'a Node {
    // SAFETY: every link the queue handles points into pool memory, which
    // outlives the queue's operations (type-stable pool).
    unsafe { &*p }
}

#[inline]
fn backoff(retries: u32) {
    if retries > 64 {
        std::thread::yield_now();
    } else if retries > 3 {
        std::hint::spin_loop();
    }
}

macro_rules! probe {
    ($q:expr, $point:ident, $kind:ident, $loc:expr) => {
        if P::ENABLED {
            $q.probe.yield_point(Point::$point, Access::$kind($loc));
        }
    };
}

macro_rules! mark {
    ($q:expr, $marker:expr) => {
        if P::ENABLED {
            $q.probe.marker($marker);
        }
    };
}

impl<T: Handle> CmpQueue<T, NoProbe> {
    pub fn new(config: QueueConfig) -> Result<Self, QueueError> {
        Self::with_probe(config, NoProbe)
    }
}

impl<T: Handle> Default for CmpQueue<T, NoProbe> {
    fn default() -> Self {
        Self::new(QueueConfig::default()).expect("default config is valid")
    }
}

impl<T: Handle, P: Probe> CmpQueue<T, P> {
    pub fn with_probe(config: QueueConfig, probe: P) -> Result<Self, QueueError> {
        config.validate()?;
        let pool = NodePool::new(config.pool_capacity, config.growth)?;
        Self::with_pool(pool, config, probe)
    }

    /// Builds a queue on an existing pool. The pool's growth policy wins over
    /// the one in `config`.
    pub fn with_pool(pool: NodePool, mut config: QueueConfig, probe: P) -> Result<Self, QueueError> {
        config.validate()?;
        config.growth = pool.growth();
        let dummy = pool.acquire()?;
        let d = unsafe { dummy.as_ref() };
        d.cycle.store(0, Ordering::Relaxed);
        d.state.store(CLAIMED, Ordering::Release);
        let dummy = dummy.as_ptr();
        Ok(CmpQueue {
            head: CachePadded::new(AtomicPtr::new(dummy)),
            tail: CachePadded::new(AtomicPtr::new(dummy)),
            scan_cursor: CachePadded::new(AtomicPtr::new(dummy)),
            cycle: CachePadded::new(AtomicU64::new(0)),
            deque_cycle: CachePadded::new(AtomicU64::new(0)),
            reclaim_active: CachePadded::new(AtomicBool::new(false)),
            counters: CachePadded::new(Counters::default()),
            reclaim_log: Mutex::new(Vec::new()),
            config,
            pool,
            probe,
            _payload: PhantomData,
        })
    }

    pub fn config(&self) -> &QueueConfig {
        &self.config
    }

    pub fn probe(&self) -> &P {
        &self.probe
    }

    pub fn pool(&self) -> &NodePool {
        &self.pool
    }

    /// Appends `item` at the tail.
    ///
    /// Only fails with a fixed-capacity pool that is still exhausted after one
    /// reclamation pass.
    pub fn enqueue(&self, item: T) -> Result<(), EnqueueError<T>> {
        // Phase 1: allocate, fill, stamp.
        probe!(self, EnqAcquire, rmw, &self.pool);
        let new = match self.pool.acquire() {
            Ok(n) => n,
            Err(_) => {
                self.reclaim();
                probe!(self, EnqAcquire, rmw, &self.pool);
                match self.pool.acquire() {
                    Ok(n) => n,
                    Err(_) => return Err(EnqueueError::Full(item)),
                }
            }
        };
        let new = new.as_ptr();
        let n = node(new);
        n.data.store(item.into_raw().get(), Ordering::Relaxed);
        #[cfg(debug_assertions)]
        if !n.next.swap(ptr::null_mut(), Ordering::Relaxed).is_null() {
            self.pool.note_clobbered();
        }
        #[cfg(not(debug_assertions))]
        n.next.store(ptr::null_mut(), Ordering::Relaxed);
        n.state.store(AVAILABLE, Ordering::Relaxed);
        probe!(self, EnqCycle, rmw, &*self.cycle);
        let cycle = self.cycle.fetch_add(1, Ordering::Relaxed) + 1;
        probe!(self, EnqStamp, write, &n.cycle);
        n.cycle.store(cycle, Ordering::Relaxed);
        mark!(self, Marker::PhaseDone(Phase::Enqueue(EnqueuePhase::Allocate)));

        // Phase 2: link at the physical tail. No helping: a stale tail just
        // means another producer is mid-link, so reload and try again.
        let mut retries = 0u32;
        loop {
            probe!(self, EnqLoadTail, read, &*self.tail);
            let tail = self.tail.load(Ordering::Acquire);
            let t = node(tail);
            probe!(self, EnqLoadNext, read, &t.next);
            let next = t.next.load(Ordering::Acquire);
            if !next.is_null() {
                retries += 1;
                if P::ENABLED {
                    self.probe.spin(Point::EnqRetry);
                }
                backoff(retries);
                continue;
            }
            probe!(self, EnqLink, rmw, &t.next);
            if t
                .next
                .compare_exchange(ptr::null_mut(), new, Ordering::Release, Ordering::Relaxed)
                .is_ok()
            {
                mark!(self, Marker::PhaseDone(Phase::Enqueue(EnqueuePhase::Link)));
                probe!(self, EnqAdvanceTail, rmw, &*self.tail);
                let _ = self
                    .tail
                    .compare_exchange(tail, new, Ordering::Release, Ordering::Relaxed);
                break;
            }
            retries += 1;
            backoff(retries);
        }

        // Phase 3: conditional reclamation.
        if self.config.should_trigger(cycle) {
            self.counters.reclaim_attempts.fetch_add(1, Ordering::Relaxed);
            self.reclaim();
        }
        Ok(())
    }

    /// One dequeue attempt.
    pub fn try_dequeue(&self) -> TryDequeue<T> {
        if P::ENABLED && self.probe.force_retry() {
            return TryDequeue::Retry;
        }
        let mut last_frontier = FRONTIER_SENTINEL;
        let mut current: *mut Node = ptr::null_mut();
        let mut last_cursor: *mut Node = ptr::null_mut();
        let mut cursor_cycle = 0u64;

        // Phases 1-2: find and claim the first AVAILABLE node.
        loop {
            probe!(self, DeqLoadFrontier, read, &*self.deque_cycle);
            let frontier = self.deque_cycle.load(Ordering::Acquire);
            if frontier != last_frontier {
                last_frontier = frontier;
                probe!(self, DeqLoadCursor, read, &*self.scan_cursor);
                current = self.scan_cursor.load(Ordering::Acquire);
                last_cursor = current;
                probe!(self, DeqCursorCycle, read, &node(current).cycle);
                cursor_cycle = node(current).cycle.load(Ordering::Acquire);
                mark!(self, Marker::PhaseDone(Phase::Dequeue(DequeuePhase::CursorLoad)));
            }
            let c = node(current);
            probe!(self, DeqClaim, rmw, &c.state);
            if c
                .state
                .compare_exchange(AVAILABLE, CLAIMED, Ordering::AcqRel, Ordering::Acquire)
                .is_ok()
            {
                break;
            }
            probe!(self, DeqLoadNext, read, &c.next);
            let next = c.next.load(Ordering::Acquire);
            if next.is_null() {
                // End of the list. If the cursor moved underneath us the walk
                // may have been on recycled nodes, so don't claim emptiness.
                probe!(self, DeqEmptyCheck, read, &*self.scan_cursor);
                let now = self.scan_cursor.load(Ordering::Acquire);
                if now != last_cursor {
                    return TryDequeue::Retry;
                }
                probe!(self, DeqEmptyCheckCycle, read, &node(now).cycle);
                if node(now).cycle.load(Ordering::Acquire) != cursor_cycle {
                    return TryDequeue::Retry;
                }
                return TryDequeue::Empty;
            }
            current = next;
        }

        let claimed = node(current);
        let claimed_cycle = claimed.cycle.load(Ordering::Acquire);
        #[cfg(debug_assertions)]
        let claim_epoch = claimed.poison_epoch();
        mark!(
            self,
            Marker::Claimed {
                cycle: claimed_cycle,
                slot: claimed.slot()
            }
        );
        mark!(self, Marker::PhaseDone(Phase::Dequeue(DequeuePhase::Claim)));

        // Phase 3: take the payload.
        probe!(self, DeqRecheckState, read, &claimed.state);
        if claimed.state.load(Ordering::Acquire) == AVAILABLE {
            // Recycled and republished since our claim.
            return TryDequeue::Retry;
        }
        probe!(self, DeqLoadData, read, &claimed.data);
        let data = claimed.data.load(Ordering::Acquire);
        #[cfg(debug_assertions)]
        let mut poisoned = claimed.poison_epoch() != claim_epoch;
        #[cfg(debug_assertions)]
        if poisoned {
            self.pool.note_poison_violation();
        }
        if data == 0 {
            return TryDequeue::Retry;
        }
        probe!(self, DeqTakeData, rmw, &claimed.data);
        if claimed
            .data
            .compare_exchange(data, 0, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return TryDequeue::Retry;
        }
        #[cfg(debug_assertions)]
        if !poisoned && claimed.poison_epoch() != claim_epoch {
            poisoned = true;
            self.pool.note_poison_violation();
        }
        #[cfg(debug_assertions)]
        let _ = poisoned;
        // SAFETY: the CAS above transferred sole ownership of `data` to us.
        let item = unsafe { T::from_raw(NonZeroUsize::new_unchecked(data)) };
        mark!(self, Marker::PhaseDone(Phase::Dequeue(DequeuePhase::DataClaim)));

        // Phase 4: advance the cursor only if both its link and the cycle
        // captured with it are unchanged.
        let mut advance_boundary = true;
        probe!(self, DeqCursorCheck, read, &*self.scan_cursor);
        let cursor_now = self.scan_cursor.load(Ordering::Acquire);
        if cursor_now == last_cursor {
            probe!(self, DeqCursorCheckCycle, read, &node(cursor_now).cycle);
            let observed = node(cursor_now).cycle.load(Ordering::Acquire);
            if observed != cursor_cycle {
                mark!(
                    self,
                    Marker::CursorRefused {
                        captured: cursor_cycle,
                        observed
                    }
                );
            } else {
                probe!(self, DeqLoadSuccessor, read, &claimed.next);
                let next = claimed.next.load(Ordering::Acquire);
                // With no successor, park the cursor on the claimed node
                // itself so it does not lag behind the frontier.
                let target = if next.is_null() { current } else { next };
                if target != last_cursor {
                    if P::ENABLED {
                        // The marker below re-reads the replaced node's cycle.
                        self.probe.also_touches(Access::read(&node(last_cursor).cycle));
                    }
                    probe!(self, DeqAdvanceCursor, rmw, &*self.scan_cursor);
                    let moved = self
                        .scan_cursor
                        .compare_exchange(last_cursor, target, Ordering::AcqRel, Ordering::Acquire)
                        .is_ok();
                    if moved {
                        mark!(
                            self,
                            Marker::CursorAdvanced {
                                captured: cursor_cycle,
                                observed: node(last_cursor).cycle.load(Ordering::Acquire),
                            }
                        );
                    }
                    advance_boundary = moved || next.is_null();
                }
            }
        }
        mark!(self, Marker::PhaseDone(Phase::Dequeue(DequeuePhase::CursorAdvance)));

        // Phase 5: publish the frontier, monotonically.
        if advance_boundary {
            probe!(self, DeqLoadBoundary, read, &*self.deque_cycle);
            let mut seen = self.deque_cycle.load(Ordering::Acquire);
            while seen < claimed_cycle {
                probe!(self, DeqRaiseBoundary, rmw, &*self.deque_cycle);
                match self.deque_cycle.compare_exchange(
                    seen,
                    claimed_cycle,
                    Ordering::AcqRel,
                    Ordering::Acquire,
                ) {
                    Ok(_) => {
                        mark!(self, Marker::FrontierRaised { cycle: claimed_cycle });
                        break;
                    }
                    Err(v) => seen = v,
                }
            }
        }
        mark!(self, Marker::PhaseDone(Phase::Dequeue(DequeuePhase::BoundaryUpdate)));
        TryDequeue::Item(item)
    }

    /// Dequeues, retrying transient failures until an item or EMPTY.
    pub fn dequeue(&self) -> Option<T> {
        let mut retries = 0u32;
        loop {
            match self.try_dequeue() {
                TryDequeue::Item(t) => return Some(t),
                TryDequeue::Empty => return None,
                TryDequeue::Retry => {
                    retries = retries.saturating_add(1);
                    if P::ENABLED {
                        self.probe.spin(Point::DeqRetry);
                    }
                    backoff(retries);
                }
            }
        }
    }

    /// Like [`dequeue`](Self::dequeue) but gives up with `Retry` after
    /// `max_retries` transient failures.
    pub fn dequeue_with_budget(&self, max_retries: usize) -> TryDequeue<T> {
        let mut retries = 0usize;
        loop {
            match self.try_dequeue() {
                TryDequeue::Retry if retries < max_retries => {
                    retries += 1;
                    if P::ENABLED {
                        self.probe.spin(Point::DeqRetry);
                    }
                    backoff(retries.min(u32::MAX as usize) as u32);
                }
                other => return other,
            }
        }
    }

    /// Runs one reclamation pass unless another thread is already reclaiming.
    /// Returns the number of nodes returned to the pool.
    pub fn reclaim(&self) -> usize {
        probe!(self, ReclaimEnter, rmw, &*self.reclaim_active);
        if self.reclaim_active.swap(true, Ordering::AcqRel) {
            return 0;
        }
        self.counters.reclaim_passes.fetch_add(1, Ordering::Relaxed);
        let freed = self.reclaim_pass();
        probe!(self, ReclaimExit, write, &*self.reclaim_active);
        self.reclaim_active.store(false, Ordering::Release);
        freed
    }

    fn reclaim_pass(&self) -> usize {
        let window = self.config.window_size;
        probe!(self, ReclaimLoadFrontier, read, &*self.deque_cycle);
        let frontier = self.deque_cycle.load(Ordering::Acquire);
        let safe = safe_cycle(frontier, window);
        let head = node(self.head.load(Ordering::Acquire));
        // The cursor and tail only move forward, so nothing before the values
        // loaded here can become either of them again.
        probe!(self, ReclaimLoadCursor, read, &*self.scan_cursor);
        let cursor_stop = self.scan_cursor.load(Ordering::Acquire);
        probe!(self, ReclaimLoadTail, read, &*self.tail);
        let tail_stop = self.tail.load(Ordering::Acquire);

        probe!(self, ReclaimLoadHead, read, &head.next);
        let mut current = head.next.load(Ordering::Acquire);
        let mut freed = 0usize;
        let mut batch: Vec<NonNull<Node>> = Vec::new();
        let mut states: Vec<NodeState> = Vec::new();
        while !current.is_null() {
            let original_next = current;
            let mut new_next = current;
            batch.clear();
            states.clear();
            while !current.is_null() && current != cursor_stop && current != tail_stop {
                let c = node(current);
                // Cycle check first: immutable while linked.
                probe!(self, ReclaimInspectCycle, read, &c.cycle);
                if c.cycle.load(Ordering::Relaxed) >= safe {
                    break;
                }
                probe!(self, ReclaimInspect, read, &c.state);
                let state = NodeState::from_u8(c.state.load(Ordering::Acquire));
                if state == NodeState::Available {
                    break;
                }
                // SAFETY: current is non-null.
                batch.push(unsafe { NonNull::new_unchecked(current) });
                states.push(state);
                probe!(self, ReclaimLoadNext, read, &c.next);
                let next = c.next.load(Ordering::Acquire);
                new_next = next;
                current = next;
            }
            if batch.is_empty() || batch.len() < self.config.min_batch_size {
                break;
            }
            probe!(self, ReclaimSwing, rmw, &head.next);
            if head
                .next
                .compare_exchange(original_next, new_next, Ordering::AcqRel, Ordering::Acquire)
                .is_err()
            {
                break;
            }
            self.free_batch(&batch, &states, frontier, window);
            freed += batch.len();
        }
        freed
    }

    fn free_batch(&self, batch: &[NonNull<Node>], states: &[NodeState], frontier: u64, window: u64) {
        let mut log = if self.config.log_reclamation {
            Some(self.reclaim_log.lock().unwrap_or_else(|e| e.into_inner()))
        } else {
            None
        };
        for (n, state) in batch.iter().zip(states) {
            let n = unsafe { n.as_ref() };
            // A claimer that stalled past the window never took its payload.
            probe!(self, ReclaimScrub, rmw, &n.data);
            let data = n.data.swap(0, Ordering::AcqRel);
            if let Some(raw) = NonZeroUsize::new(data) {
                self.counters.abandoned.fetch_add(1, Ordering::Relaxed);
                drop(unsafe { T::from_raw(raw) });
            }
            probe!(self, ReclaimResetNext, write, &n.next);
            n.next.store(ptr::null_mut(), Ordering::Release);
            if let Some(log) = log.as_mut() {
                log.push(ReclaimRecord {
                    cycle: n.cycle.load(Ordering::Relaxed),
                    state: *state,
                    deque_cycle_at_free: frontier,
                    window,
                });
            }
        }
        drop(log);
        probe!(self, ReclaimRelease, rmw, &self.pool);
        // SAFETY: the batch was unlinked by our successful swing CAS and no
        // other reclaimer can run concurrently.
        unsafe { self.pool.release_batch(batch) };
        self.counters
            .reclaimed
            .fetch_add(batch.len() as u64, Ordering::Relaxed);
    }

    pub fn stats(&self) -> QueueStats {
        QueueStats {
            cycle: self.cycle.load(Ordering::Acquire),
            deque_cycle: self.deque_cycle.load(Ordering::Acquire),
            pool: self.pool.stats(),
            reclaim_attempts: self.counters.reclaim_attempts.load(Ordering::Relaxed),
            reclaim_passes: self.counters.reclaim_passes.load(Ordering::Relaxed),
            reclaimed_nodes: self.counters.reclaimed.load(Ordering::Relaxed),
            abandoned_payloads: self.counters.abandoned.load(Ordering::Relaxed),
        }
    }

    pub fn deque_cycle(&self) -> u64 {
        self.deque_cycle.load(Ordering::Acquire)
    }

    /// Drains the reclamation log. Empty unless `log_reclamation` is set.
    pub fn take_reclaim_log(&self) -> Vec<ReclaimRecord> {
        std::mem::take(&mut *self.reclaim_log.lock().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn inspect(&self) -> Inspector<'_, T, P> {
        Inspector { queue: self }
    }
}

/// Structural introspection. Only consistent when the queue is quiescent or
/// the caller otherwise excludes concurrent mutation.
pub struct Inspector<'a, T: Handle, P: Probe> {
    queue: &'a CmpQueue<T, P>,
}

impl<T: Handle, P: Probe> Inspector<'_, T, P> {
    const WALK_LIMIT: usize = 1 << 26;

    pub fn head(&self) -> NodeView {
        NodeView::of(node(self.queue.head.load(Ordering::Acquire)))
    }

    pub fn tail(&self) -> NodeView {
        NodeView::of(node(self.queue.tail.load(Ordering::Acquire)))
    }

    pub fn cursor(&self) -> NodeView {
        NodeView::of(node(self.queue.scan_cursor.load(Ordering::Acquire)))
    }

    /// Queue-level shared locations with their addresses.
    pub fn locations(&self) -> [(usize, &'static str); 7] {
        let q = self.queue;
        [
            (&*q.head as *const _ as usize, "head"),
            (&*q.tail as *const _ as usize, "tail"),
            (&*q.scan_cursor as *const _ as usize, "scan_cursor"),
            (&*q.cycle as *const _ as usize, "cycle"),
            (&*q.deque_cycle as *const _ as usize, "deque_cycle"),
            (&*q.reclaim_active as *const _ as usize, "reclaim_active"),
            (&q.pool as *const _ as usize, "pool"),
        ]
    }

    /// Names a queue-level shared location by address.
    pub fn location_name(&self, addr: usize) -> Option<&'static str> {
        self.locations().iter().find(|(a, _)| *a == addr).map(|(_, n)| *n)
    }

    pub fn head_is_tail_is_cursor(&self) -> bool {
        let h = self.queue.head.load(Ordering::Acquire);
        h == self.queue.tail.load(Ordering::Acquire) && h == self.queue.scan_cursor.load(Ordering::Acquire)
    }

    /// Every node from the dummy to the physical end, in list order.
    pub fn list(&self) -> Vec<NodeView> {
        let mut out = Vec::new();
        let mut p = self.queue.head.load(Ordering::Acquire);
        while !p.is_null() && out.len() < Self::WALK_LIMIT {
            let n = node(p);
            out.push(NodeView::of(n));
            p = n.next.load(Ordering::Acquire);
        }
        out
    }

    /// Cycles of AVAILABLE nodes in list order: the abstract queue content.
    pub fn available_cycles(&self) -> Vec<u64> {
        self.list()
            .into_iter()
            .filter(|v| v.state == NodeState::Available)
            .map(|v| v.cycle)
            .collect()
    }

    /// Whether the cursor is reachable from head and every node strictly
    /// before it is CLAIMED.
    pub fn cursor_minimal(&self) -> bool {
        let cursor = self.queue.scan_cursor.load(Ordering::Acquire);
        let mut p = self.queue.head.load(Ordering::Acquire);
        let mut steps = 0;
        while !p.is_null() && steps < Self::WALK_LIMIT {
            if p == cursor {
                return true;
            }
            if node(p).state() == NodeState::Available {
                return false;
            }
            p = node(p).next.load(Ordering::Acquire);
            steps += 1;
        }
        false
    }

    /// Whether every node before the one with `slot` is non-AVAILABLE.
    pub fn predecessors_claimed(&self, slot: u32) -> bool {
        let mut p = self.queue.head.load(Ordering::Acquire);
        while !p.is_null() {
            let n = node(p);
            if n.slot() == slot {
                return true;
            }
            if n.state() == NodeState::Available {
                return false;
            }
            p = n.next.load(Ordering::Acquire);
        }
        false
    }
}

impl<T: Handle, P: Probe> Drop for CmpQueue<T, P> {
    fn drop(&mut self) {
        self.pool.for_each_slot(|n| {
            let data = n.data.swap(0, Ordering::Relaxed);
            if let Some(raw) = NonZeroUsize::new(data) {
                drop(unsafe { T::from_raw(raw) });
            }
        });
    }
}

impl<T: Handle, P: Probe> std::fmt::Debug for CmpQueue<T, P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CmpQueue")
            .field("config", &self.config)
            .field("stats", &self.stats())
            .finish()
    }
}
