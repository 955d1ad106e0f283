//! Type-stable node pool.
//!
//! Slots are carved out of chunks that are never returned to the allocator
//! while the pool lives, so any link ever handed out keeps addressing a
//! structurally valid [`Node`]. Free slots sit on a Treiber stack whose top
//! word packs a 32-bit modification tag next to the slot index.

use std::ptr::{self, NonNull};
use std::sync::atomic::{AtomicPtr, AtomicU32, AtomicU64, AtomicU8, AtomicUsize, Ordering};

use crossbeam_utils::CachePadded;
use thiserror::Error;

/// Upper bound on the number of chunks. With doubling growth this covers far
/// more slots than the 32-bit slot index can address.
const MAX_CHUNKS: usize = 40;

const NO_SLOT: u32 = 0;

/// Lifecycle of a queue node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum NodeState {
    /// Linked (or about to be) and waiting for a consumer.
    Available = 0,
    /// Removed from the abstract queue by a successful claim.
    Claimed = 1,
}

impl NodeState {
    #[inline]
    pub(crate) fn from_u8(v: u8) -> Self {
        if v == NodeState::Available as u8 {
            NodeState::Available
        } else {
            NodeState::Claimed
        }
    }
}

/// A pooled queue cell.
///
/// Every field is atomic: a stale reader may look at a node while it is being
/// recycled, and type stability only makes that sound if the reads themselves
/// are data-race free.
#[repr(align(64))]
pub struct Node {
    pub(crate) cycle: AtomicU64,
    pub(crate) next: AtomicPtr<Node>,
    pub(crate) data: AtomicUsize,
    pub(crate) state: AtomicU8,
    slot: u32,
    free_next: AtomicU32,
    #[cfg(debug_assertions)]
    poison_epoch: AtomicU64,
}

impl Node {
    fn fresh(slot: u32) -> Self {
        Node {
            cycle: AtomicU64::new(0),
            next: AtomicPtr::new(ptr::null_mut()),
            data: AtomicUsize::new(0),
            // Slots that were never handed out count as retired.
            state: AtomicU8::new(NodeState::Claimed as u8),
            slot,
            free_next: AtomicU32::new(NO_SLOT),
            #[cfg(debug_assertions)]
            poison_epoch: AtomicU64::new(0),
        }
    }

    /// Index of this slot inside the pool. Stable for the life of the pool.
    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn cycle(&self) -> u64 {
        self.cycle.load(Ordering::Relaxed)
    }

    pub fn state(&self) -> NodeState {
        NodeState::from_u8(self.state.load(Ordering::Acquire))
    }

    pub fn next_ptr(&self) -> *mut Node {
        self.next.load(Ordering::Acquire)
    }

    pub fn data_raw(&self) -> usize {
        self.data.load(Ordering::Acquire)
    }

    /// Number of times this slot went back to the free list.
    #[cfg(debug_assertions)]
    pub fn poison_epoch(&self) -> u64 {
        self.poison_epoch.load(Ordering::Acquire)
    }
}

/// How the pool reacts to an empty free list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Growth {
    /// Allocate a new chunk as large as everything allocated so far.
    Geometric,
    /// Never grow; `acquire` reports [`PoolError::Exhausted`].
    Fixed,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("initial pool capacity must be at least 1")]
    ZeroCapacity,
    #[error("initial pool capacity {0} exceeds the addressable slot range")]
    CapacityTooLarge(usize),
    #[error("node pool exhausted")]
    Exhausted,
}

/// Counter snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PoolStats {
    pub acquired_total: u64,
    pub recycled_total: u64,
    pub in_use: u64,
    pub in_use_high_water: u64,
    pub poison_violations: u64,
    /// Links found on a recycled slot before its new owner published it: a
    /// producer that read the slot as the tail long ago linked onto it after
    /// it was freed, and the item behind that link is gone. Only counted in
    /// debug builds.
    pub clobbered_links: u64,
    /// Slots owned by the pool, free or not.
    pub capacity: u64,
}

#[derive(Default)]
struct Counters {
    acquired: AtomicU64,
    recycled: AtomicU64,
    high_water: AtomicU64,
    poison: AtomicU64,
    clobbered: AtomicU64,
}

pub struct NodePool {
    top: CachePadded<AtomicU64>,
    counters: CachePadded<Counters>,
    chunks: [AtomicPtr<Node>; MAX_CHUNKS],
    chunk_count: AtomicUsize,
    capacity: AtomicUsize,
    initial: usize,
    growth: Growth,
}

// SAFETY: all shared state is atomic and chunk memory is only freed in Drop.
unsafe impl Send for NodePool {}
unsafe impl Sync for NodePool {}

#[inline]
fn pack(tag: u32, slot_plus_one: u32) -> u64 {
    ((tag as u64) << 32) | slot_plus_one as u64
}

#[inline]
fn unpack(word: u64) -> (u32, u32) {
    ((word >> 32) as u32, word as u32)
}

impl NodePool {
    pub fn new(initial_capacity: usize, growth: Growth) -> Result<Self, PoolError> {
        if initial_capacity == 0 {
            return Err(PoolError::ZeroCapacity);
        }
        if initial_capacity > (u32::MAX as usize) / 4 {
            return Err(PoolError::CapacityTooLarge(initial_capacity));
        }
        let pool = NodePool {
            top: CachePadded::new(AtomicU64::new(pack(0, NO_SLOT))),
            counters: CachePadded::new(Counters::default()),
            chunks: std::array::from_fn(|_| AtomicPtr::new(ptr::null_mut())),
            chunk_count: AtomicUsize::new(0),
            capacity: AtomicUsize::new(0),
            initial: initial_capacity,
            growth,
        };
        pool.add_chunk(0);
        Ok(pool)
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    fn chunk_len(&self, k: usize) -> usize {
        if k == 0 {
            self.initial
        } else {
            self.initial << (k - 1)
        }
    }

    fn chunk_base(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.initial << (k - 1)
        }
    }

    fn locate(&self, slot: u32) -> (usize, usize) {
        let i = slot as usize;
        if i < self.initial {
            return (0, i);
        }
        let ratio = i / self.initial;
        let k = (usize::BITS - 1 - ratio.leading_zeros()) as usize + 1;
        (k, i - self.chunk_base(k))
    }

    /// Resolves a slot index to its node.
    ///
    /// # Panics
    /// If the slot has not been allocated.
    pub fn node(&self, slot: u32) -> NonNull<Node> {
        let (k, off) = self.locate(slot);
        let base = self.chunks[k].load(Ordering::Acquire);
        assert!(!base.is_null(), "slot {slot} is outside the pool");
        // SAFETY: `off` < chunk_len(k) by construction of `locate`.
        unsafe { NonNull::new_unchecked(base.add(off)) }
    }

    /// Maps an address inside pool memory to the slot whose node contains it.
    pub fn slot_of(&self, addr: usize) -> Option<u32> {
        let size = std::mem::size_of::<Node>();
        for k in 0..MAX_CHUNKS {
            let base = self.chunks[k].load(Ordering::Acquire);
            if base.is_null() {
                continue;
            }
            let start = base as usize;
            let end = start + self.chunk_len(k) * size;
            if (start..end).contains(&addr) {
                return Some((self.chunk_base(k) + (addr - start) / size) as u32);
            }
        }
        None
    }

    /// Installs chunk `k` unless another thread already did. Returns whether
    /// this call installed it.
    fn add_chunk(&self, k: usize) -> bool {
        if k >= MAX_CHUNKS {
            return false;
        }
        let len = self.chunk_len(k);
        let base_slot = self.chunk_base(k);
        if base_slot + len > (u32::MAX - 1) as usize {
            return false;
        }
        let nodes: Box<[Node]> = (0..len)
            .map(|i| Node::fresh((base_slot + i) as u32))
            .collect();
        let raw = Box::into_raw(nodes) as *mut Node;
        if self.chunks[k]
            .compare_exchange(ptr::null_mut(), raw, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            // SAFETY: `raw` came from Box::into_raw above and was never shared.
            drop(unsafe { Box::from_raw(ptr::slice_from_raw_parts_mut(raw, len)) });
            return false;
        }
        self.capacity.fetch_add(len, Ordering::AcqRel);
        // Chain the new slots and push them with a single CAS.
        for i in 0..len {
            let link = if i + 1 < len {
                (base_slot + i + 2) as u32
            } else {
                NO_SLOT
            };
            // SAFETY: i < len.
            unsafe { (*raw.add(i)).free_next.store(link, Ordering::Relaxed) };
        }
        // SAFETY: chunk is non-empty.
        let (first, last) = unsafe { (&*raw, &*raw.add(len - 1)) };
        self.push_chain(first, last);
        self.chunk_count.fetch_max(k + 1, Ordering::AcqRel);
        true
    }

    fn push_chain(&self, first: &Node, last: &Node) {
        let mut top = self.top.load(Ordering::Acquire);
        loop {
            let (tag, head) = unpack(top);
            last.free_next.store(head, Ordering::Relaxed);
            match self.top.compare_exchange_weak(
                top,
                pack(tag.wrapping_add(1), first.slot + 1),
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return,
                Err(cur) => top = cur,
            }
        }
    }

    fn pop(&self) -> Option<NonNull<Node>> {
        let mut top = self.top.load(Ordering::Acquire);
        loop {
            let (tag, head) = unpack(top);
            if head == NO_SLOT {
                return None;
            }
            let node = self.node(head - 1);
            // May be stale if another thread popped this slot meanwhile; the
            // tag makes the CAS below fail in that case.
            let next = unsafe { node.as_ref() }.free_next.load(Ordering::Relaxed);
            match self.top.compare_exchange_weak(
                top,
                pack(tag.wrapping_add(1), next),
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return Some(node),
                Err(cur) => top = cur,
            }
        }
    }

    /// Slot the next `acquire` would return, if the free list is non-empty.
    /// Only meaningful while no other thread is using the pool.
    pub fn peek_free(&self) -> Option<u32> {
        let (_, head) = unpack(self.top.load(Ordering::Acquire));
        (head != NO_SLOT).then(|| head - 1)
    }

    #[cfg(debug_assertions)]
    pub(crate) fn note_clobbered(&self) {
        self.counters.clobbered.fetch_add(1, Ordering::Relaxed);
    }

    /// Takes a node off the free list, growing the pool if allowed.
    ///
    /// The returned node is AVAILABLE with NIL links, NIL payload and cycle 0,
    /// and belongs to the caller until it is published.
    pub fn acquire(&self) -> Result<NonNull<Node>, PoolError> {
        let node = loop {
            if let Some(n) = self.pop() {
                break n;
            }
            match self.growth {
                Growth::Fixed => return Err(PoolError::Exhausted),
                Growth::Geometric => {
                    let k = self.chunk_count.load(Ordering::Acquire);
                    if !self.add_chunk(k) {
                        if k >= MAX_CHUNKS {
                            return Err(PoolError::Exhausted);
                        }
                        std::hint::spin_loop();
                    }
                }
            }
        };
        // SAFETY: pool memory is never freed while the pool is alive.
        let n = unsafe { node.as_ref() };
        #[cfg(debug_assertions)]
        if !n.next.swap(ptr::null_mut(), Ordering::Relaxed).is_null() {
            self.counters.clobbered.fetch_add(1, Ordering::Relaxed);
        }
        #[cfg(not(debug_assertions))]
        n.next.store(ptr::null_mut(), Ordering::Relaxed);
        n.data.store(0, Ordering::Relaxed);
        n.cycle.store(0, Ordering::Relaxed);
        n.state.store(NodeState::Available as u8, Ordering::Release);

        let acquired = self.counters.acquired.fetch_add(1, Ordering::Relaxed) + 1;
        let in_use = acquired.saturating_sub(self.counters.recycled.load(Ordering::Relaxed));
        if in_use > self.counters.high_water.load(Ordering::Relaxed) {
            self.counters.high_water.fetch_max(in_use, Ordering::Relaxed);
        }
        Ok(node)
    }

    /// Resets and returns a batch of retired nodes to the free list.
    ///
    /// # Safety
    /// Every node must come from this pool, be unreachable from the queue and
    /// not be released twice.
    ///
    /// # Panics
    /// In debug builds, if any node is still AVAILABLE.
    pub unsafe fn release_batch(&self, nodes: &[NonNull<Node>]) {
        if nodes.is_empty() {
            return;
        }
        for (i, n) in nodes.iter().enumerate() {
            let node = n.as_ref();
            debug_assert!(
                node.state() != NodeState::Available,
                "released slot {} while AVAILABLE",
                node.slot
            );
            node.next.store(ptr::null_mut(), Ordering::Release);
            node.data.store(0, Ordering::Release);
            #[cfg(debug_assertions)]
            node.poison_epoch.fetch_add(1, Ordering::AcqRel);
            let link = match nodes.get(i + 1) {
                Some(succ) => succ.as_ref().slot + 1,
                None => NO_SLOT,
            };
            node.free_next.store(link, Ordering::Relaxed);
        }
        let first = nodes[0].as_ref();
        let last = nodes[nodes.len() - 1].as_ref();
        self.push_chain(first, last);
        self.counters
            .recycled
            .fetch_add(nodes.len() as u64, Ordering::Relaxed);
    }

    /// Records a payload access on a node that was recycled after the
    /// accessor's claim.
    pub fn note_poison_violation(&self) {
        self.counters.poison.fetch_add(1, Ordering::Relaxed);
    }

    pub fn stats(&self) -> PoolStats {
        let recycled = self.counters.recycled.load(Ordering::Acquire);
        let acquired = self.counters.acquired.load(Ordering::Acquire);
        PoolStats {
            acquired_total: acquired,
            recycled_total: recycled,
            in_use: acquired.saturating_sub(recycled),
            in_use_high_water: self.counters.high_water.load(Ordering::Acquire),
            poison_violations: self.counters.poison.load(Ordering::Acquire),
            clobbered_links: self.counters.clobbered.load(Ordering::Relaxed),
            capacity: self.capacity.load(Ordering::Acquire) as u64,
        }
    }

    /// Number of slots currently on the free list. Walks the list, so only
    /// meaningful when the pool is quiescent.
    pub fn free_len(&self) -> usize {
        let (_, mut head) = unpack(self.top.load(Ordering::Acquire));
        let mut n = 0;
        while head != NO_SLOT {
            n += 1;
            head = unsafe { self.node(head - 1).as_ref() }
                .free_next
                .load(Ordering::Relaxed);
        }
        n
    }

    /// Visits every allocated slot.
    pub(crate) fn for_each_slot(&self, mut f: impl FnMut(&Node)) {
        let count = self.chunk_count.load(Ordering::Acquire);
        for k in 0..count {
            let base = self.chunks[k].load(Ordering::Acquire);
            if base.is_null() {
                continue;
            }
            for i in 0..self.chunk_len(k) {
                // SAFETY: i < chunk_len(k).
                f(unsafe { &*base.add(i) });
            }
        }
    }
}

impl Drop for NodePool {
    fn drop(&mut self) {
        for k in 0..MAX_CHUNKS {
            let base = *self.chunks[k].get_mut();
            if !base.is_null() {
                let len = self.chunk_len(k);
                // SAFETY: installed by add_chunk from a Box<[Node]> of this length.
                drop(unsafe { Box::from_raw(ptr::slice_from_raw_parts_mut(base, len)) });
            }
        }
    }
}

impl std::fmt::Debug for NodePool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodePool")
            .field("growth", &self.growth)
            .field("stats", &self.stats())
            .finish()
    }
}
