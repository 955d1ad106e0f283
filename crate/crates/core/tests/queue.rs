use std::collections::{HashSet, VecDeque};
use std::num::NonZeroU64;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Barrier};
use std::thread;

use cmpq::{
    is_reclaimable, safe_cycle, CmpQueue, EnqueueError, Growth, NodeState, QueueConfig, TryDequeue,
};
use proptest::prelude::*;

fn id(v: u64) -> NonZeroU64 {
    NonZeroU64::new(v).unwrap()
}

fn small_queue(window: u64, min_batch: usize) -> CmpQueue<NonZeroU64> {
    let cfg = QueueConfig::default()
        .with_window(window)
        .with_min_batch(min_batch)
        .with_trigger_period(u64::MAX);
    CmpQueue::new(cfg).unwrap()
}

#[test]
fn new_queue_is_empty_and_aliased() {
    let q: CmpQueue<NonZeroU64> = CmpQueue::default();
    assert!(q.inspect().head_is_tail_is_cursor());
    assert_eq!(q.try_dequeue(), TryDequeue::Empty);
    let head = q.inspect().head();
    assert_eq!(head.state, NodeState::Claimed);
    assert_eq!(head.cycle, 0);
    let s = q.stats();
    assert_eq!((s.cycle, s.deque_cycle), (0, 0));
}

#[test]
fn single_round_trip() {
    let q: CmpQueue<NonZeroU64> = CmpQueue::default();
    q.enqueue(id(9)).unwrap();
    assert_eq!(q.dequeue(), Some(id(9)));
    assert_eq!(q.dequeue(), None);
}

#[test]
fn first_insertion_gets_cycle_one() {
    let q: CmpQueue<NonZeroU64> = CmpQueue::default();
    q.enqueue(id(1)).unwrap();
    let list = q.inspect().list();
    assert_eq!(list.len(), 2);
    assert_eq!(list[1].cycle, 1);
    assert_eq!(list[1].state, NodeState::Available);
    q.enqueue(id(2)).unwrap();
    let cycles: Vec<u64> = q.inspect().list().iter().map(|v| v.cycle).collect();
    assert_eq!(cycles, vec![0, 1, 2]);
}

#[test]
fn sequential_fifo() {
    let q: CmpQueue<NonZeroU64> = CmpQueue::default();
    for v in [1, 2, 3] {
        q.enqueue(id(v)).unwrap();
    }
    let got: Vec<u64> = (0..3).map(|_| q.dequeue().unwrap().get()).collect();
    assert_eq!(got, vec![1, 2, 3]);
    assert_eq!(q.try_dequeue(), TryDequeue::Empty);
}

#[test]
fn trigger_fires_once_per_period() {
    let cfg = QueueConfig::default().with_trigger_period(4);
    let q: CmpQueue<NonZeroU64> = CmpQueue::new(cfg).unwrap();
    let mut attempts = 0u64;
    for v in 1..=4 {
        q.enqueue(id(v)).unwrap();
        attempts = q.stats().reclaim_attempts;
        if v < 4 {
            assert_eq!(attempts, 0);
        }
    }
    assert_eq!(attempts, 1);
    for v in 5..=7 {
        q.enqueue(id(v)).unwrap();
    }
    assert_eq!(q.stats().reclaim_attempts, 1);
}

/// Hand oracle: walk the list after the dummy and count the maximal prefix
/// that satisfies the safety predicate, stopping at the cursor and tail.
fn oracle_reclaimable(q: &CmpQueue<NonZeroU64>, window: u64) -> usize {
    let safe = safe_cycle(q.stats().deque_cycle, window);
    let cursor = q.inspect().cursor();
    let tail = q.inspect().tail();
    q.inspect()
        .list()
        .into_iter()
        .skip(1)
        .take_while(|v| v.slot != cursor.slot && v.slot != tail.slot)
        .take_while(|v| is_reclaimable(v.state, v.cycle, safe))
        .count()
}

#[test]
fn reclaim_frees_claimed_prefix_below_boundary() {
    let q = small_queue(5, 1);
    for v in 1..=21 {
        q.enqueue(id(v)).unwrap();
    }
    for _ in 0..20 {
        q.dequeue().unwrap();
    }
    assert_eq!(q.stats().deque_cycle, 20);
    let expected = oracle_reclaimable(&q, 5);
    // Cycles 1..=14 are below 20 - 5.
    assert_eq!(expected, 14);
    assert_eq!(q.reclaim(), expected);
    assert_eq!(q.inspect().list()[1].cycle, 15);
    assert_eq!(q.dequeue(), Some(id(21)));
}

#[test]
fn reclaim_respects_min_batch() {
    let q = small_queue(18, 4);
    for v in 1..=21 {
        q.enqueue(id(v)).unwrap();
    }
    for _ in 0..20 {
        q.dequeue().unwrap();
    }
    // safe_cycle = 2: only cycle 1 qualifies, below the batch threshold.
    assert_eq!(oracle_reclaimable(&q, 18), 1);
    assert_eq!(q.reclaim(), 0);
    let q1 = small_queue(18, 1);
    for v in 1..=21 {
        q1.enqueue(id(v)).unwrap();
    }
    for _ in 0..20 {
        q1.dequeue().unwrap();
    }
    assert_eq!(q1.reclaim(), 1);
}

#[test]
fn reclaim_on_fresh_queue_frees_nothing() {
    let q = small_queue(1, 1);
    assert_eq!(q.reclaim(), 0);
    q.enqueue(id(1)).unwrap();
    assert_eq!(q.reclaim(), 0);
}

#[test]
fn available_nodes_are_never_reclaimed() {
    let q = small_queue(1, 1);
    for v in 1..=10 {
        q.enqueue(id(v)).unwrap();
    }
    // Frontier 0: nothing claimed.
    assert_eq!(q.reclaim(), 0);
    assert_eq!(q.inspect().available_cycles().len(), 10);
}

#[test]
fn fixed_pool_reports_full_and_returns_item() {
    let cfg = QueueConfig::default()
        .with_window(1)
        .with_min_batch(1)
        .with_trigger_period(u64::MAX)
        .with_pool(4, Growth::Fixed);
    let q: CmpQueue<NonZeroU64> = CmpQueue::new(cfg).unwrap();
    // One slot is the dummy.
    for v in 1..=3 {
        q.enqueue(id(v)).unwrap();
    }
    assert_eq!(q.enqueue(id(4)), Err(EnqueueError::Full(id(4))));
    for v in 1..=3 {
        assert_eq!(q.dequeue(), Some(id(v)));
    }
    // Exhaustion now triggers a reclaim that frees cycles below 3 - 1.
    q.enqueue(id(5)).unwrap();
    assert_eq!(q.dequeue(), Some(id(5)));
}

#[test]
fn budgeted_dequeue_maps_results() {
    let q: CmpQueue<NonZeroU64> = CmpQueue::default();
    assert_eq!(q.dequeue_with_budget(3), TryDequeue::Empty);
    q.enqueue(id(3)).unwrap();
    assert_eq!(q.dequeue_with_budget(0), TryDequeue::Item(id(3)));
}

#[derive(Debug)]
struct Tracked(Arc<AtomicUsize>);

impl Drop for Tracked {
    fn drop(&mut self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }
}

#[test]
fn boxed_payloads_dropped_exactly_once() {
    let drops = Arc::new(AtomicUsize::new(0));
    {
        let q: CmpQueue<Box<Tracked>> = CmpQueue::new(
            QueueConfig::default()
                .with_window(2)
                .with_min_batch(1)
                .with_trigger_period(8),
        )
        .unwrap();
        for _ in 0..100 {
            q.enqueue(Box::new(Tracked(drops.clone()))).unwrap();
        }
        for _ in 0..60 {
            drop(q.dequeue().unwrap());
        }
        assert_eq!(drops.load(Ordering::SeqCst), 60);
        q.reclaim();
        assert_eq!(drops.load(Ordering::SeqCst), 60);
    }
    assert_eq!(drops.load(Ordering::SeqCst), 100);
}

#[test]
fn mpmc_conservation_small() {
    const P: u64 = 4;
    const C: usize = 4;
    const PER: u64 = 25_000;
    let q: Arc<CmpQueue<NonZeroU64>> = Arc::new(CmpQueue::new(QueueConfig::default()).unwrap());
    let consumed = Arc::new(AtomicUsize::new(0));
    let start = Arc::new(Barrier::new(P as usize + C));
    let producers: Vec<_> = (0..P)
        .map(|p| {
            let (q, start) = (q.clone(), start.clone());
            thread::spawn(move || {
                start.wait();
                for i in 0..PER {
                    q.enqueue(id(p * PER + i + 1)).unwrap();
                }
            })
        })
        .collect();
    let consumers: Vec<_> = (0..C)
        .map(|_| {
            let (q, start, consumed) = (q.clone(), start.clone(), consumed.clone());
            thread::spawn(move || {
                start.wait();
                let mut got = Vec::new();
                // Per-producer order must be preserved for each consumer.
                let mut last = [0u64; P as usize];
                while consumed.load(Ordering::Relaxed) < (P * PER) as usize {
                    match q.dequeue() {
                        Some(v) => {
                            let v = v.get();
                            let p = ((v - 1) / PER) as usize;
                            assert!(v > last[p], "per-producer order violated");
                            last[p] = v;
                            got.push(v);
                            consumed.fetch_add(1, Ordering::Relaxed);
                        }
                        None => thread::yield_now(),
                    }
                }
                got
            })
        })
        .collect();
    for p in producers {
        p.join().unwrap();
    }
    let mut seen = HashSet::new();
    for c in consumers {
        for v in c.join().unwrap() {
            assert!(seen.insert(v), "duplicate {v}");
        }
    }
    assert_eq!(seen.len(), (P * PER) as usize);
    assert_eq!(q.dequeue(), None);
    let s = q.stats();
    assert_eq!(s.pool.poison_violations, 0);
}

#[test]
fn retained_memory_stays_bounded() {
    let w = 256;
    let cfg = QueueConfig::default()
        .with_window(w)
        .with_min_batch(8)
        .with_trigger_period(64);
    let q: CmpQueue<NonZeroU64> = CmpQueue::new(cfg).unwrap();
    for v in 1..=100_000u64 {
        q.enqueue(id(v)).unwrap();
        assert_eq!(q.dequeue(), Some(id(v)));
        let s = q.stats();
        // dummy + window + pending trigger delay + batch slack
        assert!(s.pool.in_use <= 1 + w + 64 + 8 + 1, "in_use {}", s.pool.in_use);
    }
    assert!(q.stats().pool.capacity <= 8192);
}

#[derive(Clone, Debug)]
enum Op {
    Enq,
    Deq,
    Reclaim,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![4 => Just(Op::Enq), 3 => Just(Op::Deq), 1 => Just(Op::Reclaim)]
}

proptest! {
    /// Single-threaded runs agree with a VecDeque model, and the pool's
    /// in-use count always equals the number of nodes reachable from head.
    #[test]
    fn matches_sequential_model(ops in prop::collection::vec(op(), 1..400), w in 1u64..8, b in 1usize..4) {
        let cfg = QueueConfig::default().with_window(w).with_min_batch(b).with_trigger_period(5);
        let q: CmpQueue<NonZeroU64> = CmpQueue::new(cfg).unwrap();
        let mut model = VecDeque::new();
        let mut next = 1u64;
        for op in ops {
            match op {
                Op::Enq => {
                    q.enqueue(id(next)).unwrap();
                    model.push_back(next);
                    next += 1;
                }
                Op::Deq => prop_assert_eq!(q.dequeue().map(|v| v.get()), model.pop_front()),
                Op::Reclaim => { q.reclaim(); }
            }
            let insp = q.inspect();
            prop_assert!(insp.cursor_minimal());
            prop_assert_eq!(q.stats().pool.in_use as usize, insp.list().len());
            let avail = insp.available_cycles();
            prop_assert_eq!(avail.len(), model.len());
        }
        for rec in q.take_reclaim_log() {
            prop_assert!(rec.state != NodeState::Available);
        }
    }
}
