//! Stress runs on real OS threads.

use std::num::NonZeroU64;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Barrier, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use cmpq::{compute_window, CmpQueue, EnqueueError, Growth, QueueConfig, QueueStats, ReclaimRecord};

use crate::explore::{Scenario, ScriptOp, ThreadScript};
use crate::history::{EventKind, OpEvent, OpHistory, Payload};

type Queue = CmpQueue<NonZeroU64>;

/// Payload id: producer index in the high bits, sequence number below.
fn encode(producer: usize, seq: u64) -> NonZeroU64 {
    NonZeroU64::new(((producer as u64) << 40) | (seq + 1)).expect("nonzero")
}

fn decode(id: u64) -> (usize, u64) {
    ((id >> 40) as usize, (id & ((1 << 40) - 1)) - 1)
}

/// Enqueues, running a reclamation pass and backing off while the pool is
/// exhausted.
fn enqueue_blocking(q: &Queue, mut v: NonZeroU64) {
    let mut spins = 0u32;
    loop {
        match q.enqueue(v) {
            Ok(()) => return,
            Err(EnqueueError::Full(back)) => {
                v = back;
                q.reclaim();
                spins += 1;
                if spins > 8 {
                    thread::yield_now();
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct StressConfig {
    pub producers: usize,
    pub consumers: usize,
    pub items: u64,
    pub queue: QueueConfig,
    /// Reads the dequeue frontier at this rate while the run lasts.
    pub sample_hz: Option<u32>,
    /// Consumers give up once every producer is done and nothing has come
    /// out for this long, so a lost item shows up as a report instead of a
    /// hang.
    pub timeout: Duration,
}

/// Window for oversubscribed stress runs: about 5M ops/s with a thread
/// descheduled for up to 100 ms, which 16 runnable threads on one core
/// see every scheduler period.
pub fn stress_window() -> u64 {
    compute_window(5e6, 0.1, QueueConfig::default().min_window)
}

impl StressConfig {
    pub fn new(producers: usize, consumers: usize, items: u64) -> Self {
        StressConfig {
            producers,
            consumers,
            items,
            queue: QueueConfig {
                window_size: stress_window(),
                ..QueueConfig::default()
            },
            sample_hz: None,
            timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Default)]
pub struct StressReport {
    pub enqueued: u64,
    pub dequeued: u64,
    /// Ids seen more than once.
    pub duplicates: u64,
    /// Ids never seen.
    pub lost: u64,
    /// Consumer observed a producer's items out of order.
    pub order_violations: u64,
    pub elapsed: Duration,
    pub stats: QueueStats,
    pub frontier_samples: Vec<u64>,
    pub reclaim_log: Vec<ReclaimRecord>,
}

impl StressReport {
    pub fn conserved(&self) -> bool {
        self.duplicates == 0 && self.lost == 0 && self.dequeued == self.enqueued
    }

    /// Whether every frontier sample is at least the one before it.
    pub fn frontier_monotone(&self) -> bool {
        self.frontier_samples.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Splits `items` over `parts` as evenly as possible.
fn share(items: u64, parts: usize, i: usize) -> u64 {
    items / parts as u64 + u64::from((i as u64) < items % parts as u64)
}

/// Producers enqueue `items` tagged ids in total; consumers dequeue until all
/// are out. Afterwards every id is accounted for exactly once.
pub fn mpmc_stress(cfg: StressConfig) -> StressReport {
    let q: Queue = CmpQueue::new(cfg.queue.clone()).expect("valid stress config");
    let (items, producers, timeout) = (cfg.items, cfg.producers, cfg.timeout);
    let remaining = AtomicU64::new(cfg.items);
    let producers_left = AtomicU64::new(cfg.producers as u64);
    let consumers_left = AtomicU64::new(cfg.consumers as u64);
    let done = AtomicBool::new(false);
    let barrier = Barrier::new(cfg.producers + cfg.consumers + 1);
    let received: Mutex<Vec<Vec<u64>>> = Mutex::new(Vec::new());
    let mut samples = Vec::new();
    let start = Instant::now();
    thread::scope(|s| {
        for p in 0..cfg.producers {
            let (q, barrier, producers_left) = (&q, &barrier, &producers_left);
            s.spawn(move || {
                barrier.wait();
                for seq in 0..share(items, producers, p) {
                    enqueue_blocking(q, encode(p, seq));
                }
                producers_left.fetch_sub(1, Ordering::Release);
            });
        }
        for _ in 0..cfg.consumers {
            let (q, barrier, remaining, received, producers_left, consumers_left) =
                (&q, &barrier, &remaining, &received, &producers_left, &consumers_left);
            s.spawn(move || {
                let mut got = Vec::new();
                barrier.wait();
                let mut idle = 0u32;
                let mut last = (u64::MAX, Instant::now());
                while remaining.load(Ordering::Relaxed) > 0 {
                    match q.dequeue() {
                        Some(v) => {
                            got.push(v.get());
                            remaining.fetch_sub(1, Ordering::Relaxed);
                            idle = 0;
                        }
                        None => {
                            idle += 1;
                            if idle > 16 {
                                thread::yield_now();
                            }
                            if idle % 1024 == 0 && producers_left.load(Ordering::Acquire) == 0 {
                                let left = remaining.load(Ordering::Relaxed);
                                if left != last.0 {
                                    last = (left, Instant::now());
                                } else if last.1.elapsed() > timeout {
                                    break;
                                }
                            }
                        }
                    }
                }
                received.lock().unwrap().push(got);
                consumers_left.fetch_sub(1, Ordering::Release);
            });
        }
        if let Some(hz) = cfg.sample_hz {
            let (q, done) = (&q, &done);
            let period = Duration::from_secs_f64(1.0 / f64::from(hz));
            let h = s.spawn(move || {
                let mut out = Vec::new();
                let mut next = Instant::now();
                while !done.load(Ordering::Acquire) {
                    out.push(q.deque_cycle());
                    next += period;
                    let now = Instant::now();
                    if next > now {
                        thread::sleep(next - now);
                    } else {
                        next = now;
                    }
                }
                out.push(q.deque_cycle());
                out
            });
            barrier.wait();
            while remaining.load(Ordering::Relaxed) > 0 && consumers_left.load(Ordering::Acquire) > 0 {
                thread::sleep(Duration::from_millis(1));
            }
            done.store(true, Ordering::Release);
            samples = h.join().expect("sampler");
        } else {
            barrier.wait();
        }
    });
    let elapsed = start.elapsed();

    let received = received.into_inner().unwrap();
    let mut seen: Vec<Vec<bool>> = (0..cfg.producers)
        .map(|p| vec![false; share(cfg.items, cfg.producers, p) as usize])
        .collect();
    let mut report = StressReport {
        enqueued: cfg.items,
        elapsed,
        frontier_samples: samples,
        ..StressReport::default()
    };
    for got in &received {
        let mut last = vec![None; cfg.producers];
        for &id in got {
            report.dequeued += 1;
            let (p, seq) = decode(id);
            if p >= cfg.producers {
                report.duplicates += 1;
                continue;
            }
            match seen.get_mut(p).and_then(|v| v.get_mut(seq as usize)) {
                Some(flag) if *flag => report.duplicates += 1,
                Some(flag) => *flag = true,
                None => report.duplicates += 1,
            }
            if last[p].is_some_and(|l| l > seq) {
                report.order_violations += 1;
            }
            last[p] = Some(seq);
        }
    }
    report.lost = seen.iter().flatten().filter(|f| !**f).count() as u64;
    report.stats = q.stats();
    report.reclaim_log = q.take_reclaim_log();
    report
}

/// Heavy slot recycling: a small fixed pool and a short window.
pub fn poison_stress_config() -> StressConfig {
    StressConfig {
        queue: QueueConfig {
            window_size: 128,
            min_window: 1,
            trigger_period: 32,
            min_batch_size: 8,
            pool_capacity: 512,
            growth: Growth::Fixed,
            ..QueueConfig::default()
        },
        ..StressConfig::new(4, 4, 100_000)
    }
}

/// Runs the script threads of `scenario` on OS threads against an unprobed
/// queue and records a real-time history. Custom threads, stalls and the
/// scheduling options have no meaning here and are rejected.
pub fn run_parallel(scenario: &Scenario) -> Result<(OpHistory, QueueStats), &'static str> {
    if !scenario.stalls.is_empty() {
        return Err("stalls need the deterministic scheduler");
    }
    let scripts: Vec<&Vec<ScriptOp>> = scenario
        .threads
        .iter()
        .map(|t| match t {
            ThreadScript::Ops(ops) => Ok(ops),
            ThreadScript::Custom(_) => Err("custom threads need the deterministic scheduler"),
        })
        .collect::<Result<_, _>>()?;
    let q: Queue = CmpQueue::new(scenario.config.clone()).map_err(|_| "invalid queue config")?;
    let mut initial = Vec::new();
    for op in &scenario.setup {
        match *op {
            ScriptOp::Enq(v) => {
                q.enqueue(NonZeroU64::new(v).ok_or("payload 0")?)
                    .map_err(|_| "setup exhausted the pool")?;
                initial.push(v);
            }
            ScriptOp::Deq | ScriptOp::TryDeq => {
                if q.dequeue().is_some() {
                    initial.remove(0);
                }
            }
            ScriptOp::Reclaim => {
                q.reclaim();
            }
            ScriptOp::Resume(_) => {}
        }
    }
    let clock = AtomicU64::new(0);
    let tick = || clock.fetch_add(1, Ordering::SeqCst) + 1;
    let barrier = Barrier::new(scripts.len());
    let mut events: Vec<OpEvent> = thread::scope(|s| {
        let handles: Vec<_> = scripts
            .iter()
            .enumerate()
            .map(|(tid, ops)| {
                let (q, barrier, tick) = (&q, &barrier, &tick);
                s.spawn(move || {
                    barrier.wait();
                    let mut ev = Vec::new();
                    let mut push = |kind, payload| {
                        ev.push(OpEvent {
                            thread_id: tid,
                            kind,
                            payload,
                            logical_time: tick(),
                        })
                    };
                    for op in ops.iter() {
                        match *op {
                            ScriptOp::Enq(v) => {
                                push(EventKind::EnqInvoke, Payload::Id(v));
                                enqueue_blocking(q, NonZeroU64::new(v).expect("nonzero"));
                                push(EventKind::EnqReturn, Payload::Id(v));
                            }
                            ScriptOp::Deq | ScriptOp::TryDeq => {
                                push(EventKind::DeqInvoke, Payload::Unset);
                                let r = if *op == ScriptOp::Deq {
                                    q.dequeue().map_or(Payload::Empty, |v| Payload::Id(v.get()))
                                } else {
                                    match q.try_dequeue() {
                                        cmpq::TryDequeue::Item(v) => Payload::Id(v.get()),
                                        cmpq::TryDequeue::Empty => Payload::Empty,
                                        cmpq::TryDequeue::Retry => Payload::Retry,
                                    }
                                };
                                push(EventKind::DeqReturn, r);
                            }
                            ScriptOp::Reclaim => {
                                q.reclaim();
                            }
                            ScriptOp::Resume(_) => {}
                        }
                    }
                    ev
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker")).collect()
    });
    events.sort_by_key(|e| e.logical_time);
    let mut residue = Vec::new();
    while let Some(v) = q.dequeue() {
        residue.push(v.get());
    }
    Ok((
        OpHistory {
            initial,
            events,
            residue,
        },
        q.stats(),
    ))
}
