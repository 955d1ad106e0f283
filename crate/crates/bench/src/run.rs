//! One measured run.

use std::hint::black_box;
use std::num::NonZeroU64;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Barrier, Mutex};
use std::thread;
use std::time::{Duration, Instant, SystemTime};

use cmpq::{CmpQueue, EnqueueError};

use crate::config::{BenchConfig, BenchError, Impl};
use crate::locked::LockedQueue;
use crate::report::{analyze, median_report, BenchReport};

/// Raw measurements of one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSamples {
    pub implementation: Impl,
    pub producers: usize,
    pub consumers: usize,
    pub items: u64,
    pub load: Option<u32>,
    pub elapsed_ns: u64,
    pub enq_ns: Vec<u64>,
    pub deq_ns: Vec<u64>,
}

trait BenchQueue: Sync {
    fn push(&self, v: u64);
    fn pop(&self) -> Option<u64>;
}

impl BenchQueue for CmpQueue<NonZeroU64> {
    fn push(&self, v: u64) {
        let mut item = NonZeroU64::new(v).expect("ids start at 1");
        while let Err(EnqueueError::Full(back)) = self.enqueue(item) {
            item = back;
            self.reclaim();
            thread::yield_now();
        }
    }

    fn pop(&self) -> Option<u64> {
        self.dequeue().map(NonZeroU64::get)
    }
}

impl BenchQueue for LockedQueue<u64> {
    fn push(&self, v: u64) {
        self.enqueue(v);
    }

    fn pop(&self) -> Option<u64> {
        self.dequeue()
    }
}

/// Per-thread buffer larger than a typical L1, walked one cache line per
/// iteration.
struct Scratch {
    buf: Vec<u64>,
    at: usize,
}

const SCRATCH_WORDS: usize = 1 << 16;

impl Scratch {
    fn new(seed: u64) -> Self {
        Scratch {
            buf: (0..SCRATCH_WORDS as u64).map(|i| i ^ seed).collect(),
            at: 0,
        }
    }

    #[inline]
    fn work(&mut self, iters: u32) {
        for _ in 0..iters {
            let x = &mut self.buf[self.at];
            *x = x.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
            self.at = (self.at + 8) & (SCRATCH_WORDS - 1);
        }
        black_box(&self.buf[self.at]);
    }
}

#[cfg(target_os = "linux")]
fn pin_to(index: usize) {
    let cpus = thread::available_parallelism().map_or(1, |n| n.get());
    // SAFETY: cpu_set_t is plain data; sched_setaffinity only reads it.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(index % cpus, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set);
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_to(_index: usize) {}

const STALL_TIMEOUT: Duration = Duration::from_secs(5);

/// Runs the configuration once and checks that every id came out exactly once.
pub fn run_single(cfg: &BenchConfig) -> Result<RunSamples, BenchError> {
    run_single_clocked(cfg).map(|(s, _)| s)
}

/// Like [`run_single`], also returning the length of the timed region in
/// nanoseconds according to the system wall clock.
pub fn run_single_clocked(cfg: &BenchConfig) -> Result<(RunSamples, u64), BenchError> {
    cfg.validate()?;
    match cfg.implementation {
        Impl::Cmp => {
            let q: CmpQueue<NonZeroU64> =
                CmpQueue::new(cfg.queue.clone()).map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
            drive(cfg, &q)
        }
        Impl::Locked => drive(cfg, &LockedQueue::new()),
    }
}

/// Runs `cfg.repetitions` times back to back and reports the per-field median.
pub fn run_config(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let reports = (0..cfg.repetitions)
        .map(|_| run_single(cfg).map(|s| analyze(&s)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(median_report(&reports))
}

fn drive<Q: BenchQueue>(cfg: &BenchConfig, q: &Q) -> Result<(RunSamples, u64), BenchError> {
    // Warmup ids sit above anything a producer uses.
    let warm_base = 1u64 << 62;
    for i in 0..cfg.warmup_items {
        q.push(warm_base + i);
        q.pop();
    }
    while q.pop().is_some() {}

    let per_producer = cfg.total_items / cfg.producers as u64;
    let rate = u64::from(cfg.latency_sample_rate);
    let taken = AtomicU64::new(0);
    let producers_left = AtomicU64::new(cfg.producers as u64);
    let barrier = Barrier::new(cfg.producers + cfg.consumers + 1);
    let enq_samples = Mutex::new(Vec::new());
    let deq_samples = Mutex::new(Vec::new());
    let received = Mutex::new(Vec::new());

    let mut start = Instant::now();
    let mut wall_start = SystemTime::now();
    let (elapsed, wall) = thread::scope(|s| -> Result<_, BenchError> {
        let mut handles = Vec::new();
        for p in 0..cfg.producers {
            let (barrier, enq_samples, producers_left) = (&barrier, &enq_samples, &producers_left);
            let h = thread::Builder::new()
                .name(format!("producer-{p}"))
                .spawn_scoped(s, move || {
                    if cfg.pin {
                        pin_to(p);
                    }
                    let mut scratch = cfg.synthetic_load.filter(|&n| n > 0).map(|_| Scratch::new(p as u64));
                    let mut lat = Vec::with_capacity((per_producer / rate + 1) as usize);
                    let base = p as u64 * per_producer + 1;
                    barrier.wait();
                    for i in 0..per_producer {
                        if i % rate == 0 {
                            let t = Instant::now();
                            q.push(base + i);
                            lat.push(t.elapsed().as_nanos() as u64);
                        } else {
                            q.push(base + i);
                        }
                        if let (Some(s), Some(n)) = (scratch.as_mut(), cfg.synthetic_load) {
                            s.work(n);
                        }
                    }
                    enq_samples.lock().unwrap().push(lat);
                    producers_left.fetch_sub(1, Ordering::Release);
                })
                .map_err(BenchError::Spawn)?;
            handles.push(h);
        }
        for c in 0..cfg.consumers {
            let (barrier, deq_samples, received, taken, producers_left) =
                (&barrier, &deq_samples, &received, &taken, &producers_left);
            let total = cfg.total_items;
            let h = thread::Builder::new()
                .name(format!("consumer-{c}"))
                .spawn_scoped(s, move || {
                    if cfg.pin {
                        pin_to(cfg.producers + c);
                    }
                    let mut scratch = cfg.synthetic_load.filter(|&n| n > 0).map(|_| Scratch::new(!(c as u64)));
                    let mut lat = Vec::new();
                    let mut got = Vec::with_capacity((total / cfg.consumers as u64) as usize + 1);
                    let mut idle = 0u32;
                    let mut last = (0, Instant::now());
                    barrier.wait();
                    while taken.load(Ordering::Relaxed) < total {
                        let timed = got.len() as u64 % rate == 0;
                        let t = Instant::now();
                        match q.pop() {
                            Some(v) => {
                                if timed {
                                    lat.push(t.elapsed().as_nanos() as u64);
                                }
                                got.push(v);
                                taken.fetch_add(1, Ordering::Relaxed);
                                idle = 0;
                                if let (Some(s), Some(n)) = (scratch.as_mut(), cfg.synthetic_load) {
                                    s.work(n);
                                }
                            }
                            None => {
                                idle += 1;
                                if idle > 64 {
                                    thread::yield_now();
                                }
                                // With every producer done and nothing coming
                                // out, the rest is lost; the conservation
                                // check reports it.
                                if idle % 1024 == 0 && producers_left.load(Ordering::Acquire) == 0 {
                                    let now = taken.load(Ordering::Relaxed);
                                    if now != last.0 {
                                        last = (now, Instant::now());
                                    } else if last.1.elapsed() > STALL_TIMEOUT {
                                        break;
                                    }
                                }
                            }
                        }
                    }
                    deq_samples.lock().unwrap().push(lat);
                    received.lock().unwrap().push(got);
                })
                .map_err(BenchError::Spawn)?;
            handles.push(h);
        }
        barrier.wait();
        wall_start = SystemTime::now();
        start = Instant::now();
        for h in handles {
            h.join().expect("benchmark worker panicked");
        }
        let elapsed = start.elapsed();
        let wall = SystemTime::now().duration_since(wall_start).unwrap_or_default();
        Ok((elapsed, wall))
    })?;

    let received = received.into_inner().unwrap();
    check_conservation(cfg.total_items, &received)?;
    let samples = RunSamples {
        implementation: cfg.implementation,
        producers: cfg.producers,
        consumers: cfg.consumers,
        items: cfg.total_items,
        load: cfg.synthetic_load,
        elapsed_ns: elapsed.as_nanos() as u64,
        enq_ns: enq_samples.into_inner().unwrap().concat(),
        deq_ns: deq_samples.into_inner().unwrap().concat(),
    };
    Ok((samples, wall.as_nanos() as u64))
}

/// Every id in 1..=total seen exactly once.
fn check_conservation(total: u64, received: &[Vec<u64>]) -> Result<(), BenchError> {
    let mut seen = vec![false; total as usize];
    let mut dequeued = 0;
    let mut duplicates = 0;
    for &id in received.iter().flatten() {
        dequeued += 1;
        match id.checked_sub(1).and_then(|i| seen.get_mut(i as usize)) {
            Some(s) if !*s => *s = true,
            _ => duplicates += 1,
        }
    }
    let missing = seen.iter().filter(|s| !**s).count() as u64;
    if duplicates > 0 || missing > 0 || dequeued != total {
        return Err(BenchError::Conservation {
            enqueued: total,
            dequeued,
            duplicates,
            missing,
        });
    }
    Ok(())
}
