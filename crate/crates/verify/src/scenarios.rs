//! Fault-injection scenarios: forced slot recycling under a stale cursor
//! capture, stalled consumers, and an intentional use-after-free.

use std::ops::ControlFlow;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use cmpq::probe::{DequeuePhase, Marker, Phase, Point};
use cmpq::{Growth, QueueConfig};

use crate::check::{audit_reclamation_log, Verdict};
use crate::history::{EventKind, OpKind, Payload};
use crate::explore::{explore_with, run_once, ExploreConfig, ExploreMode, Exploration, Execution, Scenario, ScriptOp};
use crate::sched::{Ctx, StallAt};
use crate::strategy::{Priority, RandomWalk};

const CLAIM: Phase = Phase::Dequeue(DequeuePhase::Claim);

/// Node with cycle 7 sits under a parked cursor; it is recycled with cycle 21.
const CAPTURED_CYCLE: u64 = 7;
const RECYCLED_CYCLE: u64 = 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecycleVariant {
    /// The captured slot is reused and the cursor lands on it again.
    SameSlot,
    /// The captured slot stays free; the cursor ends up elsewhere.
    DifferentSlot,
    /// Nothing interferes with the consumer.
    Unchanged,
}

fn recycle_config() -> QueueConfig {
    QueueConfig {
        window_size: 1,
        min_window: 1,
        min_batch_size: 1,
        trigger_period: 1 << 40,
        // Dummy plus 14 nodes: after the driver's reclaim the free list holds
        // exactly the freed slots, so their reuse order is fixed.
        pool_capacity: 15,
        growth: Growth::Fixed,
        log_reclamation: true,
        ..QueueConfig::default()
    }
}

/// Thread 0 dequeues once and stalls right after its claim. Thread 1 then
/// claims past the stalled node, reclaims, refills the freed slots and walks
/// the cursor up to the refilled captured slot before resuming thread 0.
///
/// Setup leaves the cursor parked on the claimed node with cycle 7 and one
/// AVAILABLE node (cycle 8) behind it, so thread 0 captures (slot of 7, 7)
/// and claims 8.
pub fn recycle_scenario(variant: RecycleVariant) -> Scenario {
    let mut setup: Vec<ScriptOp> = (1..=CAPTURED_CYCLE).map(ScriptOp::Enq).collect();
    setup.extend(std::iter::repeat_n(ScriptOp::Deq, CAPTURED_CYCLE as usize));
    setup.push(ScriptOp::Enq(CAPTURED_CYCLE + 1));
    let mut s = Scenario::new(format!("recycle-{variant:?}"))
        .config(recycle_config())
        .setup(setup)
        .thread(vec![ScriptOp::TryDeq]);
    if variant == RecycleVariant::Unchanged {
        return s;
    }
    s.stall_at(0, StallAt::After(CLAIM), 1);
    let refill = match variant {
        RecycleVariant::SameSlot => RECYCLED_CYCLE - 14,
        _ => RECYCLED_CYCLE - 15,
    };
    s.custom(move |ctx: &Ctx<'_>| {
        let q = ctx.queue();
        let enq = |v: u64| {
            let _ = q.enqueue(std::num::NonZeroU64::new(v).expect("nonzero"));
        };
        ctx.atomic(|| {
            (9..=14).for_each(enq);
            q.dequeue_with_budget(8);
        });
        ctx.atomic(|| q.reclaim());
        ctx.atomic(|| (15..15 + refill).for_each(enq));
        ctx.atomic(|| {
            for _ in 0..11 {
                q.dequeue_with_budget(8);
            }
        });
        ctx.resume(0);
    })
}

/// Outcome of [`force_recycle_scenario`].
#[derive(Debug)]
pub struct ForceRecycleReport {
    pub exploration: Exploration,
    /// Executions where the cursor was back on the captured link with a new
    /// cycle when the advance was attempted.
    pub shape_formed: usize,
    pub refused: usize,
    /// Successful cursor advances whose replaced node no longer carried the
    /// captured cycle.
    pub false_advances: usize,
    /// Trace of the first false advance.
    pub witness: Option<String>,
}

impl ForceRecycleReport {
    pub fn verdict(&self) -> Verdict<String> {
        if self.false_advances > 0 {
            return Verdict::Fail(self.witness.clone().unwrap_or_default());
        }
        if self.shape_formed == 0 || !self.exploration.complete {
            return Verdict::Fail(format!(
                "inconclusive: shape formed in {} of {} executions, enumeration complete: {}",
                self.shape_formed, self.exploration.executions, self.exploration.complete
            ));
        }
        Verdict::Pass
    }
}

/// Counts (refused, false advance) markers in one execution.
pub fn cursor_outcomes(e: &Execution) -> (usize, usize) {
    let mut refused = 0;
    let mut false_adv = 0;
    for (_, m) in e.markers() {
        match m {
            Marker::CursorRefused { .. } => refused += 1,
            Marker::CursorAdvanced { captured, observed } if captured != observed => false_adv += 1,
            _ => {}
        }
    }
    (refused, false_adv)
}

fn tally(s: &Scenario, config: &ExploreConfig) -> ForceRecycleReport {
    let mut shape_formed = 0;
    let mut refused = 0;
    let mut false_advances = 0;
    let mut witness = None;
    let exploration = explore_with(s, config, |e| {
        assert!(e.error.is_none(), "recycle scenario failed: {:?}\n{}", e.error, e.trace);
        let (r, f) = cursor_outcomes(e);
        if r + f > 0 {
            shape_formed += 1;
        }
        refused += r;
        false_advances += f;
        if f > 0 && witness.is_none() {
            witness = Some(format!("schedule {:?}\n{}", e.schedule, e.trace));
        }
        ControlFlow::Continue(())
    });
    ForceRecycleReport {
        exploration,
        shape_formed,
        refused,
        false_advances,
        witness,
    }
}

/// Enumerates every ordering of the dependent steps of the forced-recycle
/// scenario and checks that no stale (link, cycle) capture ever moves the
/// cursor.
pub fn force_recycle_scenario() -> ForceRecycleReport {
    tally(
        &recycle_scenario(RecycleVariant::SameSlot),
        &ExploreConfig::mode(ExploreMode::Reduced),
    )
}

/// Runs a recycle variant once with thread 0 scheduled first, which forms
/// the ABA shape deterministically.
pub fn scripted_recycle(variant: RecycleVariant) -> Execution {
    let (e, _) = run_once(&recycle_scenario(variant), Box::new(Priority::new(vec![0, 1])));
    e
}

/// Like [`force_recycle_scenario`] but stalls thread 0 between its cursor
/// cycle check and the advance CAS instead of after its claim. The check
/// offers no protection once the thread is suspended there while more than
/// the window's worth of dequeues recycle the captured node.
pub fn recycle_inside_cursor_check() -> ForceRecycleReport {
    let mut s = recycle_scenario(RecycleVariant::SameSlot);
    s.stalls.clear();
    s.stall_at(0, StallAt::Before(Point::DeqAdvanceCursor), 1);
    tally(&s, &ExploreConfig::mode(ExploreMode::Reduced))
}

#[derive(Clone, Copy, Debug)]
pub struct StallParams {
    pub window: u64,
    pub trigger_period: u64,
    pub min_batch: usize,
    /// Dequeues driven after the stall, as a multiple of the window.
    pub window_multiple: u64,
    pub prefill: u64,
    pub slack: u64,
    /// Chance that the scheduler switches threads at a yield point.
    pub preemption: f64,
}

impl Default for StallParams {
    fn default() -> Self {
        StallParams {
            window: 256,
            trigger_period: 64,
            min_batch: 8,
            window_multiple: 10,
            prefill: 16,
            slack: 16,
            preemption: 0.05,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoundSample {
    pub in_use: u64,
    pub live: u64,
    pub bound: u64,
}

#[derive(Clone, Debug, Default)]
pub struct StallRunReport {
    pub seed: u64,
    /// Samples taken right after a reclamation pass, including a final pass
    /// once all dequeues are done.
    pub post_reclaim: Vec<BoundSample>,
    /// Largest excess of in_use over live seen between passes. Not bounded
    /// by the window alone: claims keep accumulating until the next trigger.
    pub worst_between_passes: BoundSample,
    pub dequeued: u64,
    pub stalled_node_freed: bool,
    pub audit_ok: bool,
    pub conservation_ok: bool,
    pub error: Option<String>,
}

impl StallRunReport {
    pub fn post_reclaim_violations(&self) -> usize {
        self.post_reclaim.iter().filter(|s| s.in_use > s.bound).count()
    }

    pub fn worst_post_reclaim(&self) -> Option<&BoundSample> {
        self.post_reclaim
            .iter()
            .max_by_key(|s| s.in_use as i64 - s.live as i64)
    }

    pub fn passed(&self) -> bool {
        self.error.is_none()
            && !self.post_reclaim.is_empty()
            && self.post_reclaim_violations() == 0
            && self.stalled_node_freed
            && self.audit_ok
            && self.conservation_ok
    }
}

#[derive(Default)]
struct Monitor {
    enqueued: AtomicU64,
    dequeued: AtomicU64,
    samples: Mutex<StallRunReport>,
}

/// One seeded run: thread 0 claims the queue front and stalls; a producer
/// and a consumer then move `window_multiple × window` items through while
/// pool occupancy is sampled against the live element count.
pub fn bounded_reclamation_run(seed: u64, p: StallParams) -> StallRunReport {
    let config = QueueConfig {
        window_size: p.window,
        min_window: 1,
        trigger_period: p.trigger_period,
        min_batch_size: p.min_batch,
        pool_capacity: 1024,
        log_reclamation: true,
        ..QueueConfig::default()
    };
    let target = p.window * p.window_multiple;
    let tight = p.window + p.min_batch as u64 + p.slack;
    let monitor = Arc::new(Monitor::default());
    monitor.enqueued.store(p.prefill, Ordering::Relaxed);

    let sample = move |ctx: &Ctx<'_>, m: &Monitor, after_pass: bool| {
        let in_use = ctx.queue().stats().pool.in_use;
        let live = m.enqueued.load(Ordering::Relaxed) - m.dequeued.load(Ordering::Relaxed);
        let mut r = m.samples.lock().unwrap();
        if after_pass {
            r.post_reclaim.push(BoundSample {
                in_use,
                live,
                bound: live + tight,
            });
        }
        let worst = &r.worst_between_passes;
        if !after_pass && in_use.saturating_sub(live) > worst.in_use.saturating_sub(worst.live) {
            r.worst_between_passes = BoundSample {
                in_use,
                live,
                bound: live + tight,
            };
        }
    };

    let mut s = Scenario::new(format!("stall-bound-{seed}"))
        .config(config)
        .setup((1..=p.prefill).map(ScriptOp::Enq).collect())
        .thread(vec![ScriptOp::Deq])
        .max_steps(usize::MAX);
    s.stall_at(0, StallAt::After(CLAIM), 1);
    let m = monitor.clone();
    let s = s.custom(move |ctx: &Ctx<'_>| {
        let q = ctx.queue();
        // Only this thread enqueues after setup, so payload v gets cycle v and
        // the triggering enqueues are known up front. Those run atomically
        // with their sample so the sample sees the state the pass left.
        let enq = |v: u64| {
            q.enqueue(std::num::NonZeroU64::new(v).expect("nonzero"))
                .expect("growable pool");
            m.enqueued.fetch_add(1, Ordering::Relaxed);
        };
        for v in p.prefill + 1..=p.prefill + target + p.trigger_period {
            if v % p.trigger_period == 0 {
                ctx.atomic(|| {
                    enq(v);
                    sample(ctx, &m, true);
                });
            } else {
                enq(v);
                sample(ctx, &m, false);
            }
        }
    });
    let m = monitor.clone();
    let s = s.custom(move |ctx: &Ctx<'_>| {
        let q = ctx.queue();
        let mut got = 0;
        while got < target {
            if q.dequeue().is_some() {
                got += 1;
                m.dequeued.fetch_add(1, Ordering::Relaxed);
            }
            sample(ctx, &m, false);
        }
        ctx.atomic(|| {
            q.reclaim();
            sample(ctx, &m, true);
        });
    });

    let (e, _) = run_once(&s, Box::new(RandomWalk::with_preemption(seed, p.preemption)));
    let mut report = std::mem::take(&mut *monitor.samples.lock().unwrap());
    report.seed = seed;
    report.dequeued = monitor.dequeued.load(Ordering::Relaxed);
    report.error = e.error.as_ref().map(|err| err.to_string());
    let stalled_cycle = e.markers().find_map(|(tid, m)| match m {
        Marker::Claimed { cycle, .. } if tid == 0 => Some(cycle),
        _ => None,
    });
    report.stalled_node_freed = stalled_cycle.is_some_and(|c| e.reclaim_log.iter().any(|r| r.cycle == c));
    report.audit_ok = audit_reclamation_log(&e.reclaim_log).is_pass();
    // Only thread 0's dequeue is in the history; the other threads count
    // their own operations. Payloads freed with a stalled claimer's node
    // count as abandoned.
    let stalled_took = e
        .history
        .events
        .iter()
        .any(|ev| ev.kind == EventKind::DeqReturn && matches!(ev.payload, Payload::Id(_)));
    let enqueued = monitor.enqueued.load(Ordering::Relaxed);
    report.conservation_ok = report.dequeued
        + u64::from(stalled_took)
        + e.stats.abandoned_payloads
        + e.history.residue.len() as u64
        == enqueued;
    report
}

#[derive(Debug)]
pub struct UafReport {
    pub poison_violations: u64,
    pub stalled_result: Option<u64>,
    pub execution: Execution,
}

/// Stalls a consumer right after its claim, drives enough dequeues past it
/// for the window to expire, reclaims its node and resumes it. The stalled
/// consumer then reads the payload slot of a node that went back to the
/// pool, which debug builds count as one poison violation.
pub fn intentional_uaf() -> UafReport {
    const W: u64 = 4;
    let config = QueueConfig {
        window_size: W,
        min_window: 1,
        min_batch_size: 1,
        trigger_period: 1 << 40,
        pool_capacity: 64,
        growth: Growth::Fixed,
        ..QueueConfig::default()
    };
    let n = W + 4;
    let mut s = Scenario::new("intentional-uaf")
        .config(config)
        .setup((1..=n + 1).map(ScriptOp::Enq).collect())
        .thread(vec![ScriptOp::Deq]);
    s.stall_at(0, StallAt::After(CLAIM), 1);
    let mut driver: Vec<ScriptOp> = vec![ScriptOp::Deq; n as usize];
    driver.push(ScriptOp::Reclaim);
    driver.push(ScriptOp::Resume(0));
    let s = s.thread(driver);
    let (e, _) = run_once(&s, Box::new(Priority::new(vec![0, 1])));
    let stalled_result = e.history.operations().ok().and_then(|ops| {
        ops.iter().find(|o| o.thread_id == 0).and_then(|o| match o.kind {
            OpKind::Deq(Payload::Id(v)) => Some(v),
            _ => None,
        })
    });
    UafReport {
        poison_violations: e.stats.pool.poison_violations,
        stalled_result,
        execution: e,
    }
}

/// A producer that read `tail.next == null` and is suspended before its link
/// CAS while more than a window's worth of dequeues go past. Its tail node is
/// freed and sits on the free list with a null link, so the late CAS
/// succeeds there, and the next acquire of that slot clears the link. The
/// item is lost although its enqueue returned. With `outrun_window` false the
/// driver skips the reclamation pass and the late link lands on a live node.
pub fn stale_tail_link(outrun_window: bool) -> Execution {
    let config = QueueConfig {
        window_size: 1,
        min_window: 1,
        min_batch_size: 1,
        trigger_period: 1 << 40,
        pool_capacity: 16,
        growth: Growth::Fixed,
        ..QueueConfig::default()
    };
    let mut s = Scenario::new("stale-tail-link")
        .config(config)
        .setup(vec![ScriptOp::Enq(1)])
        .thread(vec![ScriptOp::Enq(100)]);
    s.stall_at(0, StallAt::Before(Point::EnqLink), 1);
    let mut driver = vec![ScriptOp::Enq(2), ScriptOp::Enq(3), ScriptOp::Enq(4)];
    driver.extend([ScriptOp::Deq; 3]);
    if outrun_window {
        driver.push(ScriptOp::Reclaim);
    }
    driver.extend([ScriptOp::Resume(0), ScriptOp::Enq(5)]);
    let (e, _) = run_once(&s.thread(driver), Box::new(Priority::new(vec![0, 1])));
    e
}

/// The desk-scale linearizability scenarios, by total operation count.
pub fn linearizability_scenarios() -> Vec<Scenario> {
    use ScriptOp::{Deq, Enq};
    vec![
        Scenario::new("1P1Cx2").thread(vec![Enq(1)]).thread(vec![Deq]),
        Scenario::new("2P1Cx3")
            .thread(vec![Enq(1)])
            .thread(vec![Enq(2)])
            .thread(vec![Deq]),
        Scenario::new("1P2Cx3")
            .thread(vec![Enq(1)])
            .thread(vec![Deq])
            .thread(vec![Deq]),
    ]
}

/// A failing history with the schedule and trace that produced it.
#[derive(Clone, Debug)]
pub struct LinFailure {
    pub history: String,
    pub reason: String,
    pub schedule: Vec<usize>,
    pub trace: String,
}

impl std::fmt::Display for LinFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}", self.reason)?;
        writeln!(f, "history:\n{}", self.history)?;
        writeln!(f, "schedule: {:?}", self.schedule)?;
        write!(f, "trace:\n{}", self.trace)
    }
}

#[derive(Debug)]
pub struct LinReport {
    pub scenario: String,
    pub exploration: Exploration,
    pub distinct_histories: usize,
    pub failed_executions: usize,
    /// Witnesses for the first few failing executions.
    pub failures: Vec<LinFailure>,
}

impl LinReport {
    pub fn passed(&self) -> bool {
        self.failed_executions == 0 && self.exploration.complete
    }
}

/// Explores `scenario` and checks every history for linearizability and
/// conservation. Keeps at most `keep` failure witnesses.
pub fn check_scenario(scenario: &Scenario, config: &ExploreConfig, keep: usize) -> LinReport {
    let mut seen = std::collections::HashSet::new();
    let mut failures = Vec::new();
    let mut failed = 0usize;
    let exploration = explore_with(scenario, config, |e| {
        let reason = if let Some(err) = &e.error {
            Some(format!("execution error: {err}"))
        } else if let Err(c) = e.history.conservation() {
            Some(format!("conservation: {c}"))
        } else {
            match crate::check::check_linearizable_fifo(&e.history) {
                Ok(Verdict::Pass) => None,
                Ok(Verdict::Fail(w)) => Some(w.to_string()),
                Err(err) => Some(err.to_string()),
            }
        };
        seen.insert(e.history.events.iter().map(|ev| (ev.thread_id, ev.kind, ev.payload)).collect::<Vec<_>>());
        if let Some(reason) = reason {
            failed += 1;
            if failures.len() < keep {
                failures.push(LinFailure {
                    history: e.history.to_string(),
                    reason,
                    schedule: e.schedule.clone(),
                    trace: e.trace.to_string(),
                });
            }
        }
        ControlFlow::Continue(())
    });
    LinReport {
        scenario: scenario.name.clone(),
        exploration,
        distinct_histories: seen.len(),
        failed_executions: failed,
        failures,
    }
}
