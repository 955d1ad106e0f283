//! Scenarios and schedule exploration.

use std::collections::VecDeque;
use std::fmt;
use std::num::NonZeroU64;
use std::ops::ControlFlow;
use std::sync::Arc;

use cmpq::probe::{Phase, UnknownPhase};
use cmpq::{CmpQueue, QueueConfig, QueueStats, ReclaimRecord};

use crate::history::OpHistory;
use crate::sched::{
    run_workers, Body, Ctx, ExecError, Granularity, HistoryMode, SchedProbe, Sched, StallAt, StallSpec,
    TraceItem,
};
use crate::strategy::{Dfs, RandomWalk, Strategy};
use crate::trace::Trace;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScriptOp {
    Enq(u64),
    /// Dequeue, retrying transient failures.
    Deq,
    /// One dequeue attempt.
    TryDeq,
    Reclaim,
    Resume(usize),
}

pub type CustomBody = Arc<dyn Fn(&Ctx<'_>) + Send + Sync>;

#[derive(Clone)]
pub enum ThreadScript {
    Ops(Vec<ScriptOp>),
    Custom(CustomBody),
}

impl fmt::Debug for ThreadScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThreadScript::Ops(ops) => f.debug_tuple("Ops").field(ops).finish(),
            ThreadScript::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Handle returned by [`Scenario::inject_stall`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StallHandle {
    pub thread: usize,
    pub at: StallAt,
}

impl StallHandle {
    /// The script step another thread runs to let the stalled one go.
    pub fn resume_op(&self) -> ScriptOp {
        ScriptOp::Resume(self.thread)
    }
}

/// Queue configuration, sequential setup, and one script per thread.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub config: QueueConfig,
    /// Runs single-threaded before the workers start; its effect becomes the
    /// history's initial content.
    pub setup: Vec<ScriptOp>,
    pub threads: Vec<ThreadScript>,
    pub stalls: Vec<StallSpec>,
    pub granularity: Granularity,
    pub history: HistoryMode,
    pub max_steps: usize,
}

impl Scenario {
    pub fn new(name: impl Into<String>) -> Self {
        Scenario {
            name: name.into(),
            config: QueueConfig::default(),
            setup: Vec::new(),
            threads: Vec::new(),
            stalls: Vec::new(),
            granularity: Granularity::Access,
            history: HistoryMode::Steps,
            max_steps: 20_000,
        }
    }

    pub fn config(mut self, config: QueueConfig) -> Self {
        self.config = config;
        self
    }

    pub fn setup(mut self, ops: Vec<ScriptOp>) -> Self {
        self.setup = ops;
        self
    }

    pub fn thread(mut self, ops: Vec<ScriptOp>) -> Self {
        self.threads.push(ThreadScript::Ops(ops));
        self
    }

    pub fn custom(mut self, body: impl Fn(&Ctx<'_>) + Send + Sync + 'static) -> Self {
        self.threads.push(ThreadScript::Custom(Arc::new(body)));
        self
    }

    pub fn granularity(mut self, g: Granularity) -> Self {
        self.granularity = g;
        self
    }

    pub fn history_mode(mut self, h: HistoryMode) -> Self {
        self.history = h;
        self
    }

    pub fn max_steps(mut self, n: usize) -> Self {
        self.max_steps = n;
        self
    }

    /// Halts `thread` right after it completes `after` (a phase name such as
    /// `deq-claim`) until another thread resumes it or nothing else can run.
    pub fn inject_stall(&mut self, thread: usize, after: &str) -> Result<StallHandle, UnknownPhase> {
        let phase: Phase = after.parse()?;
        Ok(self.stall_at(thread, StallAt::After(phase), 1))
    }

    /// Like [`inject_stall`](Self::inject_stall), on the `occurrence`-th
    /// completion of the phase.
    pub fn stall_at(&mut self, thread: usize, at: StallAt, occurrence: usize) -> StallHandle {
        self.stalls.push(StallSpec {
            thread,
            at,
            occurrence,
        });
        StallHandle { thread, at }
    }

    pub fn op_count(&self) -> usize {
        self.threads
            .iter()
            .map(|t| match t {
                ThreadScript::Ops(ops) => ops
                    .iter()
                    .filter(|o| matches!(o, ScriptOp::Enq(_) | ScriptOp::Deq | ScriptOp::TryDeq))
                    .count(),
                ThreadScript::Custom(_) => 0,
            })
            .sum()
    }
}

/// Everything observed in one execution.
#[derive(Debug)]
pub struct Execution {
    pub history: OpHistory,
    pub trace: Trace,
    pub schedule: Vec<usize>,
    pub stats: QueueStats,
    pub reclaim_log: Vec<ReclaimRecord>,
    pub error: Option<ExecError>,
}

impl Execution {
    pub fn markers(&self) -> impl Iterator<Item = (usize, cmpq::probe::Marker)> + '_ {
        self.trace.items.iter().filter_map(|i| match i {
            TraceItem::Marker { tid, marker } => Some((*tid, *marker)),
            _ => None,
        })
    }
}

fn run_script(ctx: &Ctx<'_>, ops: &[ScriptOp]) {
    for op in ops {
        match *op {
            ScriptOp::Enq(v) => ctx.enq(v),
            ScriptOp::Deq => {
                ctx.deq();
            }
            ScriptOp::TryDeq => {
                ctx.try_deq();
            }
            ScriptOp::Reclaim => {
                ctx.reclaim();
            }
            ScriptOp::Resume(t) => ctx.resume(t),
        }
    }
}

/// Runs the setup ops on the calling thread and returns the queue content
/// they leave behind.
fn run_setup<P: cmpq::probe::Probe>(q: &CmpQueue<NonZeroU64, P>, ops: &[ScriptOp]) -> Vec<u64> {
    let mut model = VecDeque::new();
    for op in ops {
        match *op {
            ScriptOp::Enq(v) => {
                q.enqueue(NonZeroU64::new(v).expect("ids start at 1"))
                    .expect("setup pool large enough");
                model.push_back(v);
            }
            ScriptOp::Deq | ScriptOp::TryDeq => {
                let got = q.dequeue().map(NonZeroU64::get);
                assert_eq!(got, model.pop_front(), "sequential setup diverged from FIFO");
            }
            ScriptOp::Reclaim => {
                q.reclaim();
            }
            ScriptOp::Resume(_) => {}
        }
    }
    model.into_iter().collect()
}

/// Runs `scenario` once under `strategy` and hands the strategy back.
pub fn run_once(scenario: &Scenario, strategy: Box<dyn Strategy>) -> (Execution, Box<dyn Strategy>) {
    let sched = Arc::new(Sched::new(
        scenario.threads.len(),
        strategy,
        &scenario.stalls,
        scenario.max_steps,
        scenario.granularity,
        scenario.history,
    ));
    let queue: CmpQueue<NonZeroU64, SchedProbe> =
        CmpQueue::with_probe(scenario.config.clone(), SchedProbe::new(sched.clone()))
            .expect("scenario config is valid");
    sched.set_pool(queue.pool());
    let initial = run_setup(&queue, &scenario.setup);
    let names = Trace::location_names(&queue);

    let bodies: Vec<Body<'_>> = scenario
        .threads
        .iter()
        .map(|t| -> Body<'_> {
            match t {
                ThreadScript::Ops(ops) => Box::new(move |ctx: &Ctx<'_>| run_script(ctx, ops)),
                ThreadScript::Custom(f) => {
                    let f = f.clone();
                    Box::new(move |ctx: &Ctx<'_>| f(ctx))
                }
            }
        })
        .collect();
    run_workers(&sched, &queue, bodies);

    let mut residue = Vec::new();
    let failed = sched.failed();
    if !failed {
        while let Some(v) = queue.dequeue() {
            residue.push(v.get());
        }
    }
    let stats = queue.stats();
    let reclaim_log = queue.take_reclaim_log();
    drop(queue);
    let sched = Arc::try_unwrap(sched).unwrap_or_else(|_| panic!("scheduler still shared"));
    let (state, strategy) = sched.into_parts();
    let exec = Execution {
        history: OpHistory {
            initial,
            events: state.events,
            residue,
        },
        trace: Trace {
            items: state.trace,
            names,
        },
        schedule: state.schedule,
        stats,
        reclaim_log,
        error: state.error,
    };
    (exec, strategy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExploreMode {
    /// Full enumeration when a probe run takes at most `auto_threshold`
    /// steps, seeded random sampling otherwise.
    Auto,
    /// Every interleaving.
    Exhaustive,
    /// Every ordering of dependent steps.
    Reduced,
    Random { seed: u64, runs: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct ExploreConfig {
    pub mode: ExploreMode,
    pub max_executions: usize,
    pub auto_threshold: usize,
    pub auto_seed: u64,
    pub auto_runs: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            mode: ExploreMode::Auto,
            max_executions: 1_000_000,
            auto_threshold: 10,
            auto_seed: 0x5EED_CA11,
            auto_runs: 1_000,
        }
    }
}

impl ExploreConfig {
    pub fn mode(mode: ExploreMode) -> Self {
        ExploreConfig {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Exploration {
    pub executions: usize,
    /// False when the execution bound or the visitor cut the search short.
    pub complete: bool,
    pub mode: ExploreMode,
}

/// Explores schedules of `scenario`, calling `visit` after each execution.
pub fn explore_with(
    scenario: &Scenario,
    config: &ExploreConfig,
    mut visit: impl FnMut(&Execution) -> ControlFlow<()>,
) -> Exploration {
    let mode = match config.mode {
        ExploreMode::Auto => {
            let (probe, _) = run_once(scenario, Box::new(Dfs::exhaustive()));
            if probe.schedule.len() <= config.auto_threshold {
                ExploreMode::Exhaustive
            } else {
                ExploreMode::Random {
                    seed: config.auto_seed,
                    runs: config.auto_runs,
                }
            }
        }
        m => m,
    };
    let mut executions = 0;
    match mode {
        ExploreMode::Exhaustive | ExploreMode::Reduced => {
            let mut strategy: Box<dyn Strategy> = Box::new(if mode == ExploreMode::Reduced {
                Dfs::reduced()
            } else {
                Dfs::exhaustive()
            });
            loop {
                let (exec, s) = run_once(scenario, strategy);
                executions += 1;
                if visit(&exec).is_break() {
                    return Exploration {
                        executions,
                        complete: false,
                        mode,
                    };
                }
                strategy = s;
                let dfs = as_dfs(&mut strategy);
                if !dfs.advance() {
                    return Exploration {
                        executions,
                        complete: true,
                        mode,
                    };
                }
                if executions >= config.max_executions {
                    return Exploration {
                        executions,
                        complete: false,
                        mode,
                    };
                }
            }
        }
        ExploreMode::Random { seed, runs } => {
            let mut strategy: Box<dyn Strategy> = Box::new(RandomWalk::new(seed));
            for _ in 0..runs.min(config.max_executions) {
                let (exec, s) = run_once(scenario, strategy);
                strategy = s;
                executions += 1;
                if visit(&exec).is_break() {
                    return Exploration {
                        executions,
                        complete: false,
                        mode,
                    };
                }
            }
            Exploration {
                executions,
                complete: runs <= config.max_executions,
                mode,
            }
        }
        ExploreMode::Auto => unreachable!("resolved above"),
    }
}

fn as_dfs(s: &mut Box<dyn Strategy>) -> &mut Dfs {
    let any: &mut dyn std::any::Any = &mut **s;
    any.downcast_mut::<Dfs>().expect("dfs strategy")
}

/// Collects the history of every explored execution.
pub fn explore_interleavings(scenario: &Scenario, config: &ExploreConfig) -> (Vec<OpHistory>, Exploration) {
    let mut out = Vec::new();
    let summary = explore_with(scenario, config, |e| {
        out.push(e.history.clone());
        ControlFlow::Continue(())
    });
    (out, summary)
}
