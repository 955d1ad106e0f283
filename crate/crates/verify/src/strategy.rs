//! Scheduling strategies.

use std::any::Any;
use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::sched::Footprint;

/// The decision the scheduler asks a strategy to make.
#[derive(Clone, Copy)]
pub struct Choice<'a> {
    /// Number of steps already taken in this execution.
    pub depth: usize,
    /// Threads that may run now, ascending.
    pub enabled: &'a [usize],
    /// Announced next step of every parked thread, enabled or not.
    pub pending: &'a [Option<Footprint>],
    pub last: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diverged;

pub trait Strategy: Any + Send {
    fn choose(&mut self, choice: &Choice<'_>) -> Result<usize, Diverged>;
}

fn sticky(c: &Choice<'_>) -> usize {
    match c.last {
        Some(t) if c.enabled.contains(&t) => t,
        _ => c.enabled[0],
    }
}

#[derive(Debug, Clone)]
struct Frame {
    enabled: Vec<usize>,
    backtrack: BTreeSet<usize>,
    done: BTreeSet<usize>,
    chosen: usize,
    footprint: Footprint,
    clock: Vec<u32>,
    /// Announced step of every thread in this state.
    pending: Vec<Option<Footprint>>,
    /// Threads whose next step was already covered from an earlier sibling
    /// and commutes with everything since.
    sleep: Vec<(usize, Footprint)>,
}

impl Frame {
    fn asleep(&self, t: usize) -> bool {
        self.sleep.iter().any(|(s, _)| *s == t)
    }

    /// Sleep set of the state reached by taking `chosen` here.
    fn child_sleep(&self) -> Vec<(usize, Footprint)> {
        let explored = self
            .done
            .iter()
            .filter(|&&t| t != self.chosen)
            .filter_map(|&t| self.pending.get(t).copied().flatten().map(|fp| (t, fp)));
        self.sleep
            .iter()
            .copied()
            .chain(explored)
            .filter(|(_, fp)| !fp.dependent(&self.footprint))
            .collect()
    }
}

/// Stateless depth-first search over schedules. Each execution replays the
/// current prefix and extends it; [`Dfs::advance`] moves to the next
/// unexplored branch.
///
/// With reduction on, backtrack points are only added where two dependent
/// steps of different threads could be reordered (dynamic partial-order
/// reduction with vector clocks). Every ordering of dependent steps is still
/// covered; orderings of independent steps collapse to one representative.
/// Sleep sets skip branches that only reorder commuting steps already seen.
#[derive(Debug, Clone, Default)]
pub struct Dfs {
    reduce: bool,
    stack: Vec<Frame>,
    clocks: Vec<Vec<u32>>,
}

impl Dfs {
    /// Every interleaving, no reduction.
    pub fn exhaustive() -> Self {
        Dfs::default()
    }

    pub fn reduced() -> Self {
        Dfs {
            reduce: true,
            ..Dfs::default()
        }
    }

    /// Prepares the next execution. Returns false once the tree is exhausted.
    pub fn advance(&mut self) -> bool {
        self.clocks.clear();
        while let Some(f) = self.stack.last_mut() {
            let next = f
                .backtrack
                .iter()
                .copied()
                .find(|&t| !f.done.contains(&t) && !f.asleep(t));
            if let Some(t) = next {
                f.done.insert(t);
                f.chosen = t;
                return true;
            }
            self.stack.pop();
        }
        false
    }

    /// Race analysis for the step `tid` is about to take at `depth`, with
    /// footprint `fp` and vector clock `clock`. For every earlier step of
    /// another thread that conflicts with it and is not already ordered
    /// before it through some other step, makes sure the state before that
    /// step also explores a way of running the two the other way round.
    ///
    /// The candidate threads for such a reversal are the initials of the
    /// steps after the race that do not depend on it, followed by the new
    /// step: threads whose first step there has no earlier step ordered
    /// before it. The thread taking the new step is not always one of them,
    /// and may be asleep where an initial is not.
    fn add_backtracks(&mut self, depth: usize, tid: usize, fp: &Footprint, clock: &[u32]) {
        let n = clock.len();
        let stack = &self.stack;
        let before = |a: usize, c: &[u32]| c[stack[a].chosen] > a as u32;
        // Only the latest conflicting step of each thread can race: earlier
        // ones come before it in program order.
        let mut latest: Vec<Option<usize>> = vec![None; n];
        for i in (0..depth).rev() {
            let q = stack[i].chosen;
            if q != tid && latest[q].is_none() && stack[i].footprint.dependent(fp) {
                latest[q] = Some(i);
            }
        }
        let mut reversals = Vec::new();
        for (q, i) in latest.iter().enumerate().filter_map(|(q, i)| i.map(|i| (q, i))) {
            let mut via = self.clocks[tid].clone();
            for j in latest.iter().enumerate().filter(|&(r, _)| r != q).filter_map(|(_, j)| *j) {
                for (a, b) in via.iter_mut().zip(&stack[j].clock) {
                    *a = (*a).max(*b);
                }
            }
            if via[q] > i as u32 {
                continue;
            }
            let mut first: Vec<Option<usize>> = vec![None; n];
            let mut initials = Vec::new();
            let later = (i + 1..depth)
                .filter(|&j| !before(i, &stack[j].clock))
                .map(|j| (j, stack[j].chosen, stack[j].clock.as_slice()))
                .chain([(depth, tid, clock)]);
            for (j, t, c) in later {
                if first[t].is_some() {
                    continue;
                }
                // An earlier step of r in the sequence is ordered before this
                // one iff r's first step there is.
                if (0..n).all(|r| first[r].map_or(true, |m| c[r] <= m as u32)) {
                    initials.push(t);
                }
                first[t] = Some(j);
            }
            reversals.push((i, initials));
        }
        for (i, initials) in reversals {
            let f = &mut self.stack[i];
            if initials.iter().any(|t| f.backtrack.contains(t)) {
                continue;
            }
            let pick = initials
                .iter()
                .copied()
                .filter(|t| f.enabled.contains(t))
                .min_by_key(|&t| f.asleep(t));
            match pick {
                Some(t) => {
                    f.backtrack.insert(t);
                }
                None => {
                    let all = f.enabled.clone();
                    f.backtrack.extend(all);
                }
            }
        }
    }
}

impl Strategy for Dfs {
    fn choose(&mut self, c: &Choice<'_>) -> Result<usize, Diverged> {
        let n = c.pending.len();
        if self.clocks.len() != n {
            self.clocks = vec![vec![0; n]; n];
        }
        let d = c.depth;
        let tid = if d < self.stack.len() {
            let f = &mut self.stack[d];
            if !c.enabled.contains(&f.chosen) {
                return Err(Diverged);
            }
            f.enabled = c.enabled.to_vec();
            f.chosen
        } else {
            let sleep = match self.stack.last() {
                Some(parent) if self.reduce => parent.child_sleep(),
                _ => Vec::new(),
            };
            let awake: Vec<usize> = c
                .enabled
                .iter()
                .copied()
                .filter(|t| !sleep.iter().any(|(s, _)| s == t))
                .collect();
            // With every enabled thread asleep the run is redundant; it still
            // has to finish, so pick as usual.
            let tid = if awake.is_empty() {
                sticky(c)
            } else {
                sticky(&Choice { enabled: &awake, ..*c })
            };
            let backtrack: BTreeSet<usize> = if self.reduce {
                [tid].into()
            } else {
                c.enabled.iter().copied().collect()
            };
            self.stack.push(Frame {
                enabled: c.enabled.to_vec(),
                backtrack,
                done: [tid].into(),
                chosen: tid,
                footprint: Footprint::default(),
                clock: Vec::new(),
                pending: c.pending.to_vec(),
                sleep,
            });
            tid
        };
        let fp = c.pending[tid].ok_or(Diverged)?;
        let mut clock = self.clocks[tid].clone();
        for f in &self.stack[..d] {
            if f.footprint.dependent(&fp) {
                for (a, b) in clock.iter_mut().zip(&f.clock) {
                    *a = (*a).max(*b);
                }
            }
        }
        clock[tid] = d as u32 + 1;
        if self.reduce {
            self.add_backtracks(d, tid, &fp, &clock);
        }
        let f = &mut self.stack[d];
        f.footprint = fp;
        f.clock = clock.clone();
        self.clocks[tid] = clock;
        Ok(tid)
    }
}

/// Seeded random scheduling. By default every step picks uniformly among
/// enabled threads; with a preemption probability the running thread keeps
/// going unless a coin flip says otherwise.
#[derive(Debug, Clone)]
pub struct RandomWalk {
    rng: StdRng,
    preempt: Option<f64>,
}

impl RandomWalk {
    pub fn new(seed: u64) -> Self {
        RandomWalk {
            rng: StdRng::seed_from_u64(seed),
            preempt: None,
        }
    }

    pub fn with_preemption(seed: u64, probability: f64) -> Self {
        RandomWalk {
            rng: StdRng::seed_from_u64(seed),
            preempt: Some(probability),
        }
    }
}

impl Strategy for RandomWalk {
    fn choose(&mut self, c: &Choice<'_>) -> Result<usize, Diverged> {
        if let (Some(p), Some(last)) = (self.preempt, c.last) {
            if c.enabled.contains(&last) && !self.rng.gen_bool(p) {
                return Ok(last);
            }
        }
        Ok(c.enabled[self.rng.gen_range(0..c.enabled.len())])
    }
}

/// Always runs the first enabled thread in `order`; unlisted threads come
/// after, lowest id first.
#[derive(Debug, Clone)]
pub struct Priority {
    order: Vec<usize>,
}

impl Priority {
    pub fn new(order: Vec<usize>) -> Self {
        Priority { order }
    }
}

impl Strategy for Priority {
    fn choose(&mut self, c: &Choice<'_>) -> Result<usize, Diverged> {
        Ok(self
            .order
            .iter()
            .copied()
            .find(|t| c.enabled.contains(t))
            .unwrap_or(c.enabled[0]))
    }
}

/// Follows a recorded schedule, then keeps running the last thread.
#[derive(Debug, Clone)]
pub struct Replay {
    schedule: Vec<usize>,
}

impl Replay {
    pub fn new(schedule: Vec<usize>) -> Self {
        Replay { schedule }
    }
}

impl Strategy for Replay {
    fn choose(&mut self, c: &Choice<'_>) -> Result<usize, Diverged> {
        match self.schedule.get(c.depth) {
            Some(t) if c.enabled.contains(t) => Ok(*t),
            Some(_) => Err(Diverged),
            None => Ok(sticky(c)),
        }
    }
}
