use std::collections::HashSet;
use std::ops::ControlFlow;

use cmpq_verify::scenarios::{check_scenario, linearizability_scenarios};
use cmpq_verify::stress::run_parallel;
use cmpq_verify::{
    check_linearizable_fifo, explore_with, EventKind, ExploreConfig, ExploreMode, OpHistory, Payload,
    Scenario,
    ScriptOp::{Deq, Enq},
};

type Shape = Vec<(usize, EventKind, Payload)>;

/// Event order with runs of adjacent invocations sorted by thread. Reordering
/// such a run changes no return-before-invoke relation, so the checker cannot
/// tell the variants apart and the reduced search only visits one of them.
fn shape(h: &OpHistory) -> Shape {
    let mut out: Shape = h.events.iter().map(|e| (e.thread_id, e.kind, e.payload)).collect();
    let mut i = 0;
    while i < out.len() {
        let j = (i..out.len()).find(|&k| !out[k].1.is_invoke()).unwrap_or(out.len());
        out[i..j].sort_by_key(|e| e.0);
        i = j + 1;
    }
    out
}

fn shapes(s: &Scenario, mode: ExploreMode) -> HashSet<Shape> {
    let mut out = HashSet::new();
    let ex = explore_with(s, &ExploreConfig::mode(mode), |e| {
        assert!(e.error.is_none(), "{:?}", e.error);
        out.insert(shape(&e.history));
        ControlFlow::Continue(())
    });
    assert!(ex.complete);
    out
}

#[test]
fn smallest_scenario_is_linearizable() {
    let s = &linearizability_scenarios()[0];
    let r = check_scenario(s, &ExploreConfig::mode(ExploreMode::Reduced), 3);
    assert!(r.passed(), "{}", r.failures.iter().map(ToString::to_string).collect::<String>());
    assert!(r.distinct_histories >= 2);
}

#[test]
fn reduced_search_covers_random_sampling() {
    let s = Scenario::new("cover")
        .setup(vec![Enq(1)])
        .thread(vec![Enq(2)])
        .thread(vec![Deq, Deq]);
    let reduced = shapes(&s, ExploreMode::Reduced);
    let sampled = shapes(&s, ExploreMode::Random { seed: 7, runs: 3000 });
    let missing: Vec<_> = sampled.difference(&reduced).collect();
    assert!(missing.is_empty(), "random walk found histories the reduced search missed: {missing:?}");
}

#[test]
fn two_producers_two_ops_each_sampled() {
    // Too many interleavings to enumerate; sampled with a fixed seed.
    let s = Scenario::new("2P1C, 2 ops each")
        .thread(vec![Enq(1), Enq(2)])
        .thread(vec![Enq(3), Enq(4)])
        .thread(vec![Deq, Deq]);
    let r = check_scenario(&s, &ExploreConfig::default(), 3);
    assert!(matches!(r.exploration.mode, ExploreMode::Random { .. }));
    assert_eq!(r.exploration.executions, 1000);
    assert!(r.passed(), "{}", r.failures.iter().map(ToString::to_string).collect::<String>());
    assert!(r.distinct_histories > 10);
}

#[test]
fn parallel_run_records_a_checkable_history() {
    let s = Scenario::new("par")
        .setup(vec![Enq(10)])
        .thread(vec![Enq(1), Enq(2)])
        .thread(vec![Enq(3)])
        .thread(vec![Deq, Deq]);
    for _ in 0..50 {
        let (h, stats) = run_parallel(&s).unwrap();
        h.conservation().unwrap();
        assert_eq!(h.completed_ops(), 5);
        assert!(check_linearizable_fifo(&h).unwrap().is_pass(), "{h}");
        assert_eq!(stats.pool.poison_violations, 0);
    }
}

#[test]
fn parallel_run_rejects_stalls() {
    let mut s = Scenario::new("par").thread(vec![Deq]);
    s.inject_stall(0, "deq-claim").unwrap();
    assert!(run_parallel(&s).is_err());
}
