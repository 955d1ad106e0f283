use std::collections::HashSet;

use cmpq_verify::{
    check_linearizable_fifo, explore_interleavings, run_once, ExploreConfig, ExploreMode,
    Granularity, HistoryMode, Payload, Scenario, ScriptOp,
};
use cmpq_verify::strategy::Dfs;

#[test]
fn single_enqueue_has_one_history() {
    let s = Scenario::new("one").thread(vec![ScriptOp::Enq(1)]);
    let (hs, ex) = explore_interleavings(&s, &ExploreConfig::mode(ExploreMode::Exhaustive));
    assert!(ex.complete);
    assert_eq!(hs.len(), 1);
    assert_eq!(hs[0].residue, vec![1]);
}

#[test]
fn two_enqueuers_at_phase_granularity() {
    let s = Scenario::new("2enq")
        .thread(vec![ScriptOp::Enq(1)])
        .thread(vec![ScriptOp::Enq(2)])
        .granularity(Granularity::Phase)
        .history_mode(HistoryMode::Inline);
    let (hs, ex) = explore_interleavings(&s, &ExploreConfig::mode(ExploreMode::Exhaustive));
    assert!(ex.complete);
    assert_eq!(ex.executions, 6);
    let residues: HashSet<Vec<u64>> = hs.iter().map(|h| h.residue.clone()).collect();
    assert_eq!(residues, HashSet::from([vec![1, 2], vec![2, 1]]));
}

#[test]
fn one_producer_one_consumer_never_duplicates() {
    let s = Scenario::new("1p1c")
        .thread(vec![ScriptOp::Enq(1)])
        .thread(vec![ScriptOp::Deq]);
    let (hs, ex) = explore_interleavings(&s, &ExploreConfig::mode(ExploreMode::Reduced));
    assert!(ex.complete);
    for h in &hs {
        h.conservation().unwrap();
        assert!(check_linearizable_fifo(h).unwrap().is_pass(), "{h}");
    }
    let outcomes: HashSet<bool> = hs
        .iter()
        .map(|h| h.events.iter().any(|e| e.payload == Payload::Id(1) && !e.kind.is_invoke() && e.thread_id == 1))
        .collect();
    assert_eq!(outcomes.len(), 2, "both EMPTY and a successful dequeue are reachable");
}

#[test]
fn trace_prints() {
    let s = Scenario::new("t").thread(vec![ScriptOp::Enq(1), ScriptOp::Deq]);
    let (e, _) = run_once(&s, Box::new(Dfs::exhaustive()));
    assert!(e.error.is_none());
    let text = e.trace.to_string();
    assert!(text.contains("tail"), "{text}");
}
