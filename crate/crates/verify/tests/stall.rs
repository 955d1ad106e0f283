use std::ops::ControlFlow;

use cmpq::QueueConfig;
use cmpq_verify::{
    check_linearizable_fifo, explore_with, EventKind, ExploreConfig, ExploreMode, Payload, Scenario,
    ScriptOp::{Deq, Enq, TryDeq},
};

#[test]
fn unknown_phase_is_rejected() {
    let mut s = Scenario::new("bad").thread(vec![Deq]);
    assert!(s.inject_stall(0, "deq-nap").is_err());
    assert!(s.inject_stall(0, "deq-claim").is_ok());
}

#[test]
fn stall_then_resume_never_duplicates() {
    let mut s = Scenario::new("resume")
        .config(QueueConfig {
            window_size: 2,
            min_window: 1,
            trigger_period: 1,
            min_batch_size: 1,
            ..QueueConfig::default()
        })
        .setup(vec![Enq(1), Enq(2)])
        .thread(vec![TryDeq]);
    let h = s.inject_stall(0, "deq-claim").unwrap();
    s = s.thread(vec![Deq, Deq, h.resume_op()]);
    let mut runs = 0;
    let mut retries = 0;
    let ex = explore_with(&s, &ExploreConfig::mode(ExploreMode::Reduced), |e| {
        runs += 1;
        assert!(e.error.is_none(), "{:?}", e.error);
        e.history.conservation().unwrap();
        assert!(check_linearizable_fifo(&e.history).unwrap().is_pass(), "{}", e.history);
        retries += e
            .history
            .events
            .iter()
            .filter(|ev| ev.thread_id == 0 && ev.payload == Payload::Retry)
            .count();
        ControlFlow::Continue(())
    });
    assert!(ex.complete);
    assert!(runs > 1);
    assert!(retries > 0, "no schedule made the stalled claim give up");
}

#[test]
fn stalled_producer_does_not_block_others() {
    let mut s = Scenario::new("mid-enqueue").thread(vec![Enq(1)]);
    s.inject_stall(0, "enq-allocate").unwrap();
    s = s.thread(vec![Enq(2), Deq]);
    let ex = explore_with(&s, &ExploreConfig::mode(ExploreMode::Reduced), |e| {
        assert!(e.error.is_none(), "{:?}", e.error);
        let t1: Vec<_> = e.history.events.iter().filter(|ev| ev.thread_id == 1).collect();
        assert_eq!(t1.len(), 4, "{}", e.history);
        let t0_return = e.history.events.iter().position(|ev| ev.thread_id == 0 && ev.kind == EventKind::EnqReturn);
        let t1_last = e.history.events.iter().rposition(|ev| ev.thread_id == 1).unwrap();
        // The unlinked node is private, so thread 1 finishes while thread 0 is
        // still parked, and it gets its own item.
        assert!(t0_return.is_some_and(|r| r > t1_last), "{}", e.history);
        assert_eq!(t1[3].payload, Payload::Id(2));
        assert!(check_linearizable_fifo(&e.history).unwrap().is_pass());
        ControlFlow::Continue(())
    });
    assert!(ex.complete);
}
