use cmpq::{NodeState, ReclaimRecord};
use cmpq_verify::{
    audit_reclamation_log, check_linearizable_fifo, check_sequential_fifo, CheckError,
    FifoViolation, HistoryBuilder, Payload, Verdict, MAX_LIN_OPS,
};
use proptest::prelude::*;

fn sequential(enq: &[u64], deq: &[u64]) -> cmpq_verify::OpHistory {
    let mut b = HistoryBuilder::new();
    for &v in enq {
        b = b.enq(0, v);
    }
    for &v in deq {
        b = b.deq(0, Payload::Id(v));
    }
    b.build()
}

#[test]
fn sequential_in_order_passes() {
    assert!(check_sequential_fifo(&sequential(&[1, 2, 3], &[1, 2, 3])).unwrap().is_pass());
}

#[test]
fn sequential_inversion_names_the_pair() {
    let v = check_sequential_fifo(&sequential(&[1, 2], &[2, 1])).unwrap();
    assert_eq!(
        v,
        Verdict::Fail(FifoViolation::Inversion {
            dequeued: 2,
            expected: 1
        })
    );
    assert!(v.witness().unwrap().to_string().contains("(2,1)"));
}

#[test]
fn sequential_thousand_passes() {
    let ids: Vec<u64> = (1..=1000).collect();
    assert!(check_sequential_fifo(&sequential(&ids, &ids)).unwrap().is_pass());
}

#[test]
fn sequential_rejects_concurrent_history() {
    let h = HistoryBuilder::new().enq(0, 1).deq(1, Payload::Id(1)).build();
    assert!(matches!(check_sequential_fifo(&h), Err(CheckError::NotSequential(_))));
}

#[test]
fn overlapping_enqueue_and_dequeue_pass() {
    let h = HistoryBuilder::new()
        .enq_invoke(0, 7)
        .deq_invoke(1)
        .deq_return(1, Payload::Id(7))
        .enq_return(0, 7)
        .build();
    assert!(check_linearizable_fifo(&h).unwrap().is_pass());
}

#[test]
fn empty_after_completed_enqueue_fails() {
    let h = HistoryBuilder::new().enq(0, 7).deq(1, Payload::Empty).build();
    let v = check_linearizable_fifo(&h).unwrap();
    assert!(!v.is_pass());
    // The same history is fine if the element was never there at all.
    let h2 = HistoryBuilder::new().deq(1, Payload::Empty).enq(0, 7).residue(&[7]).build();
    assert!(check_linearizable_fifo(&h2).unwrap().is_pass());
}

#[test]
fn real_time_order_is_enforced() {
    // enq(1) finished before enq(2) started, so 2 cannot come out first.
    let h = HistoryBuilder::new()
        .enq(0, 1)
        .enq(1, 2)
        .deq(2, Payload::Id(2))
        .residue(&[1])
        .build();
    assert!(!check_linearizable_fifo(&h).unwrap().is_pass());
    // Overlapping enqueues may take effect in either order.
    let h = HistoryBuilder::new()
        .enq_invoke(0, 1)
        .enq_invoke(1, 2)
        .enq_return(0, 1)
        .enq_return(1, 2)
        .deq(2, Payload::Id(2))
        .residue(&[1])
        .build();
    assert!(check_linearizable_fifo(&h).unwrap().is_pass());
}

#[test]
fn pending_dequeue_may_have_taken_effect() {
    let h = HistoryBuilder::new().enq(0, 1).deq_invoke(1).residue(&[]).build();
    assert!(check_linearizable_fifo(&h).unwrap().is_pass());
    let h = HistoryBuilder::new().enq(0, 1).deq_invoke(1).residue(&[1]).build();
    assert!(check_linearizable_fifo(&h).unwrap().is_pass());
}

#[test]
fn retry_takes_no_effect() {
    let h = HistoryBuilder::new().enq(0, 1).deq(1, Payload::Retry).residue(&[1]).build();
    assert!(check_linearizable_fifo(&h).unwrap().is_pass());
    let h = HistoryBuilder::new().enq(0, 1).deq(1, Payload::Retry).residue(&[]).build();
    assert!(!check_linearizable_fifo(&h).unwrap().is_pass());
}

#[test]
fn residue_order_matters() {
    let h = HistoryBuilder::new().enq(0, 1).enq(0, 2).residue(&[2, 1]).build();
    assert!(!check_linearizable_fifo(&h).unwrap().is_pass());
}

#[test]
fn failure_witness_lists_longest_prefix() {
    let h = HistoryBuilder::new().enq(0, 1).enq(0, 2).deq(1, Payload::Id(2)).residue(&[1]).build();
    let Verdict::Fail(w) = check_linearizable_fifo(&h).unwrap() else { panic!() };
    assert_eq!(w.longest_prefix, vec![0, 1]);
    assert!(w.to_string().contains("longest consistent prefix"));
}

#[test]
fn bound_exceeded() {
    let mut b = HistoryBuilder::new();
    for v in 1..=MAX_LIN_OPS as u64 + 1 {
        b = b.enq(0, v);
    }
    let h = b.residue(&(1..=MAX_LIN_OPS as u64 + 1).collect::<Vec<_>>()).build();
    assert!(matches!(check_linearizable_fifo(&h), Err(CheckError::BoundExceeded { ops: 9, .. })));
    let h = HistoryBuilder::new().enq(0, 1).enq(1, 2).enq(2, 3).enq(3, 4).residue(&[1, 2, 3, 4]).build();
    assert!(matches!(check_linearizable_fifo(&h), Err(CheckError::BoundExceeded { threads: 4, .. })));
}

#[test]
fn malformed_history_is_a_usage_error() {
    let h = HistoryBuilder::new().enq_return(0, 1).build();
    assert!(matches!(check_linearizable_fifo(&h), Err(CheckError::Malformed(_))));
    assert!(matches!(check_sequential_fifo(&h), Err(CheckError::Malformed(_))));
}

fn rec(state: NodeState, cycle: u64, frontier: u64, window: u64) -> ReclaimRecord {
    ReclaimRecord {
        cycle,
        state,
        deque_cycle_at_free: frontier,
        window,
    }
}

#[test]
fn audit_examples() {
    assert!(audit_reclamation_log(&[rec(NodeState::Claimed, 5, 1000, 100)]).is_pass());
    let v = audit_reclamation_log(&[
        rec(NodeState::Claimed, 5, 1000, 100),
        rec(NodeState::Available, 5, 1000, 100),
    ]);
    assert_eq!(v.witness().map(|w| w.index), Some(1));
    // Boundary: cycle must be strictly below frontier - window.
    assert!(!audit_reclamation_log(&[rec(NodeState::Claimed, 900, 1000, 100)]).is_pass());
    assert!(audit_reclamation_log(&[rec(NodeState::Claimed, 899, 1000, 100)]).is_pass());
}

fn model_run(ops: &[Option<u64>]) -> cmpq_verify::OpHistory {
    let mut q = std::collections::VecDeque::new();
    let mut b = HistoryBuilder::new();
    for op in ops {
        match op {
            Some(v) => {
                q.push_back(*v);
                b = b.enq(0, *v);
            }
            None => b = b.deq(0, q.pop_front().map_or(Payload::Empty, Payload::Id)),
        }
    }
    b.residue(&q.into_iter().collect::<Vec<_>>()).build()
}

fn op_sequence(max_len: usize) -> impl Strategy<Value = Vec<Option<u64>>> {
    prop::collection::vec(prop::bool::ANY, 0..=max_len).prop_map(|bits| {
        let mut next = 0;
        bits.into_iter()
            .map(|enq| {
                enq.then(|| {
                    next += 1;
                    next
                })
            })
            .collect()
    })
}

proptest! {
    /// Any history produced by a sequential FIFO is accepted by both checkers.
    #[test]
    fn model_histories_pass(ops in op_sequence(MAX_LIN_OPS)) {
        let h = model_run(&ops);
        prop_assert!(check_sequential_fifo(&h).unwrap().is_pass());
        prop_assert!(check_linearizable_fifo(&h).unwrap().is_pass());
    }

    /// Swapping two distinct dequeue results of a sequential run is caught.
    #[test]
    fn swapped_results_fail(ops in op_sequence(MAX_LIN_OPS - 4), pick in 0usize..64) {
        // Two items in front and two dequeues at the end guarantee at least
        // one pair of different results.
        let n = ops.iter().flatten().count() as u64;
        let ops: Vec<Option<u64>> = [Some(n + 1), Some(n + 2)]
            .into_iter()
            .chain(ops)
            .chain([None, None])
            .collect();
        let h = model_run(&ops);
        let rets: Vec<usize> = h.events.iter().enumerate()
            .filter(|(_, e)| e.kind == cmpq_verify::EventKind::DeqReturn)
            .map(|(k, _)| k).collect();
        let pairs: Vec<(usize, usize)> = rets.iter()
            .flat_map(|&a| rets.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a < b && h.events[a].payload != h.events[b].payload)
            .collect();
        let (a, b) = pairs[pick % pairs.len()];
        let mut bad = h.clone();
        bad.events[a].payload = h.events[b].payload;
        bad.events[b].payload = h.events[a].payload;
        prop_assert!(!check_sequential_fifo(&bad).unwrap().is_pass());
        prop_assert!(!check_linearizable_fifo(&bad).unwrap().is_pass());
    }
}
