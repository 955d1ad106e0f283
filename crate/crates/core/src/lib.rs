//! Lock-free multi-producer/multi-consumer FIFO queue with cyclic memory
//! protection.
//!
//! Every enqueued node carries an immutable cycle stamp. Consumers claim nodes
//! with a single state CAS and publish the highest claimed cycle as the
//! dequeue frontier. A reclaimer frees claimed nodes whose cycle trails the
//! frontier by more than a configured window, without hazard pointers, epochs
//! or any other per-thread announcement. Nodes come from a type-stable pool so
//! a stale link always addresses a readable node.
//!
//! ```
//! use std::num::NonZeroU64;
//! use cmpq::{CmpQueue, QueueConfig};
//!
//! let q: CmpQueue<NonZeroU64> = CmpQueue::new(QueueConfig::default()).unwrap();
//! q.enqueue(NonZeroU64::new(7).unwrap()).unwrap();
//! assert_eq!(q.dequeue().map(|v| v.get()), Some(7));
//! assert_eq!(q.dequeue(), None);
//! ```

mod config;
mod handle;
pub mod pool;
pub mod probe;
mod queue;

pub use config::{
    compute_window, safe_cycle, ConfigError, ProtectionWindow, QueueConfig, TriggerPolicy,
    DEFAULT_MIN_BATCH, DEFAULT_MIN_WINDOW, DEFAULT_POOL_CAPACITY, DEFAULT_TRIGGER_PERIOD,
    DEFAULT_WINDOW,
};
pub use handle::Handle;
pub use pool::{Growth, Node, NodePool, NodeState, PoolError, PoolStats};
pub use queue::{
    CmpQueue, EnqueueError, Inspector, NodeView, QueueError, QueueStats, ReclaimRecord, TryDequeue,
};

/// The reclamation safety predicate: a node may be freed only once it has
/// left the abstract queue and its cycle is below the safe boundary.
#[inline]
pub fn is_reclaimable(state: NodeState, cycle: u64, safe_cycle: u64) -> bool {
    state != NodeState::Available && cycle < safe_cycle
}
