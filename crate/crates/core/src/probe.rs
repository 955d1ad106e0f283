//! Instrumentation hooks.
//!
//! The queue is generic over a [`Probe`]. The default [`NoProbe`] compiles to
//! nothing; test harnesses plug in probes that park threads before every
//! shared-memory access so interleavings can be driven deterministically.

use std::fmt;
use std::str::FromStr;

/// Kind of shared-memory access about to happen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
    /// Compare-and-exchange, swap or fetch-op.
    ReadModifyWrite,
}

/// A shared-memory access: location address plus kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Access {
    pub loc: usize,
    pub kind: AccessKind,
}

impl Access {
    pub fn read<L>(loc: &L) -> Self {
        Access {
            loc: loc as *const L as usize,
            kind: AccessKind::Read,
        }
    }

    pub fn write<L>(loc: &L) -> Self {
        Access {
            loc: loc as *const L as usize,
            kind: AccessKind::Write,
        }
    }

    pub fn rmw<L>(loc: &L) -> Self {
        Access {
            loc: loc as *const L as usize,
            kind: AccessKind::ReadModifyWrite,
        }
    }

    pub fn is_write(&self) -> bool {
        !matches!(self.kind, AccessKind::Read)
    }

    /// Two accesses conflict when they touch the same location and at least
    /// one of them writes.
    pub fn conflicts_with(&self, other: &Access) -> bool {
        self.loc == other.loc && (self.is_write() || other.is_write())
    }
}

/// Every atomic step of enqueue, dequeue and reclaim.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Point {
    EnqAcquire,
    EnqCycle,
    EnqStamp,
    EnqLoadTail,
    EnqLoadNext,
    EnqLink,
    EnqAdvanceTail,
    /// Spin: tail.next was non-NIL.
    EnqRetry,

    /// Spin: `dequeue` is about to retry after a transient failure.
    DeqRetry,
    DeqLoadFrontier,
    DeqLoadCursor,
    DeqCursorCycle,
    DeqClaim,
    DeqLoadNext,
    DeqEmptyCheck,
    DeqEmptyCheckCycle,
    DeqRecheckState,
    DeqLoadData,
    DeqTakeData,
    DeqCursorCheck,
    DeqCursorCheckCycle,
    DeqLoadSuccessor,
    DeqAdvanceCursor,
    DeqLoadBoundary,
    DeqRaiseBoundary,

    ReclaimEnter,
    ReclaimLoadFrontier,
    ReclaimLoadHead,
    ReclaimLoadCursor,
    ReclaimLoadTail,
    ReclaimInspectCycle,
    ReclaimInspect,
    ReclaimLoadNext,
    ReclaimSwing,
    ReclaimScrub,
    ReclaimResetNext,
    ReclaimRelease,
    ReclaimExit,
}

/// Enqueue phases, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnqueuePhase {
    /// Node acquired, payload stored, cycle stamped.
    Allocate,
    /// Node linked at the physical tail.
    Link,
}

/// Dequeue phases, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DequeuePhase {
    CursorLoad,
    Claim,
    DataClaim,
    CursorAdvance,
    BoundaryUpdate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Enqueue(EnqueuePhase),
    Dequeue(DequeuePhase),
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Enqueue(EnqueuePhase::Allocate) => "enq-allocate",
            Phase::Enqueue(EnqueuePhase::Link) => "enq-link",
            Phase::Dequeue(DequeuePhase::CursorLoad) => "deq-cursor-load",
            Phase::Dequeue(DequeuePhase::Claim) => "deq-claim",
            Phase::Dequeue(DequeuePhase::DataClaim) => "deq-data-claim",
            Phase::Dequeue(DequeuePhase::CursorAdvance) => "deq-cursor-advance",
            Phase::Dequeue(DequeuePhase::BoundaryUpdate) => "deq-boundary-update",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown phase `{0}`")]
pub struct UnknownPhase(pub String);

impl FromStr for Phase {
    type Err = UnknownPhase;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "enq-allocate" => Phase::Enqueue(EnqueuePhase::Allocate),
            "enq-link" => Phase::Enqueue(EnqueuePhase::Link),
            "deq-cursor-load" => Phase::Dequeue(DequeuePhase::CursorLoad),
            "deq-claim" => Phase::Dequeue(DequeuePhase::Claim),
            "deq-data-claim" => Phase::Dequeue(DequeuePhase::DataClaim),
            "deq-cursor-advance" => Phase::Dequeue(DequeuePhase::CursorAdvance),
            "deq-boundary-update" => Phase::Dequeue(DequeuePhase::BoundaryUpdate),
            other => return Err(UnknownPhase(other.to_owned())),
        })
    }
}

/// Non-parking notifications. Emitted right after the step they describe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marker {
    PhaseDone(Phase),
    /// A claim CAS succeeded on the node with this cycle and slot.
    Claimed { cycle: u64, slot: u32 },
    /// A cursor-advance CAS succeeded. `captured` is the cursor cycle read at
    /// load time, `observed` the cycle of the replaced node right after the CAS.
    CursorAdvanced { captured: u64, observed: u64 },
    /// The cursor link still matched but its node now carries a different
    /// cycle, so the advance was refused.
    CursorRefused { captured: u64, observed: u64 },
    /// The deque frontier was raised to `cycle`.
    FrontierRaised { cycle: u64 },
}

pub trait Probe: Send + Sync {
    /// When false, call sites skip computing probe arguments entirely.
    const ENABLED: bool;

    /// Called immediately before the atomic access described by `access`.
    fn yield_point(&self, point: Point, access: Access);

    /// Declares one more access performed by the step that starts at the
    /// next `yield_point`.
    fn also_touches(&self, _access: Access) {}

    /// Called when a retry loop observed no progress and is about to spin.
    fn spin(&self, _point: Point) {}

    fn marker(&self, _marker: Marker) {}

    /// Lets a harness make `try_dequeue` report a transient failure up front.
    fn force_retry(&self) -> bool {
        false
    }
}

/// Zero-cost probe used in production.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoProbe;

impl Probe for NoProbe {
    const ENABLED: bool = false;

    #[inline(always)]
    fn yield_point(&self, _point: Point, _access: Access) {}
}
