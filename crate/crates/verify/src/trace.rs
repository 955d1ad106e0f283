//! Human-readable execution traces.

use std::fmt;

use cmpq::probe::Probe;
use cmpq::{CmpQueue, Handle};

use crate::sched::{Loc, StepKind, TraceItem};

#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub items: Vec<TraceItem>,
    /// Queue-level locations by address.
    pub names: Vec<(usize, &'static str)>,
}

impl Trace {
    pub(crate) fn location_names<T: Handle, P: Probe>(q: &CmpQueue<T, P>) -> Vec<(usize, &'static str)> {
        q.inspect().locations().to_vec()
    }

    fn loc_name(&self, loc: Loc) -> String {
        match loc {
            Loc::Var(a) => self
                .names
                .iter()
                .find(|(x, _)| *x == a)
                .map_or_else(|| format!("{a:#x}"), |(_, n)| (*n).to_owned()),
            Loc::Node(slot) => format!("node[{slot}]"),
            Loc::AllNodes => "pool".to_owned(),
            Loc::History => "history".to_owned(),
            Loc::Control(t) => format!("control[{t}]"),
            Loc::Global => "everything".to_owned(),
        }
    }

    pub fn steps(&self) -> usize {
        self.items.iter().filter(|i| matches!(i, TraceItem::Step { .. })).count()
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut n = 0;
        for item in &self.items {
            match item {
                TraceItem::Step { tid, step } => {
                    n += 1;
                    let locs: Vec<String> = step
                        .footprint
                        .touches()
                        .map(|t| format!("{}{}", if t.write { "w " } else { "r " }, self.loc_name(t.loc)))
                        .collect();
                    let what = match step.kind {
                        StepKind::Access { point, .. } => format!("{point:?}"),
                        StepKind::Invoke(op) => format!("invoke {op}"),
                        StepKind::Return(op) => format!("return {op}"),
                        StepKind::Resume(t) => format!("resume thread {t}"),
                        StepKind::Paused(at) => format!("paused {at}"),
                        StepKind::Atomic => "atomic section".to_owned(),
                        StepKind::Spin(p) => format!("spin at {p:?}"),
                    };
                    writeln!(f, "{n:>5}  T{tid}  {what:<24} {}", locs.join(", "))?;
                }
                TraceItem::Marker { tid, marker } => writeln!(f, "       T{tid}    · {marker:?}")?,
                TraceItem::Event(e) => writeln!(f, "       {e}")?,
                TraceItem::Stalled { tid, at } => writeln!(f, "       T{tid}  STALL {at}")?,
                TraceItem::AutoResume { tid } => writeln!(f, "       T{tid}  auto-resume (nothing else runnable)")?,
            }
        }
        Ok(())
    }
}
