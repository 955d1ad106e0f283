use std::fmt;
use std::io;

use cmpq::{compute_window, QueueConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Impl {
    Cmp,
    /// Mutex around a linked list.
    Locked,
}

impl fmt::Display for Impl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Impl::Cmp => "cmp",
            Impl::Locked => "locked",
        })
    }
}

impl std::str::FromStr for Impl {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cmp" => Ok(Impl::Cmp),
            "locked" => Ok(Impl::Locked),
            _ => Err(BenchError::InvalidConfig(format!("unknown impl {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub producers: usize,
    pub consumers: usize,
    pub total_items: u64,
    pub implementation: Impl,
    /// Work-loop iterations after every queue operation.
    pub synthetic_load: Option<u32>,
    pub repetitions: usize,
    /// Items pushed through the queue on one thread before timing starts.
    pub warmup_items: u64,
    /// Time one operation in every `latency_sample_rate`.
    pub latency_sample_rate: u32,
    pub pin: bool,
    /// Only used by [`Impl::Cmp`].
    pub queue: QueueConfig,
}

impl BenchConfig {
    pub fn new(implementation: Impl, producers: usize, consumers: usize, total_items: u64) -> Self {
        BenchConfig {
            producers,
            consumers,
            total_items,
            implementation,
            synthetic_load: None,
            repetitions: 1,
            warmup_items: 1024,
            latency_sample_rate: 64,
            pin: false,
            // Sized for ~5M ops/s with threads descheduled for up to 100 ms,
            // which oversubscribed runs see routinely.
            queue: QueueConfig {
                window_size: compute_window(5e6, 0.1, QueueConfig::default().min_window),
                ..QueueConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.to_owned()));
        if self.producers == 0 || self.consumers == 0 {
            return bad("need at least one producer and one consumer");
        }
        if self.total_items == 0 || self.total_items % self.producers as u64 != 0 {
            return bad("total_items must be a positive multiple of the producer count");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.latency_sample_rate == 0 {
            return bad("latency sample rate must be at least 1");
        }
        if self.total_items >= 1 << 48 {
            return bad("total_items too large");
        }
        if self.implementation == Impl::Cmp {
            self.queue.validate().map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    /// The same measurement without synthetic load.
    pub fn baseline(&self) -> Self {
        BenchConfig {
            synthetic_load: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("thread spawn failed: {0}")]
    Spawn(io::Error),
    #[error("conservation violated: {enqueued} enqueued, {dequeued} dequeued, {duplicates} duplicated, {missing} missing")]
    Conservation {
        enqueued: u64,
        dequeued: u64,
        duplicates: u64,
        missing: u64,
    },
    #[error("no baseline run for {implementation} {producers}P{consumers}C in this session")]
    MissingBaseline {
        implementation: Impl,
        producers: usize,
        consumers: usize,
    },
    #[error("percentile of an empty sample")]
    EmptySamples,
    #[error("raw samples line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}
