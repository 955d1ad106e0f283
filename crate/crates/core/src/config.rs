use thiserror::Error;

use crate::pool::Growth;

pub const DEFAULT_WINDOW: u64 = 4096;
pub const DEFAULT_TRIGGER_PERIOD: u64 = 1024;
pub const DEFAULT_MIN_BATCH: usize = 32;
pub const DEFAULT_MIN_WINDOW: u64 = 1024;
pub const DEFAULT_POOL_CAPACITY: usize = 4096;

/// When an enqueue attempts reclamation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriggerPolicy {
    /// Every enqueue whose cycle is a multiple of the trigger period.
    Modulo,
    /// Each enqueue with probability 1/period, drawn from a hash of its cycle.
    Bernoulli,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueueConfig {
    /// Protection window W, in dequeue cycles.
    pub window_size: u64,
    /// Enqueues between reclamation attempts (N).
    pub trigger_period: u64,
    pub min_batch_size: usize,
    pub min_window: u64,
    pub trigger: TriggerPolicy,
    pub pool_capacity: usize,
    pub growth: Growth,
    /// Keep a record of every freed node for post-run auditing.
    pub log_reclamation: bool,
}

impl Default for QueueConfig {
    fn default() -> Self {
        QueueConfig {
            window_size: DEFAULT_WINDOW,
            trigger_period: DEFAULT_TRIGGER_PERIOD,
            min_batch_size: DEFAULT_MIN_BATCH,
            min_window: DEFAULT_MIN_WINDOW,
            trigger: TriggerPolicy::Modulo,
            pool_capacity: DEFAULT_POOL_CAPACITY,
            growth: Growth::Geometric,
            log_reclamation: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("min_window must be at least 1")]
    ZeroMinWindow,
    #[error("window size {window} is below min_window {min_window}")]
    WindowBelowMinimum { window: u64, min_window: u64 },
    #[error("trigger period must be at least 1")]
    ZeroTriggerPeriod,
    #[error("min_batch_size must be at least 1")]
    ZeroMinBatch,
    #[error("pool capacity must be at least 1")]
    ZeroPoolCapacity,
}

impl QueueConfig {
    /// Window `w` with `min_window` lowered to match when necessary.
    pub fn with_window(mut self, w: u64) -> Self {
        self.window_size = w;
        self.min_window = self.min_window.min(w.max(1));
        self
    }

    /// Sizes the window from an expected dequeue rate and the longest thread
    /// delay that must be tolerated.
    pub fn with_window_for(mut self, ops_per_second: f64, resilience_seconds: f64) -> Self {
        self.window_size = compute_window(ops_per_second, resilience_seconds, self.min_window);
        self
    }

    pub fn with_trigger_period(mut self, n: u64) -> Self {
        self.trigger_period = n;
        self
    }

    pub fn with_min_batch(mut self, b: usize) -> Self {
        self.min_batch_size = b;
        self
    }

    pub fn with_pool(mut self, capacity: usize, growth: Growth) -> Self {
        self.pool_capacity = capacity;
        self.growth = growth;
        self
    }

    pub fn with_trigger(mut self, trigger: TriggerPolicy) -> Self {
        self.trigger = trigger;
        self
    }

    pub fn with_reclaim_log(mut self, on: bool) -> Self {
        self.log_reclamation = on;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_window == 0 {
            return Err(ConfigError::ZeroMinWindow);
        }
        if self.window_size < self.min_window {
            return Err(ConfigError::WindowBelowMinimum {
                window: self.window_size,
                min_window: self.min_window,
            });
        }
        if self.trigger_period == 0 {
            return Err(ConfigError::ZeroTriggerPeriod);
        }
        if self.min_batch_size == 0 {
            return Err(ConfigError::ZeroMinBatch);
        }
        if self.pool_capacity == 0 {
            return Err(ConfigError::ZeroPoolCapacity);
        }
        Ok(())
    }

    pub(crate) fn should_trigger(&self, cycle: u64) -> bool {
        match self.trigger {
            TriggerPolicy::Modulo => cycle % self.trigger_period == 0,
            TriggerPolicy::Bernoulli => splitmix64(cycle) % self.trigger_period == 0,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// `max(min_window, ceil(ops_per_second * resilience_seconds))`.
///
/// Negative or non-finite inputs count as zero.
pub fn compute_window(ops_per_second: f64, resilience_seconds: f64, min_window: u64) -> u64 {
    let product = ops_per_second.max(0.0) * resilience_seconds.max(0.0);
    let scaled = if product.is_finite() {
        // Round away binary noise before taking the ceiling: 1e6 * 0.01 is
        // 10000.000000000002 in f64.
        let rounded = (product * 1e9).round() / 1e9;
        rounded.ceil()
    } else {
        0.0
    };
    let scaled = if scaled >= u64::MAX as f64 {
        u64::MAX
    } else {
        scaled as u64
    };
    scaled.max(min_window)
}

/// Highest cycle that is still unsafe to reclaim is `safe_cycle - 1`.
#[inline]
pub fn safe_cycle(deque_cycle: u64, window: u64) -> u64 {
    deque_cycle.saturating_sub(window)
}

/// The trailing interval of cycles that may not be reclaimed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtectionWindow {
    pub low: u64,
    pub high: u64,
}

impl ProtectionWindow {
    pub fn new(deque_cycle: u64, window: u64) -> Self {
        ProtectionWindow {
            low: safe_cycle(deque_cycle, window),
            high: deque_cycle,
        }
    }

    pub fn contains(&self, cycle: u64) -> bool {
        (self.low..=self.high).contains(&cycle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_floor_dominates() {
        assert_eq!(compute_window(0.0, 0.0, 1024), 1024);
        assert_eq!(compute_window(100.0, 1.0, 1024), 1024);
    }

    #[test]
    fn window_from_rate() {
        // 1_000_000 ops/s * 10 ms = 10_000 by hand.
        assert_eq!(compute_window(1_000_000.0, 0.01, 1024), 10_000);
        assert_eq!(compute_window(1500.0, 1.0001, 1), 1501);
        assert_eq!(compute_window(-5.0, 3.0, 7), 7);
    }

    #[test]
    fn safe_cycle_formula() {
        assert_eq!(safe_cycle(1000, 100), 900);
        assert_eq!(safe_cycle(50, 100), 0);
        let wide = 1u128 << 40;
        let expect = (wide - (1u128 << 10)) as u64;
        assert_eq!(safe_cycle(1 << 40, 1 << 10), expect);
    }

    #[test]
    fn protection_window_bounds() {
        let p = ProtectionWindow::new(1000, 100);
        assert_eq!(p.high - p.low, 100);
        assert!(p.contains(900) && p.contains(1000) && !p.contains(899));
        let q = ProtectionWindow::new(10, 100);
        assert_eq!(q.low, 0);
    }

    #[test]
    fn validation() {
        assert!(QueueConfig::default().validate().is_ok());
        let c = QueueConfig {
            window_size: 10,
            ..QueueConfig::default()
        };
        assert_eq!(
            c.validate(),
            Err(ConfigError::WindowBelowMinimum {
                window: 10,
                min_window: 1024
            })
        );
        assert!(QueueConfig::default().with_window(10).validate().is_ok());
        assert_eq!(
            QueueConfig::default().with_trigger_period(0).validate(),
            Err(ConfigError::ZeroTriggerPeriod)
        );
        assert_eq!(
            QueueConfig::default().with_min_batch(0).validate(),
            Err(ConfigError::ZeroMinBatch)
        );
    }

    #[test]
    fn modulo_trigger() {
        let c = QueueConfig::default().with_trigger_period(4);
        let hits: Vec<u64> = (1..=12).filter(|&x| c.should_trigger(x)).collect();
        assert_eq!(hits, vec![4, 8, 12]);
    }

    #[test]
    fn bernoulli_trigger_rate() {
        let c = QueueConfig::default()
            .with_trigger_period(64)
            .with_trigger(TriggerPolicy::Bernoulli);
        let hits = (1..=640_000u64).filter(|&x| c.should_trigger(x)).count();
        assert!((9_000..11_000).contains(&hits), "{hits}");
    }

    proptest! {
        #[test]
        fn safe_cycle_matches_wide_subtraction(d in any::<u64>(), w in any::<u64>()) {
            let wide = d as i128 - w as i128;
            prop_assert_eq!(safe_cycle(d, w) as i128, wide.max(0));
        }

        #[test]
        fn window_never_below_floor(ops in 0.0f64..1e9, r in 0.0f64..10.0, floor in 1u64..1_000_000) {
            let w = compute_window(ops, r, floor);
            prop_assert!(w >= floor);
            prop_assert!(w as f64 >= (ops * r).floor());
        }
    }
}
