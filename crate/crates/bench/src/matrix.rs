//! Repetition order, aggregation across repetitions, and retention.

use std::collections::HashMap;

use crate::config::{BenchConfig, BenchError, Impl};
use crate::report::{analyze, median_report, BenchReport};
use crate::run::{run_config, run_single, RunSamples};

/// (config index, repetition) pairs in the order they run. Round robin
/// takes repetition r of every config before repetition r + 1 of any.
pub fn execution_order(configs: &[BenchConfig], round_robin: bool) -> Vec<(usize, usize)> {
    let mut order = Vec::new();
    if round_robin {
        let max = configs.iter().map(|c| c.repetitions).max().unwrap_or(0);
        for rep in 0..max {
            for (i, c) in configs.iter().enumerate() {
                if rep < c.repetitions {
                    order.push((i, rep));
                }
            }
        }
    } else {
        for (i, c) in configs.iter().enumerate() {
            order.extend((0..c.repetitions).map(|rep| (i, rep)));
        }
    }
    order
}

type Key = (Impl, usize, usize, Option<u32>);

fn key(r: &RunSamples) -> Key {
    (r.implementation, r.producers, r.consumers, r.load)
}

/// Groups runs by (impl, P, C, load) in order of first appearance, reports
/// the median of each group, and fills in retention for loaded groups that
/// have an unloaded counterpart.
pub fn aggregate(runs: &[RunSamples]) -> Vec<BenchReport> {
    let mut keys: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, Vec<BenchReport>> = HashMap::new();
    for r in runs {
        let k = key(r);
        if !groups.contains_key(&k) {
            keys.push(k);
        }
        groups.entry(k).or_default().push(analyze(r));
    }
    let medians: HashMap<Key, BenchReport> = groups.iter().map(|(k, v)| (*k, median_report(v))).collect();
    keys.iter()
        .map(|k| {
            let mut r = medians[k].clone();
            if k.3.is_some() {
                r.retention = medians
                    .get(&(k.0, k.1, k.2, None))
                    .map(|base| retention(r.throughput, base.throughput));
            }
            r
        })
        .collect()
}

/// Runs every repetition of every config in [`execution_order`] through
/// `runner` and aggregates the results.
pub fn run_matrix_with(
    configs: &[BenchConfig],
    round_robin: bool,
    mut runner: impl FnMut(&BenchConfig) -> Result<RunSamples, BenchError>,
) -> Result<Vec<BenchReport>, BenchError> {
    for c in configs {
        c.validate()?;
    }
    let runs = execution_order(configs, round_robin)
        .into_iter()
        .map(|(i, _)| runner(&configs[i]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(&runs))
}

pub fn run_matrix(configs: &[BenchConfig], round_robin: bool) -> Result<Vec<BenchReport>, BenchError> {
    run_matrix_with(configs, round_robin, run_single)
}

pub fn retention(loaded: f64, baseline: f64) -> f64 {
    loaded / baseline
}

/// Baseline throughputs measured so far, for retention of later loaded runs.
#[derive(Debug, Default)]
pub struct Session {
    baselines: HashMap<(Impl, usize, usize), f64>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_baseline(&mut self, report: &BenchReport) {
        self.baselines
            .insert((report.implementation, report.producers, report.consumers), report.throughput);
    }

    /// Runs the baseline of `cfg` and records it.
    pub fn run_baseline(&mut self, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
        let r = run_config(&cfg.baseline())?;
        self.record_baseline(&r);
        Ok(r)
    }

    pub fn baseline(&self, implementation: Impl, producers: usize, consumers: usize) -> Result<f64, BenchError> {
        self.baselines
            .get(&(implementation, producers, consumers))
            .copied()
            .ok_or(BenchError::MissingBaseline {
                implementation,
                producers,
                consumers,
            })
    }
}

/// Runs the loaded config and divides its throughput by the session's
/// baseline for the same implementation and thread counts.
pub fn run_retention(session: &Session, cfg: &BenchConfig) -> Result<f64, BenchError> {
    let base = session.baseline(cfg.implementation, cfg.producers, cfg.consumers)?;
    let loaded = run_config(cfg)?;
    Ok(retention(loaded.throughput, base))
}
