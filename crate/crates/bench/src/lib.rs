//! Throughput and latency harness: P×C thread matrices, sampled per-op
//! latency with a single-pass 3σ filter, nearest-rank percentiles,
//! round-robin repetition order and synthetic-load retention.

pub mod config;
pub mod locked;
pub mod matrix;
pub mod report;
pub mod run;
pub mod samples;
pub mod stats;

pub use config::{BenchConfig, BenchError, Impl};
pub use locked::LockedQueue;
pub use matrix::{aggregate, execution_order, retention, run_matrix, run_matrix_with, run_retention, Session};
pub use report::{analyze, emit_report, median_report, write_report, BenchReport, Format};
pub use run::{run_config, run_single, run_single_clocked, RunSamples};
pub use samples::{format_raw_samples, parse_raw_samples, read_raw_samples, write_raw_samples};
pub use stats::{mean, median, percentile, three_sigma_filter};
