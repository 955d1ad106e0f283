//! Per-run analysis and report output.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{BenchError, Impl};
use crate::run::RunSamples;
use crate::stats::{mean, median, percentile, three_sigma_filter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Md,
}

/// One row of output. Latencies are in nanoseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    #[serde(rename = "impl")]
    pub implementation: Impl,
    #[serde(rename = "P")]
    pub producers: usize,
    #[serde(rename = "C")]
    pub consumers: usize,
    /// Items per second.
    pub throughput: f64,
    pub avg_enq: f64,
    pub p99_enq: u64,
    pub avg_deq: f64,
    pub p99_deq: u64,
    pub filtered_fraction: f64,
    pub retention: Option<f64>,
}

fn latency(samples: &[u64]) -> (f64, u64, usize) {
    let (mut kept, _) = three_sigma_filter(samples);
    let removed = samples.len() - kept.len();
    kept.sort_unstable();
    (mean(&kept), percentile(&kept, 99.0).unwrap_or(0), removed)
}

/// Filters each latency series, then takes the average and P99 of what is
/// left.
pub fn analyze(run: &RunSamples) -> BenchReport {
    let (avg_enq, p99_enq, removed_enq) = latency(&run.enq_ns);
    let (avg_deq, p99_deq, removed_deq) = latency(&run.deq_ns);
    let total = run.enq_ns.len() + run.deq_ns.len();
    BenchReport {
        implementation: run.implementation,
        producers: run.producers,
        consumers: run.consumers,
        throughput: if run.elapsed_ns == 0 {
            0.0
        } else {
            run.items as f64 * 1e9 / run.elapsed_ns as f64
        },
        avg_enq,
        p99_enq,
        avg_deq,
        p99_deq,
        filtered_fraction: if total == 0 {
            0.0
        } else {
            (removed_enq + removed_deq) as f64 / total as f64
        },
        retention: None,
    }
}

/// Field-wise median over repetitions of one configuration.
pub fn median_report(reps: &[BenchReport]) -> BenchReport {
    let first = reps.first().expect("at least one repetition");
    let f = |g: fn(&BenchReport) -> f64| median(&reps.iter().map(g).collect::<Vec<_>>());
    let retentions: Vec<f64> = reps.iter().filter_map(|r| r.retention).collect();
    BenchReport {
        throughput: f(|r| r.throughput),
        avg_enq: f(|r| r.avg_enq),
        p99_enq: f(|r| r.p99_enq as f64).round() as u64,
        avg_deq: f(|r| r.avg_deq),
        p99_deq: f(|r| r.p99_deq as f64).round() as u64,
        filtered_fraction: f(|r| r.filtered_fraction),
        retention: (!retentions.is_empty()).then(|| median(&retentions)),
        ..first.clone()
    }
}

const COLUMNS: [&str; 10] = [
    "impl",
    "P",
    "C",
    "throughput",
    "avg_enq",
    "p99_enq",
    "avg_deq",
    "p99_deq",
    "filtered_fraction",
    "retention",
];

fn cells(r: &BenchReport) -> [String; 10] {
    [
        r.implementation.to_string(),
        r.producers.to_string(),
        r.consumers.to_string(),
        format!("{:.0}", r.throughput),
        format!("{:.1}", r.avg_enq),
        r.p99_enq.to_string(),
        format!("{:.1}", r.avg_deq),
        r.p99_deq.to_string(),
        format!("{:.6}", r.filtered_fraction),
        r.retention.map_or_else(String::new, |x| format!("{x:.4}")),
    ]
}

pub fn emit_report(reports: &[BenchReport], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for r in reports {
                out.push_str(&cells(r).join(","));
                out.push('\n');
            }
        }
        Format::Json => {
            out = serde_json::to_string_pretty(reports).expect("reports serialize");
            out.push('\n');
        }
        Format::Md => {
            let header = [
                "Impl",
                "P",
                "C",
                "Throughput (items/s)",
                "Avg Enq",
                "P99 Enq",
                "Avg Deq",
                "P99 Deq",
                "Filtered",
                "Retention",
            ];
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let align = ["---", "--:", "--:", "--:", "--:", "--:", "--:", "--:", "--:", "--:"];
            let _ = writeln!(out, "|{}|", align.join("|"));
            for r in reports {
                let mut c = cells(r);
                if c[9].is_empty() {
                    c[9] = "-".to_owned();
                }
                let _ = writeln!(out, "| {} |", c.join(" | "));
            }
        }
    }
    out
}

/// Writes to `path`, or standard output when there is none.
pub fn write_report(reports: &[BenchReport], format: Format, path: Option<&Path>) -> Result<(), BenchError> {
    let text = emit_report(reports, format);
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}
