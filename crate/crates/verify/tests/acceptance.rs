//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion that this host can evaluate fails.
//!
//! Criteria that call for a release build run the release binaries of
//! `cmpq-verify` and `bench`, built here on first use. The poison criterion
//! needs debug instrumentation and runs in this (debug) process.

use std::num::NonZeroU64;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use cmpq::{CmpQueue, QueueConfig};
use cmpq_bench::{aggregate, emit_report, read_raw_samples, Format};
use cmpq_verify::scenarios::{force_recycle_scenario, intentional_uaf};
use cmpq_verify::stress::{mpmc_stress, poison_stress_config};
use cmpq_verify::Verdict;

struct Outcome {
    pass: bool,
    detail: String,
    /// The host cannot meet the criterion's preconditions; reported but not
    /// counted towards the exit status.
    host_limited: bool,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
            host_limited: false,
        }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Outcome::new(false, detail)
    }
}

fn release_dir() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let status = Command::new(env!("CARGO"))
            .args(["build", "--release", "-q", "-p", "cmpq-verify", "-p", "cmpq-bench", "--bins"])
            .current_dir(env!("CARGO_MANIFEST_DIR"))
            .status()
            .expect("run cargo");
        assert!(status.success(), "release build failed");
        // <target>/<profile>/deps/<this test>
        let exe = std::env::current_exe().expect("test executable path");
        exe.ancestors().nth(3).expect("target dir").join("release")
    })
}

struct Run {
    ok: bool,
    stdout: String,
    elapsed: Duration,
}

fn run_release(bin: &str, args: &[&str]) -> Run {
    let path = release_dir().join(bin);
    let start = Instant::now();
    let out = Command::new(&path)
        .args(args)
        .output()
        .unwrap_or_else(|e| panic!("run {}: {e}", path.display()));
    Run {
        ok: out.status.success(),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        elapsed: start.elapsed(),
    }
}

/// Value of the first `key=value` token in `text`.
fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
}

fn num(text: &str, key: &str) -> Option<u64> {
    field(text, key)?.parse().ok()
}

/// (impl, throughput, retention) rows of a csv report.
fn csv_rows(csv: &str) -> Vec<(String, f64, Option<f64>)> {
    csv.lines()
        .skip(1)
        .filter_map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            Some((c[0].to_owned(), c.get(3)?.parse().ok()?, c.get(9).and_then(|r| r.parse().ok())))
        })
        .collect()
}

fn sequential_fifo() -> Outcome {
    const N: u64 = 1_000_000;
    let start = Instant::now();
    let q: CmpQueue<NonZeroU64> = CmpQueue::new(QueueConfig::default()).unwrap();
    for i in 1..=N {
        if q.enqueue(NonZeroU64::new(i).unwrap()).is_err() {
            return Outcome::fail(format!("enqueue of {i} failed"));
        }
    }
    for expect in 1..=N {
        match q.dequeue() {
            Some(v) if v.get() == expect => {}
            other => return Outcome::fail(format!("position {expect}: got {other:?}")),
        }
    }
    if let Some(v) = q.dequeue() {
        return Outcome::fail(format!("extra item {v} after {N}"));
    }
    let t = start.elapsed();
    Outcome::new(
        t < Duration::from_secs(5),
        format!("{N} ids out in order, queue empty after, {:.2}s (limit 5s)", t.as_secs_f64()),
    )
}

fn mpmc_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        run_release(
            "cmpq-verify",
            &["stress", "--producers", "8", "--consumers", "8", "--items", "1000000"],
        )
    })
}

fn mpmc_conservation() -> Outcome {
    let r = mpmc_run();
    let out = &r.stdout;
    let (Some(dup), Some(lost)) = (num(out, "duplicates"), num(out, "lost")) else {
        return Outcome::fail(format!("unparsable output: {out}"));
    };
    let dequeued = field(out, "dequeued").unwrap_or("?");
    let in_time = r.elapsed < Duration::from_secs(30);
    Outcome::new(
        dup == 0 && lost == 0 && dequeued == "1000000/1000000" && in_time,
        format!(
            "8P8C release, dequeued {dequeued}, duplicates {dup}, lost {lost}, {:.2}s (limit 30s)",
            r.elapsed.as_secs_f64()
        ),
    )
}

fn linearizability() -> Outcome {
    let r = run_release("cmpq-verify", &["lin", "--mode", "reduced"]);
    let mut failing = 0;
    let mut parts = Vec::new();
    for line in r.stdout.lines() {
        let name = line.split_whitespace().next().unwrap_or("?");
        failing += num(line, "failing").unwrap_or(1);
        parts.push(format!("{name} {} executions", num(line, "executions").unwrap_or(0)));
    }
    let in_time = r.elapsed < Duration::from_secs(120);
    Outcome::new(
        r.ok && parts.len() == 3 && failing == 0 && in_time,
        format!(
            "{}, {failing} failing, {:.1}s (limit 120s)",
            parts.join(", "),
            r.elapsed.as_secs_f64()
        ),
    )
}

fn stall_bound() -> Outcome {
    let r = run_release(
        "cmpq-verify",
        &["stall", "--seeds", "100", "--window", "256", "--trigger", "64", "--min-batch", "8"],
    );
    let summary = r.stdout.lines().find(|l| l.contains("seeded runs")).unwrap_or("no summary");
    let in_time = r.elapsed < Duration::from_secs(60);
    Outcome::new(
        r.ok && summary.starts_with("100/100") && in_time,
        format!("{summary}, {:.1}s (limit 60s)", r.elapsed.as_secs_f64()),
    )
}

fn audit() -> Outcome {
    let out = &mpmc_run().stdout;
    let freed = num(out, "freed").unwrap_or(0);
    let verdict = field(out, "audit").unwrap_or("missing");
    Outcome::new(
        verdict == "PASS" && freed > 0,
        format!("{freed} freed nodes checked over 2000000 ops, audit {verdict}"),
    )
}

fn aba_guard() -> Outcome {
    let r = force_recycle_scenario();
    let detail = format!(
        "{} executions, ABA shape formed in {}, refused {}, false advances {}",
        r.exploration.executions, r.shape_formed, r.refused, r.false_advances
    );
    match r.verdict() {
        Verdict::Pass => Outcome::new(r.exploration.complete, detail),
        Verdict::Fail(w) => Outcome::fail(format!("{detail}\n{w}")),
    }
}

fn poison() -> Outcome {
    if !cfg!(debug_assertions) {
        return Outcome::fail("poison tracking needs a debug build");
    }
    let cfg = poison_stress_config();
    let pool = cfg.queue.pool_capacity;
    let r = mpmc_stress(cfg);
    let uaf = intentional_uaf();
    let stress_v = r.stats.pool.poison_violations;
    Outcome::new(
        stress_v == 0 && uaf.poison_violations == 1 && r.conserved(),
        format!(
            "4P4C 100000 items on a {pool}-slot pool: {stress_v} violations, {} reused slots; \
             intentional use-after-reclaim: {} violation",
            r.stats.pool.recycled_total, uaf.poison_violations
        ),
    )
}

fn monotonicity() -> Outcome {
    let r = run_release(
        "cmpq-verify",
        &["stress", "--producers", "8", "--consumers", "8", "--items", "1000000", "--sample-hz", "10000"],
    );
    let out = &r.stdout;
    let samples = num(out, "frontier_samples").unwrap_or(0);
    let secs: f64 = field(out, "elapsed")
        .and_then(|s| s.trim_end_matches('s').parse().ok())
        .unwrap_or(f64::NAN);
    let monotone = field(out, "monotone") == Some("true");
    Outcome::new(
        monotone && samples > 1,
        format!(
            "{samples} frontier samples over {secs:.2}s ({:.0} Hz achieved, 10000 requested), non-decreasing: {monotone}",
            samples as f64 / secs
        ),
    )
}

fn golden() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../bench/tests/fixtures");
    let runs = match read_raw_samples(&dir.join("raw_samples.txt")) {
        Ok(r) => r,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let reports = aggregate(&runs);
    let mut mismatched = Vec::new();
    for (format, file) in [(Format::Csv, "golden.csv"), (Format::Json, "golden.json"), (Format::Md, "golden.md")] {
        let want = std::fs::read_to_string(dir.join(file)).unwrap_or_default();
        if emit_report(&reports, format) != want {
            mismatched.push(file);
        }
    }
    Outcome::new(
        mismatched.is_empty(),
        format!(
            "{} runs, {} report rows; csv/json/md byte-identical: {}",
            runs.len(),
            reports.len(),
            if mismatched.is_empty() { "yes".to_owned() } else { format!("no ({})", mismatched.join(", ")) }
        ),
    )
}

fn throughput_ratio(pc: &str) -> Result<f64, String> {
    let r = run_release(
        "bench",
        &[
            "run", "--impl", "cmp,locked", "--producers", pc, "--consumers", pc, "--items", "1000000",
            "--reps", "5", "--round-robin", "--format", "csv",
        ],
    );
    if !r.ok {
        return Err(format!("bench failed: {}", r.stdout));
    }
    let rows = csv_rows(&r.stdout);
    let get = |name: &str| rows.iter().find(|row| row.0 == name).map(|row| row.1);
    match (get("cmp"), get("locked")) {
        (Some(c), Some(l)) if l > 0.0 => Ok(c / l),
        _ => Err(format!("unparsable report: {}", r.stdout)),
    }
}

fn performance() -> Outcome {
    let cores = thread::available_parallelism().map_or(1, |n| n.get());
    let (r8, r1) = match (throughput_ratio("8"), throughput_ratio("1")) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::fail(e),
    };
    let mut o = Outcome::new(
        cores >= 8 && r8 >= 1.5,
        format!("8P8C cmp/locked = {r8:.2} (need >= 1.5), 1P1C = {r1:.2} (recorded), {cores} core(s)"),
    );
    if cores < 8 {
        o.host_limited = true;
        o.detail.push_str(", needs a host with >= 8 cores");
    }
    o
}

fn retention() -> Outcome {
    let r = run_release(
        "bench",
        &[
            "run", "--impl", "cmp,locked", "--producers", "1", "--consumers", "1", "--items", "1000000",
            "--load", "0", "--reps", "11", "--round-robin", "--format", "csv",
        ],
    );
    let values: Vec<(String, f64)> = csv_rows(&r.stdout)
        .into_iter()
        .filter_map(|(name, _, ret)| ret.map(|x| (name, x)))
        .collect();
    let pass = r.ok && values.len() == 2 && values.iter().all(|(_, x)| (0.9..=1.1).contains(x));
    let shown: Vec<String> = values.iter().map(|(n, x)| format!("{n} {x:.4}")).collect();
    Outcome::new(pass, format!("load 0, median of 11: {} (need 0.9..=1.1)", shown.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("sequential FIFO", sequential_fifo),
        ("MPMC conservation", mpmc_conservation),
        ("desk-scale linearizability", linearizability),
        ("bounded reclamation under stall", stall_bound),
        ("reclamation safety audit", audit),
        ("ABA cursor guard", aba_guard),
        ("poison / use-after-reclaim", poison),
        ("frontier monotonicity", monotonicity),
        ("analysis determinism", golden),
        ("performance trend", performance),
        ("retention harness", retention),
    ];
    let mut failed = 0;
    let mut limited = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{:>2}] {name}: {}", i + 1, o.detail);
        if !o.pass {
            if o.host_limited {
                limited += 1;
            } else {
                failed += 1;
            }
        }
    }
    let passed = criteria.len() - failed - limited;
    println!("{passed}/{} passed, {failed} failed, {limited} not attainable on this host", criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
