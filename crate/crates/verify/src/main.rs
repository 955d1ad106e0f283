use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cmpq_verify::scenarios::{
    bounded_reclamation_run, check_scenario, force_recycle_scenario, intentional_uaf,
    linearizability_scenarios, StallParams,
};
use cmpq_verify::stress::{mpmc_stress, poison_stress_config, StressConfig};
use cmpq_verify::{audit_reclamation_log, ExploreConfig, ExploreMode, Verdict};

#[derive(Parser)]
#[command(name = "cmpq-verify", about = "Correctness harness for the CMP queue")]
struct Cli {
    /// Also write failure witnesses to this file.
    #[arg(long, global = true)]
    witness_out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Reduced,
    Exhaustive,
    Random,
}

#[derive(Subcommand)]
enum Cmd {
    /// Explore the small linearizability scenarios.
    Lin {
        #[arg(long, value_enum, default_value = "reduced")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
    },
    /// Cursor recycling scenario.
    Recycle,
    /// Seeded runs with a consumer stalled after its claim.
    Stall {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 256)]
        window: u64,
        #[arg(long, default_value_t = 64)]
        trigger: u64,
        #[arg(long, default_value_t = 8)]
        min_batch: usize,
    },
    /// Use-after-reclaim negative control; needs a debug build.
    Uaf,
    /// Multi-threaded run with conservation and reclamation audits.
    Stress {
        #[arg(long, default_value_t = 8)]
        producers: usize,
        #[arg(long, default_value_t = 8)]
        consumers: usize,
        #[arg(long, default_value_t = 1_000_000)]
        items: u64,
        #[arg(long)]
        window: Option<u64>,
        /// Small fixed pool for heavy slot reuse.
        #[arg(long)]
        recycle: bool,
        #[arg(long)]
        sample_hz: Option<u32>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut witnesses = Vec::new();
    let ok = match cli.cmd {
        Cmd::Lin { mode, seed, runs } => {
            let mode = match mode {
                Mode::Reduced => ExploreMode::Reduced,
                Mode::Exhaustive => ExploreMode::Exhaustive,
                Mode::Random => ExploreMode::Random { seed, runs },
            };
            let mut ok = true;
            for s in linearizability_scenarios() {
                let r = check_scenario(&s, &ExploreConfig::mode(mode), 3);
                println!(
                    "{:<8} executions={} complete={} histories={} failing={}",
                    r.scenario,
                    r.exploration.executions,
                    r.exploration.complete,
                    r.distinct_histories,
                    r.failed_executions
                );
                ok &= r.failed_executions == 0;
                witnesses.extend(r.failures.iter().map(|f| format!("[{}] {f}", r.scenario)));
            }
            ok
        }
        Cmd::Recycle => {
            let r = force_recycle_scenario();
            println!(
                "executions={} shape_formed={} refused={} false_advances={}",
                r.exploration.executions, r.shape_formed, r.refused, r.false_advances
            );
            match r.verdict() {
                Verdict::Pass => true,
                Verdict::Fail(w) => {
                    witnesses.push(w);
                    false
                }
            }
        }
        Cmd::Stall {
            seeds,
            window,
            trigger,
            min_batch,
        } => {
            let params = StallParams {
                window,
                trigger_period: trigger,
                min_batch,
                ..StallParams::default()
            };
            let mut passed = 0;
            for seed in 0..seeds {
                let r = bounded_reclamation_run(seed, params);
                if r.passed() {
                    passed += 1;
                } else {
                    witnesses.push(format!("seed {seed}: {r:?}"));
                }
            }
            println!("{passed}/{seeds} seeded runs within the bound");
            passed == seeds
        }
        Cmd::Uaf => {
            if !cfg!(debug_assertions) {
                eprintln!("poison tracking is compiled out of release builds");
                return ExitCode::from(2);
            }
            let r = intentional_uaf();
            println!(
                "poison_violations={} stalled_result={:?}",
                r.poison_violations, r.stalled_result
            );
            if r.poison_violations != 1 {
                witnesses.push(r.execution.trace.to_string());
            }
            r.poison_violations == 1
        }
        Cmd::Stress {
            producers,
            consumers,
            items,
            window,
            recycle,
            sample_hz,
        } => {
            let mut cfg = if recycle {
                StressConfig {
                    producers,
                    consumers,
                    items,
                    ..poison_stress_config()
                }
            } else {
                StressConfig::new(producers, consumers, items)
            };
            if let Some(w) = window {
                cfg.queue.window_size = w;
                cfg.queue.min_window = cfg.queue.min_window.min(w);
            }
            cfg.queue.log_reclamation = true;
            cfg.sample_hz = sample_hz;
            let r = mpmc_stress(cfg);
            let audit = audit_reclamation_log(&r.reclaim_log);
            println!(
                "dequeued={}/{} duplicates={} lost={} order_violations={} elapsed={:.3}s",
                r.dequeued,
                r.enqueued,
                r.duplicates,
                r.lost,
                r.order_violations,
                r.elapsed.as_secs_f64()
            );
            println!(
                "freed={} abandoned={} audit={} poison_violations={} clobbered_links={} frontier_samples={} monotone={}",
                r.reclaim_log.len(),
                r.stats.abandoned_payloads,
                if audit.is_pass() { "PASS" } else { "FAIL" },
                r.stats.pool.poison_violations,
                r.stats.pool.clobbered_links,
                r.frontier_samples.len(),
                r.frontier_monotone()
            );
            if let Some(w) = audit.witness() {
                witnesses.push(w.to_string());
            }
            r.conserved()
                && r.order_violations == 0
                && audit.is_pass()
                && r.stats.pool.poison_violations == 0
                && r.frontier_monotone()
        }
    };
    if !witnesses.is_empty() {
        let text = witnesses.join("\n\n");
        println!("{text}");
        if let Some(path) = &cli.witness_out {
            if let Err(e) = fs::write(path, &text) {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
