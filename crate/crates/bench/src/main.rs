use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cmpq_bench::{
    aggregate, read_raw_samples, run_matrix_with, run_single, write_raw_samples, write_report, BenchConfig,
    BenchError, Format, Impl,
};

#[derive(Parser)]
#[command(name = "bench", about = "Throughput and latency benchmark for the CMP queue")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Measure one or more implementations.
    Run(RunArgs),
    /// Rebuild a report from a raw samples file.
    Analyze {
        #[arg(long)]
        raw_samples: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Args)]
struct Output {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "md")]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    /// Repeat or comma-separate to compare implementations.
    #[arg(long = "impl", value_enum, value_delimiter = ',', required = true)]
    implementation: Vec<Impl>,
    #[arg(long)]
    producers: usize,
    #[arg(long)]
    consumers: usize,
    #[arg(long)]
    items: u64,
    /// Synthetic work-loop iterations per operation. Adds a loaded run next
    /// to each baseline and reports retention.
    #[arg(long)]
    load: Option<u32>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long)]
    round_robin: bool,
    #[arg(long)]
    pin: bool,
    #[arg(long)]
    window: Option<u64>,
    #[arg(long)]
    trigger: Option<u64>,
    #[arg(long)]
    min_batch: Option<usize>,
    /// Time one operation in every K.
    #[arg(long, default_value_t = 64)]
    sample_every: u32,
    #[arg(long, default_value_t = 1024)]
    warmup: u64,
    #[arg(long)]
    raw_samples: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

fn configs(a: &RunArgs) -> Vec<BenchConfig> {
    let mut out = Vec::new();
    for &imp in &a.implementation {
        let mut c = BenchConfig::new(imp, a.producers, a.consumers, a.items);
        c.repetitions = a.reps;
        c.pin = a.pin;
        c.latency_sample_rate = a.sample_every;
        c.warmup_items = a.warmup;
        if let Some(w) = a.window {
            c.queue.window_size = w;
            c.queue.min_window = c.queue.min_window.min(w);
        }
        if let Some(n) = a.trigger {
            c.queue.trigger_period = n;
        }
        if let Some(b) = a.min_batch {
            c.queue.min_batch_size = b;
        }
        out.push(c.clone());
        if a.load.is_some() {
            c.synthetic_load = a.load;
            out.push(c);
        }
    }
    out
}

fn run(a: &RunArgs) -> Result<(), BenchError> {
    let configs = configs(a);
    let mut raw = Vec::new();
    let reports = run_matrix_with(&configs, a.round_robin, |c| {
        let s = run_single(c)?;
        eprintln!(
            "{} {}P{}C load={:?}: {:.0} items/s",
            c.implementation,
            c.producers,
            c.consumers,
            c.synthetic_load,
            s.items as f64 * 1e9 / s.elapsed_ns as f64
        );
        raw.push(s.clone());
        Ok(s)
    });
    if let Some(path) = &a.raw_samples {
        write_raw_samples(path, &raw)?;
    }
    write_report(&reports?, a.output.format, a.output.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Analyze { raw_samples, output } => read_raw_samples(raw_samples)
            .and_then(|runs| write_report(&aggregate(&runs), output.format, output.out.as_deref())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::FAILURE
        }
    }
}
