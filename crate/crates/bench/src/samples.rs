//! Raw latency sample files: one duration in nanoseconds per line. `#`
//! lines carry the run configuration and mark where enqueue and dequeue
//! samples start.
//!
//! ```text
//! # cmpq-bench raw samples
//! # run impl=cmp producers=1 consumers=1 items=1000 load=none elapsed_ns=81234
//! # enq
//! 61
//! # deq
//! 70
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::config::BenchError;
use crate::run::RunSamples;

pub fn format_raw_samples(runs: &[RunSamples]) -> String {
    let mut out = String::from("# cmpq-bench raw samples\n");
    for r in runs {
        let load = r.load.map_or_else(|| "none".to_owned(), |n| n.to_string());
        let _ = writeln!(
            out,
            "# run impl={} producers={} consumers={} items={} load={} elapsed_ns={}",
            r.implementation, r.producers, r.consumers, r.items, load, r.elapsed_ns
        );
        out.push_str("# enq\n");
        for s in &r.enq_ns {
            let _ = writeln!(out, "{s}");
        }
        out.push_str("# deq\n");
        for s in &r.deq_ns {
            let _ = writeln!(out, "{s}");
        }
    }
    out
}

pub fn write_raw_samples(path: &Path, runs: &[RunSamples]) -> Result<(), BenchError> {
    std::fs::write(path, format_raw_samples(runs))?;
    Ok(())
}

enum Section {
    None,
    Enq,
    Deq,
}

fn parse_run(line: usize, fields: &str) -> Result<RunSamples, BenchError> {
    let err = |m: String| BenchError::Parse { line, message: m };
    let mut run = RunSamples {
        implementation: crate::Impl::Cmp,
        producers: 0,
        consumers: 0,
        items: 0,
        load: None,
        elapsed_ns: 0,
        enq_ns: Vec::new(),
        deq_ns: Vec::new(),
    };
    let mut seen = 0;
    for kv in fields.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("expected key=value, got {kv:?}")))?;
        let num = || v.parse::<u64>().map_err(|e| err(format!("{k}: {e}")));
        match k {
            "impl" => run.implementation = v.parse().map_err(|e: BenchError| err(e.to_string()))?,
            "producers" => run.producers = num()? as usize,
            "consumers" => run.consumers = num()? as usize,
            "items" => run.items = num()?,
            "load" if v == "none" => run.load = None,
            "load" => run.load = Some(num()? as u32),
            "elapsed_ns" => run.elapsed_ns = num()?,
            _ => return Err(err(format!("unknown key {k:?}"))),
        }
        seen += 1;
    }
    if seen != 6 {
        return Err(err("run header needs impl, producers, consumers, items, load and elapsed_ns".into()));
    }
    Ok(run)
}

pub fn parse_raw_samples(text: &str) -> Result<Vec<RunSamples>, BenchError> {
    let mut runs: Vec<RunSamples> = Vec::new();
    let mut section = Section::None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(c) = l.strip_prefix('#') {
            let c = c.trim();
            if let Some(fields) = c.strip_prefix("run ") {
                runs.push(parse_run(line, fields)?);
                section = Section::None;
            } else if c == "enq" {
                section = Section::Enq;
            } else if c == "deq" {
                section = Section::Deq;
            }
            continue;
        }
        let v: u64 = l.parse().map_err(|e| BenchError::Parse {
            line,
            message: format!("{e}"),
        })?;
        match (runs.last_mut(), &section) {
            (Some(r), Section::Enq) => r.enq_ns.push(v),
            (Some(r), Section::Deq) => r.deq_ns.push(v),
            _ => {
                return Err(BenchError::Parse {
                    line,
                    message: "sample outside an enq or deq section".into(),
                })
            }
        }
    }
    Ok(runs)
}

pub fn read_raw_samples(path: &Path) -> Result<Vec<RunSamples>, BenchError> {
    parse_raw_samples(&std::fs::read_to_string(path)?)
}
