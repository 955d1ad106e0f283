use std::path::PathBuf;

use cmpq_bench::{aggregate, emit_report, read_raw_samples, write_raw_samples, BenchReport, Format, Impl};
use cmpq_bench::samples::parse_raw_samples;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn fixture_reproduces_golden_reports() {
    let runs = read_raw_samples(&fixture("raw_samples.txt")).unwrap();
    assert_eq!(runs.len(), 12);
    let reports = aggregate(&runs);
    for (format, file) in [(Format::Csv, "golden.csv"), (Format::Json, "golden.json"), (Format::Md, "golden.md")] {
        let golden = std::fs::read_to_string(fixture(file)).unwrap();
        assert_eq!(emit_report(&reports, format), golden, "{file}");
    }
}

#[test]
fn raw_samples_round_trip() {
    let runs = read_raw_samples(&fixture("raw_samples.txt")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("raw.txt");
    write_raw_samples(&path, &runs).unwrap();
    assert_eq!(read_raw_samples(&path).unwrap(), runs);
}

#[test]
fn raw_samples_reject_bad_input() {
    assert!(parse_raw_samples("12\n").is_err());
    assert!(parse_raw_samples("# run impl=cmp producers=1\n").is_err());
    assert!(parse_raw_samples("# run impl=x producers=1 consumers=1 items=1 load=none elapsed_ns=1\n").is_err());
    let ok = "# run impl=locked producers=2 consumers=1 items=4 load=3 elapsed_ns=10\n# enq\n5\n# deq\n6\n7\n";
    let runs = parse_raw_samples(ok).unwrap();
    assert_eq!(runs[0].implementation, Impl::Locked);
    assert_eq!(runs[0].load, Some(3));
    assert_eq!(runs[0].deq_ns, vec![6, 7]);
}

fn report(imp: Impl, retention: Option<f64>) -> BenchReport {
    BenchReport {
        implementation: imp,
        producers: 2,
        consumers: 3,
        throughput: 1234567.8,
        avg_enq: 63.94,
        p99_enq: 111,
        avg_deq: 70.61,
        p99_deq: 74,
        filtered_fraction: 0.003,
        retention,
    }
}

#[test]
fn empty_list_is_header_only() {
    assert_eq!(
        emit_report(&[], Format::Csv),
        "impl,P,C,throughput,avg_enq,p99_enq,avg_deq,p99_deq,filtered_fraction,retention\n"
    );
    assert_eq!(emit_report(&[], Format::Md).lines().count(), 2);
    assert_eq!(emit_report(&[], Format::Json), "[]\n");
}

#[test]
fn one_report_one_row_of_ten() {
    let csv = emit_report(&[report(Impl::Cmp, Some(0.92))], Format::Csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1], "cmp,2,3,1234568,63.9,111,70.6,74,0.003000,0.9200");
    assert_eq!(lines[1].split(',').count(), 10);
    let md = emit_report(&[report(Impl::Locked, None)], Format::Md);
    assert_eq!(md.lines().nth(2).unwrap(), "| locked | 2 | 3 | 1234568 | 63.9 | 111 | 70.6 | 74 | 0.003000 | - |");
}

#[test]
fn json_columns_in_order() {
    let json = emit_report(&[report(Impl::Cmp, None)], Format::Json);
    let keys = ["\"impl\"", "\"P\"", "\"C\"", "\"throughput\"", "\"avg_enq\"", "\"p99_enq\"", "\"avg_deq\"", "\"p99_deq\"", "\"filtered_fraction\"", "\"retention\""];
    let pos: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}

proptest! {
    #[test]
    fn json_round_trips(
        throughput in 0.0f64..1e9, avg_enq in 0.0f64..1e6, avg_deq in 0.0f64..1e6,
        p99_enq in 0u64..1_000_000, p99_deq in 0u64..1_000_000,
        filtered_fraction in 0.0f64..=1.0, retention in prop::option::of(0.0f64..2.0),
        producers in 1usize..128, consumers in 1usize..128, locked in any::<bool>(),
    ) {
        let r = BenchReport {
            implementation: if locked { Impl::Locked } else { Impl::Cmp },
            producers, consumers, throughput, avg_enq, p99_enq, avg_deq, p99_deq, filtered_fraction, retention,
        };
        let text = emit_report(std::slice::from_ref(&r), Format::Json);
        let back: Vec<BenchReport> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, vec![r]);
    }
}
