//! Whole-path benchmarks: per-term throughput of each formula preset and
//! end-to-end extraction at small positions.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use pibits_core::series::{extract, sum_series_range, tail_cutoff, ExtractionRequest};
use pibits_core::Formula;

fn bench_term_throughput(c: &mut Criterion) {
    let mut group = c.benchmark_group("terms");
    let n = 10_000_000;
    let p = 320;
    let span = 2_000u64;
    for formula in [Formula::bbp16(), Formula::bellard()] {
        let spec = formula.series()[0];
        group.throughput(Throughput::Elements(span));
        group.bench_with_input(
            BenchmarkId::from_parameter(formula.name().to_string()),
            &spec,
            |b, spec| {
                b.iter(|| {
                    black_box(sum_series_range(spec, n, 1000..1000 + span, p).unwrap());
                })
            },
        );
    }
    group.finish();
}

fn bench_extract(c: &mut Criterion) {
    let mut group = c.benchmark_group("extract");
    group.sample_size(10);
    for s in [1u64, 100_001] {
        for formula in [Formula::bbp16(), Formula::bellard()] {
            let request =
                ExtractionRequest::from_reported(formula.clone(), s, 256, 64).unwrap();
            let spec = request.formula.series()[0];
            let _ = tail_cutoff(&spec, request.exponent(), request.precision_bits);
            group.bench_with_input(
                BenchmarkId::new(formula.name().to_string(), s),
                &request,
                |b, request| b.iter(|| black_box(extract(request).unwrap())),
            );
        }
    }
    group.finish();
}

criterion_group!(extraction, bench_term_throughput, bench_extract);
criterion_main!(extraction);
