use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hsicsa::hsic::{full_report, hsic_dense, hsic_streaming, ReportOptions};
use hsicsa::kernel::{centering_stats, AugmentedProductGram, DenseGram, OutputGram};
use hsicsa::models::ishigami;
use hsicsa::sampling::{uniform_sample, UniformBoxLaw};
use hsicsa::{CenteringStats, Execution, OutputSamples, ParameterBlock, SubsetSpec};

struct Fixture {
    blocks: Vec<ParameterBlock>,
    stats: Vec<CenteringStats>,
    y: OutputSamples,
    sigma: f64,
}

fn fixture(n: usize) -> Fixture {
    let x = uniform_sample(&UniformBoxLaw::cube(3, -PI, PI).unwrap(), n, 7);
    let names: Vec<String> = (1..=3).map(|i| format!("X{i}")).collect();
    let blocks = ParameterBlock::scalar_blocks(&x, &names).unwrap();
    let stats = blocks.iter().map(|b| centering_stats(b, Execution::Parallel)).collect();
    let y = OutputSamples::Scalar(x.row_iter().map(|r| ishigami(&[r[0], r[1], r[2]], 5.0, 0.1)).collect());
    let sigma = y.median_bandwidth(Execution::Parallel).unwrap();
    Fixture { blocks, stats, y, sigma }
}

fn streaming(c: &mut Criterion) {
    let mut g = c.benchmark_group("hsic_streaming");
    g.sample_size(10);
    for n in [500, 1000, 2000, 4000] {
        let f = fixture(n);
        let full = SubsetSpec::full(3);
        let k = AugmentedProductGram::new(&f.blocks, &f.stats, &full).unwrap();
        let l = OutputGram::new(&f.y, f.sigma).unwrap();
        for exec in [Execution::Sequential, Execution::Parallel] {
            g.bench_with_input(BenchmarkId::new(format!("{exec:?}"), n), &n, |b, _| {
                b.iter(|| hsic_streaming(&k, &l, exec).unwrap())
            });
        }
        if n <= 1000 {
            g.bench_with_input(BenchmarkId::new("dense", n), &n, |b, _| {
                b.iter(|| {
                    let km = DenseGram::from_source(&k).unwrap();
                    let lm = DenseGram::from_source(&l).unwrap();
                    hsic_dense(&km.matrix, &lm.matrix).unwrap()
                })
            });
        }
    }
    g.finish();
}

fn report(c: &mut Criterion) {
    let mut g = c.benchmark_group("full_report");
    g.sample_size(10);
    let f = fixture(2000);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let opts = ReportOptions { exec, ..Default::default() };
        g.bench_function(format!("{exec:?}/2000"), |b| b.iter(|| full_report(&f.blocks, &f.y, &[], &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, streaming, report);
criterion_main!(benches);
