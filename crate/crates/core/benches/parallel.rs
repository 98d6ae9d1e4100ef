use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hypwalk::group::DEFAULT_CAP;
use hypwalk::walk::{entropy_escape_sequences, monte_carlo_escape, SparseDistribution, DEFAULT_PRUNE_EPS};
use hypwalk::{Exec, Family, Group, StepMeasure};
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn f2_biased() -> StepMeasure {
    StepMeasure::uniform(Group::new(Family::Free { rank: 2 }).unwrap())
        .reweighted(&[0.4, 0.1, 0.3, 0.2])
        .unwrap()
}

fn convolution(c: &mut Criterion) {
    let p = f2_biased();
    // Support of about 3^9 words before the timed step.
    let mut d = SparseDistribution::delta_e(p.group());
    for _ in 0..9 {
        d = d.convolve(&p, 0.0, DEFAULT_CAP, Exec::Sequential).unwrap();
    }
    let mut group = c.benchmark_group("convolve");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(d.convolve(&p, 0.0, DEFAULT_CAP, exec).unwrap()))
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let p = f2_biased();
    let mut group = c.benchmark_group("monte_carlo");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(monte_carlo_escape(&p, 100, 20_000, 7, exec)))
        });
    }
    group.finish();
}

fn lumped(c: &mut Criterion) {
    let p = StepMeasure::uniform(Group::new(Family::Free { rank: 2 }).unwrap());
    let mut group = c.benchmark_group("lumped");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(entropy_escape_sequences(&p, 40, DEFAULT_PRUNE_EPS, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, convolution, monte_carlo, lumped);
criterion_main!(benches);
