use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use diskapprox::atomize::atoms_from_moments;
use diskapprox::partition::{balanced_partition, Frame};
use diskapprox_bench::{cell_pieces, circle, mixed_rectangle, stress_run};

fn partition(c: &mut Criterion) {
    let mut g = c.benchmark_group("partition");
    for mass in [16u32, 256] {
        let rect = mixed_rectangle(mass, 3);
        g.bench_function(format!("mixed_mass_{mass}"), |b| b.iter(|| balanced_partition(black_box(&rect), Frame::Cartesian).unwrap()));
    }
    g.finish();
}

fn atomize(c: &mut Criterion) {
    let mut g = c.benchmark_group("atomize");
    for p in [2u32, 3, 4] {
        let pieces = cell_pieces(p, 11);
        g.bench_function(format!("cell_p{p}"), |b| b.iter(|| atoms_from_moments(black_box(&pieces), p, 2f64.sqrt()).unwrap()));
    }
    g.finish();
}

fn disk(c: &mut Criterion) {
    let mut g = c.benchmark_group("disk");
    g.sample_size(10);
    g.bench_function("stress_depth4_atoms", |b| b.iter(|| stress_run(4, false)));
    let run = stress_run(4, true);
    let model = run.model.as_ref().unwrap();
    let points = circle(0.51, 256);
    g.bench_function("field_256_points", |b| b.iter_batched(|| points.clone(), |p| model.eval_many(&p, false), BatchSize::SmallInput));
    g.finish();
}

criterion_group!(benches, partition, atomize, disk);
criterion_main!(benches);
