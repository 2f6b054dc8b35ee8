use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use greenlite_bench::random_tensor;
use greenlite_core::tensor::{conv2d, pool, ConvSpec, PoolKind};
use greenlite_core::Shape;
use std::hint::black_box;

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d");
    for &(cin, cout, hw, k, stride) in &[(3usize, 16usize, 320usize, 3usize, 2usize), (64, 64, 40, 3, 1), (256, 128, 10, 1, 1)] {
        let x = random_tensor(Shape::new(1, cin, hw, hw).unwrap(), 1);
        let w = random_tensor(Shape::new(cout, cin, k, k).unwrap(), 2).to_vec();
        let spec = ConvSpec::new(cin, cout, k, stride, k / 2, 1, w, vec![0.0; cout]).unwrap();
        let id = BenchmarkId::from_parameter(format!("{cin}x{hw}x{hw}->{cout} k{k} s{stride}"));
        g.bench_with_input(id, &x, |b, x| b.iter(|| conv2d(black_box(x), &spec).unwrap()));
    }
    g.finish();
}

fn maxpool(c: &mut Criterion) {
    let x = random_tensor(Shape::new(1, 128, 10, 10).unwrap(), 3);
    c.bench_function("maxpool k5 (sppf)", |b| b.iter(|| pool(black_box(&x), PoolKind::Max, 5, 1, 2).unwrap()));
}

criterion_group!(benches, conv, maxpool);
criterion_main!(benches);
