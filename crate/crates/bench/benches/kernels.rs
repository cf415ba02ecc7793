use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use weathernet::model::HeadKind;
use weathernet::nn::Mode;
use weathernet::optim::{Adam, AdamConfig};
use weathernet::{ClassifierSpec, Graph, Model, Task, Tensor};
use weathernet_bench::filled;

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [64usize, 256] {
        let a = filled::<f32>(&[n, n], 1);
        let b = filled::<f32>(&[n, n], 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let mut g = Graph::new();
                let x = g.constant(a.clone()).unwrap();
                let y = g.constant(b.clone()).unwrap();
                let z = g.matmul(x, y).unwrap();
                black_box(g.value(z)[0])
            })
        });
    }
    group.finish();
}

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv3x3");
    // (batch, in, out, size)
    for (n, ci, co, s) in [(32usize, 3usize, 16usize, 32usize), (32, 32, 64, 8)] {
        let x = filled::<f32>(&[n, ci, s, s], 3);
        let w = filled::<f32>(&[co, ci, 3, 3], 4);
        let label = format!("{n}x{ci}x{s}x{s}->{co}");
        group.bench_function(BenchmarkId::new("forward", &label), |bench| {
            bench.iter(|| {
                let mut g = Graph::new();
                let xv = g.constant(x.clone()).unwrap();
                let wv = g.constant(w.clone()).unwrap();
                let y = g.conv2d(xv, wv, None, 1, 1).unwrap();
                black_box(g.value(y)[0])
            })
        });
        group.bench_function(BenchmarkId::new("forward+backward", &label), |bench| {
            bench.iter(|| {
                let mut g = Graph::new();
                let xv = g.input(x.clone(), true).unwrap();
                let wv = g.input(w.clone(), true).unwrap();
                let y = g.conv2d(xv, wv, None, 1, 1).unwrap();
                let l = g.sum(y).unwrap();
                black_box(g.backward(l).unwrap().get(wv).unwrap()[0])
            })
        });
    }
    group.finish();
}

fn one_hot(n: usize, classes: usize) -> Tensor<f32> {
    let mut t = vec![0.0; n * classes];
    for i in 0..n {
        t[i * classes + i % classes] = 1.0;
    }
    Tensor::new(vec![n, classes], t).unwrap()
}

fn train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("desk");
    group.sample_size(20);
    let mut model = Model::<f32>::build(ClassifierSpec::desk(Task::NightNet), 0).unwrap();
    assert_eq!(model.spec.head, HeadKind::Softmax);
    let inputs = filled::<f32>(&[32, 3, 32, 32], 5).map(|v| v.abs());
    let target = one_hot(32, 3);
    let mut adam = Adam::new(AdamConfig::default()).unwrap();
    group.bench_function("train_step/batch32", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let x = g.input(inputs.clone(), false).unwrap();
            let logits = model
                .network
                .forward(&mut g, &model.params, x, Mode::Train)
                .unwrap();
            let p = g.softmax(logits, 1).unwrap();
            let loss = g.cross_entropy(p, target.clone()).unwrap();
            g.backward_into(loss, &mut model.params).unwrap();
            adam.step(&mut model.params).unwrap();
        })
    });
    let single = filled::<f32>(&[1, 3, 32, 32], 6).map(|v| v.abs());
    group.bench_function("inference/single", |bench| {
        bench.iter(|| black_box(model.probabilities(&single).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, matmul, conv, train_step);
criterion_main!(benches);
