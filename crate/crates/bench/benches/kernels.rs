use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedwind_bench::{client, round_robin_labels, uniform_points};
use fedwind_core::autosplit::silhouette;
use fedwind_core::fedcluster::{drs_init, partition_clients, AuditLog};
use fedwind_core::forecast::{local_train, ModelParams, TrainHyper, HORIZON, LAGS, N_INPUTS};
use fedwind_core::rng;
use std::hint::black_box;

fn bench_silhouette(c: &mut Criterion) {
    let mut g = c.benchmark_group("silhouette");
    for n in [100, 400, 1600] {
        let data = uniform_points(n, 6, 1);
        let labels = round_robin_labels(n, 4);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| silhouette(black_box(&data), black_box(&labels)).unwrap())
        });
    }
    g.finish();
}

fn bench_drs(c: &mut Criterion) {
    let data = uniform_points(1000, 6, 2);
    let mut g = c.benchmark_group("drs_init");
    for clients in [1, 5, 20] {
        g.bench_with_input(BenchmarkId::new("k8", clients), &clients, |b, &clients| {
            b.iter(|| {
                let mut r = rng::stream(3, &[]);
                let shards = partition_clients(data.rows(), clients, &mut r).unwrap();
                drs_init(&shards, &data, 8, &mut r, &mut AuditLog::disabled()).unwrap()
            })
        });
    }
    g.finish();
}

fn bench_lstm(c: &mut Criterion) {
    let hyper = TrainHyper {
        hidden_dim: 32,
        ..Default::default()
    };
    let params = ModelParams::init(hyper.dims(), 4);
    let x = vec![0.3; LAGS * N_INPUTS];
    let batch: Vec<(Vec<f64>, [f64; HORIZON])> = (0..32).map(|_| (x.clone(), [0.2; HORIZON])).collect();
    c.bench_function("lstm_forward_h32", |b| b.iter(|| params.forward(black_box(&x)).unwrap()));
    c.bench_function("lstm_backward_h32_b32", |b| b.iter(|| params.backward(black_box(&batch)).unwrap()));

    let data = client(600, 5);
    c.bench_function("local_epoch_h32", |b| {
        b.iter(|| local_train(&params, &data, &hyper, &mut rng::stream(6, &[])).unwrap())
    });
}

criterion_group!(benches, bench_silhouette, bench_drs, bench_lstm);
criterion_main!(benches);
