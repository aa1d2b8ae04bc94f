use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use pqr_bench::{desk_patches, score_grid};
use pqr_core::anchors::{lloyd_max, uniform_anchors, LloydMaxOptions};
use pqr_core::codec::{encode_batch, fit_reverse_map};
use pqr_core::harness::srcc;
use pqr_core::lab::{apply_distortion, generate_sources, DistortionKind, DistortionSpec};
use pqr_core::network::{train, Mode, Network, Targets, TrainConfig};
use pqr_core::{ArchConfig, Distance, EncoderConfig, Head, ScoreRange};

fn codec(c: &mut Criterion) {
    let ys = score_grid(201);
    let enc = EncoderConfig::new(64.0, uniform_anchors(ScoreRange::unit(), 5).unwrap(), Distance::SquaredEuclidean).unwrap();
    c.bench_function("encode_batch/201", |b| b.iter(|| encode_batch(black_box(&ys), &enc).unwrap()));
    let pqrs = encode_batch(&ys, &enc).unwrap();
    c.bench_function("fit_reverse_map/201", |b| {
        b.iter(|| fit_reverse_map(black_box(&pqrs), &ys, ScoreRange::unit(), 1e-6).unwrap())
    });
    let many = score_grid(5000);
    c.bench_function("lloyd_max/5000x5", |b| {
        b.iter(|| lloyd_max(black_box(&many), 5, ScoreRange::unit(), LloydMaxOptions::default()).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let a: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64).collect();
    let b: Vec<f64> = (0..1000).map(|i| ((i * 104729) % 997) as f64).collect();
    c.bench_function("srcc/1000", |bch| bch.iter(|| srcc(black_box(&a), &b).unwrap()));
}

fn distortions(c: &mut Criterion) {
    let img = generate_sources(1, 48, 32, 3).unwrap().remove(0).image;
    let mut g = c.benchmark_group("distort/48");
    for kind in DistortionKind::ALL {
        let spec = DistortionSpec::new(kind, 0.5, 1).unwrap();
        g.bench_function(kind.as_str(), |b| b.iter(|| apply_distortion(black_box(&img), &spec).unwrap()));
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let batch = desk_patches(32, 0);
    let net = Network::build(ArchConfig::desk(Head::Sqr), 1).unwrap();
    let inputs: Vec<f64> = (0..batch.len()).flat_map(|i| batch.patch(i).to_vec()).collect();
    c.bench_function("forward/desk/32", |b| b.iter(|| net.forward(black_box(&inputs), Mode::Eval).unwrap()));
    c.bench_function("loss_and_grad/desk_sqr/32", |b| {
        b.iter(|| {
            net.loss_and_grad(black_box(&inputs), Targets::Scalar(batch.scores()), Mode::Train { dropout_seed: 5 })
                .unwrap()
        })
    });

    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let enc = EncoderConfig::new(64.0, uniform_anchors(ScoreRange::unit(), 5).unwrap(), Distance::SquaredEuclidean).unwrap();
    let set = desk_patches(256, 1);
    let mut g = c.benchmark_group("train_epoch/256");
    g.sample_size(10);
    g.bench_function("pqr", |b| {
        b.iter_batched(
            || Network::build(ArchConfig::desk(Head::Pqr(5)), 2).unwrap(),
            |net| train(net, &set, &cfg, Some(&enc)).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.bench_function("sqr", |b| {
        b.iter_batched(
            || Network::build(ArchConfig::desk(Head::Sqr), 2).unwrap(),
            |net| train(net, &set, &cfg, None).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group!(benches, codec, metrics, distortions, network);
criterion_main!(benches);
