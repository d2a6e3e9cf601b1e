use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srpo_core::bench::{mmd, spearman};
use srpo_core::env::{scripted_rollout, ScriptedBehavior, TaskSuite};
use srpo_core::optimize::{feature_dim, srpo_update, TrainerState};
use srpo_core::reward::dbscan::dbscan;
use srpo_core::rollout::sample_group;
use srpo_core::{Embedding, Encoder, EncoderSpec, OptimConfig, PolicyParams, ProgressRewardConfig};

fn points(n: usize, dim: usize, seed: u64) -> Vec<Embedding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Embedding((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())).collect()
}

fn clustering(c: &mut Criterion) {
    let pts = points(64, 16, 1);
    c.bench_function("dbscan 64x16", |b| b.iter(|| dbscan(&pts, 1.2, 2)));
}

fn encoding(c: &mut Criterion) {
    let suite = TaskSuite::default();
    let traj = scripted_rollout(&suite.tasks[0], &suite.env, ScriptedBehavior::Stalling, 0).unwrap();
    let enc = Encoder::new(EncoderSpec::default(), 8, 8).unwrap();
    let frames = traj.frames();
    c.bench_function("encode trajectory", |b| b.iter(|| enc.encode(&frames).unwrap()));
    c.bench_function("cumulative windows", |b| b.iter(|| enc.cumulative_window_embeddings(&frames).unwrap()));
}

fn training_step(c: &mut Criterion) {
    let suite = TaskSuite::default();
    let task = &suite.tasks[0];
    let enc = Encoder::new(EncoderSpec::default(), 8, 8).unwrap();
    let params = PolicyParams::zeros(feature_dim(8, 8), 6);
    let seeds: Vec<u64> = (0..8).collect();
    c.bench_function("sample group of 8", |b| b.iter(|| sample_group(task, &suite.env, &params, &seeds).unwrap()));
    let group = sample_group(task, &suite.env, &params, &seeds).unwrap();
    let (rcfg, optim) = (ProgressRewardConfig::default(), OptimConfig::default());
    c.bench_function("srpo update", |b| {
        b.iter_batched(
            || TrainerState::new(params.clone(), enc.clone()),
            |mut state| srpo_update(std::slice::from_ref(&group), &rcfg, &optim, &mut state).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let curve: Vec<f64> = (0..200).map(|_| rng.random()).collect();
    let (s, f): (Vec<f64>, Vec<f64>) = ((0..100).map(|_| rng.random()).collect(), (0..100).map(|_| rng.random()).collect());
    c.bench_function("spearman 200", |b| b.iter(|| spearman(&curve).unwrap()));
    c.bench_function("mmd 100x100", |b| b.iter(|| mmd(&s, &f).unwrap()));
}

criterion_group!(benches, clustering, encoding, training_step, metrics);
criterion_main!(benches);
