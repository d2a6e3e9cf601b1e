use srpo_core::encoder::window_ends;
use srpo_core::env::{scripted_rollout, ScriptedBehavior, TaskSuite};
use srpo_core::optimize::{awr_batch, awr_offline_update, awr_weight, behavior_cloning, feature_dim, features, AwrConfig};
use srpo_core::reward::progress_curve;
use srpo_core::trajectory::StoreHeader;
use srpo_core::{
    Encoder, EncoderKind, EncoderSpec, Error, OptimConfig, PolicyParams, ProgressRewardConfig, Step, TemporalPool,
    Trajectory, TrajectoryStore,
};

fn demos(behavior: ScriptedBehavior, n: u64) -> (TaskSuite, Vec<Trajectory>) {
    let suite = TaskSuite::default();
    let t = (0..n)
        .map(|i| scripted_rollout(&suite.tasks[0], &suite.env, behavior, i).unwrap())
        .collect();
    (suite, t)
}

#[test]
fn store_round_trip() {
    let (suite, mut trajs) = demos(ScriptedBehavior::Distracted, 3);
    trajs.extend(demos(ScriptedBehavior::Optimal, 2).1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demos.store");
    let header = StoreHeader { grid_h: suite.env.grid_h, grid_w: suite.env.grid_w, action_count: suite.env.action_count() };
    let mut store = TrajectoryStore::create(&path, header).unwrap();
    store.append_all(&trajs).unwrap();
    let reopened = TrajectoryStore::open(&path).unwrap();
    assert_eq!(reopened.header(), header);
    assert_eq!(reopened.load().unwrap(), trajs);
    assert_eq!(reopened.len().unwrap(), 5);
}

#[test]
fn store_rejects_mismatched_header() {
    let (suite, trajs) = demos(ScriptedBehavior::Optimal, 1);
    let dir = tempfile::tempdir().unwrap();
    let header = StoreHeader { grid_h: suite.env.grid_h + 1, grid_w: suite.env.grid_w, action_count: suite.env.action_count() };
    let mut store = TrajectoryStore::create(dir.path().join("x.store"), header).unwrap();
    assert!(store.append(&trajs[0]).is_err());
}

#[test]
fn random_projection_is_linear_in_the_frame() {
    let (suite, trajs) = demos(ScriptedBehavior::Optimal, 1);
    let spec = EncoderSpec { kind: EncoderKind::RandomProjection, dim: 6, pool: TemporalPool::Last, ..EncoderSpec::default() };
    let enc = Encoder::new(spec.clone(), suite.env.grid_h, suite.env.grid_w).unwrap();
    let frame = &trajs[0].steps[3].observation;
    let got = enc.encode(&[frame]).unwrap();
    let p = frame.grid.len();
    for (k, v) in got.as_slice().iter().enumerate() {
        let want: f64 = enc.projection()[k * p..(k + 1) * p].iter().zip(&frame.grid).map(|(w, x)| w * x).sum();
        assert!((v - want).abs() < 1e-12);
    }
    // Mean pooling of two frames is the mean of their projections.
    let mean_spec = EncoderSpec { pool: TemporalPool::Mean, ..spec };
    let mean_enc = Encoder::new(mean_spec, suite.env.grid_h, suite.env.grid_w).unwrap();
    let (a, b) = (&trajs[0].steps[0].observation, &trajs[0].steps[5].observation);
    let both = mean_enc.encode(&[a, b]).unwrap();
    let (ea, eb) = (mean_enc.encode(&[a]).unwrap(), mean_enc.encode(&[b]).unwrap());
    for ((m, x), y) in both.as_slice().iter().zip(ea.as_slice()).zip(eb.as_slice()) {
        assert!((m - 0.5 * (x + y)).abs() < 1e-12);
    }
}

#[test]
fn encoder_is_deterministic_per_seed() {
    let spec = EncoderSpec::default();
    let a = Encoder::new(spec.clone(), 8, 8).unwrap();
    let b = Encoder::new(spec.clone(), 8, 8).unwrap();
    let c = Encoder::new(EncoderSpec { seed: spec.seed + 1, ..spec }, 8, 8).unwrap();
    assert_eq!(a.projection(), b.projection());
    assert_ne!(a.projection(), c.projection());
}

#[test]
fn windows_grow_by_one_frame() {
    assert_eq!(window_ends(0), Vec::<usize>::new());
    assert_eq!(window_ends(5), vec![4]);
    assert_eq!(window_ends(11), vec![10]);
    assert_eq!(window_ends(12), vec![10]);
    assert_eq!(window_ends(15), vec![10, 11, 12, 13]);
}

#[test]
fn window_embeddings_depend_only_on_their_prefix() {
    let (suite, trajs) = demos(ScriptedBehavior::Stalling, 1);
    let enc = Encoder::new(EncoderSpec::default(), suite.env.grid_h, suite.env.grid_w).unwrap();
    let frames = trajs[0].frames();
    assert!(frames.len() >= 16, "stalling episodes run long");
    let full = enc.cumulative_window_embeddings(&frames).unwrap();
    let cut = enc.cumulative_window_embeddings(&frames[..frames.len() - 3]).unwrap();
    assert_eq!(&full[..cut.len()], &cut[..]);
}

#[test]
fn success_curves_cover_every_window() {
    let (suite, trajs) = demos(ScriptedBehavior::Optimal, 1);
    let enc = Encoder::new(EncoderSpec::default(), suite.env.grid_h, suite.env.grid_w).unwrap();
    let reference = srpo_core::reward::build_reference(
        vec![enc.encode_trajectory(&trajs[0]).unwrap()],
        &ProgressRewardConfig::default().cluster,
        srpo_core::reward::CenterMode::Centroid,
        srpo_core::reward::ReferenceSource::ExternalFixed,
    );
    let c = progress_curve(&trajs[0], &reference, &enc).unwrap();
    assert!(c.values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(c.values.len(), window_ends(trajs[0].len() + 1).len());
}

fn still_trajectory(template: &Trajectory, n: usize) -> Trajectory {
    let obs = template.steps[0].observation.clone();
    Trajectory {
        task_id: template.task_id.clone(),
        goal_text: template.goal_text.clone(),
        steps: (0..n).map(|i| Step { observation: obs.clone(), action: i % 4, old_log_prob: 0.0 }).collect(),
        terminal: obs,
        outcome: false,
        seed: 99,
    }
}

#[test]
fn awr_advantages_are_standardized() {
    let (suite, mut trajs) = demos(ScriptedBehavior::Optimal, 2);
    trajs.extend(demos(ScriptedBehavior::Distracted, 4).1);
    let enc = Encoder::new(EncoderSpec::default(), suite.env.grid_h, suite.env.grid_w).unwrap();
    let b = awr_batch(&trajs, None, &enc, &ProgressRewardConfig::default(), &OptimConfig::default()).unwrap();
    let n = b.advantages.len() as f64;
    let mean = b.advantages.iter().sum::<f64>() / n;
    let std = (b.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() <= 1e-6);
    assert!((std - 1.0).abs() <= 1e-3);
    assert_eq!(b.actions.len(), trajs.iter().map(|t| t.len()).sum::<usize>());
    let cap = OptimConfig::default().awr.weight_cap;
    assert!(b.weights.iter().all(|&w| w > 0.0 && w <= cap));
}

#[test]
fn flat_trajectories_get_uniform_weights() {
    let (suite, ok) = demos(ScriptedBehavior::Optimal, 1);
    let enc = Encoder::new(EncoderSpec::default(), suite.env.grid_h, suite.env.grid_w).unwrap();
    let reference = srpo_core::reward::build_reference(
        vec![enc.encode_trajectory(&ok[0]).unwrap()],
        &ProgressRewardConfig::default().cluster,
        srpo_core::reward::CenterMode::Centroid,
        srpo_core::reward::ReferenceSource::ExternalFixed,
    );
    let still = vec![still_trajectory(&ok[0], 20), still_trajectory(&ok[0], 14)];
    let b = awr_batch(&still, Some(&reference), &enc, &ProgressRewardConfig::default(), &OptimConfig::default()).unwrap();
    assert_eq!(b.degenerate, vec![0, 1]);
    assert!(b.increments.iter().all(|&d| d == 0.0));
    assert!(b.weights.iter().all(|&w| w == b.weights[0]));
}

#[test]
fn awr_weight_cap_is_exact() {
    let cfg = AwrConfig { temperature: 0.5, weight_cap: 7.0 };
    assert_eq!(awr_weight(10.0, &cfg), 7.0);
    assert_eq!(awr_weight(0.0, &cfg), 1.0);
    assert!((awr_weight(0.5, &cfg) - 1f64.exp()).abs() < 1e-15);
}

#[test]
fn awr_without_reference_or_successes_is_an_error() {
    let (suite, fails) = demos(ScriptedBehavior::Distracted, 2);
    let enc = Encoder::new(EncoderSpec::default(), suite.env.grid_h, suite.env.grid_w).unwrap();
    let e = awr_batch(&fails, None, &enc, &ProgressRewardConfig::default(), &OptimConfig::default());
    assert!(matches!(e, Err(Error::Contract(_))));
}

#[test]
fn offline_awr_moves_toward_demonstrated_actions() {
    let (suite, mut trajs) = demos(ScriptedBehavior::Optimal, 2);
    trajs.extend(demos(ScriptedBehavior::Stalling, 2).1);
    let enc = Encoder::new(EncoderSpec::default(), suite.env.grid_h, suite.env.grid_w).unwrap();
    let fd = feature_dim(suite.env.grid_h, suite.env.grid_w);
    let start = PolicyParams::zeros(fd, suite.env.action_count());
    let optim = OptimConfig::default();
    let mut params = start.clone();
    for _ in 0..20 {
        params = awr_offline_update(&trajs, None, &enc, &ProgressRewardConfig::default(), &optim, &params).unwrap().0;
    }
    let loglik = |p: &PolicyParams| -> f64 {
        trajs[..2]
            .iter()
            .flat_map(|t| &t.steps)
            .map(|s| p.log_probs(&features(&s.observation)).unwrap()[s.action])
            .sum()
    };
    assert!(loglik(&params) > loglik(&start));
    assert!(params.weights.iter().all(|w| w.is_finite()));
    let bc = behavior_cloning(&trajs[..2], &optim, &start, 20).unwrap();
    assert!(loglik(&bc) > loglik(&start));
}
