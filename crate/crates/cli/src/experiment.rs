//! One training run: warm start, then rollout, reward, update and
//! evaluation for the configured number of iterations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use srpo_core::env::{scripted_rollout, ScriptedBehavior, TaskSuite};
use srpo_core::optimize::{
    awr_offline_update, behavior_cloning, feature_dim, grpo_update, kl_regularizer, srpo_update,
    PolicyParams, TrainerState, UpdateDiagnostics,
};
use srpo_core::reward::{build_reference, ReferenceSource, SuccessReferenceSet};
use srpo_core::rollout::{evaluate, rollout_episode};
use srpo_core::trajectory::{RolloutGroup, Trajectory, TrajectoryStore};
use srpo_core::{seed, Encoder};

use crate::config::{Algorithm, RunConfig};
use crate::report::{write_metrics_header, write_metrics_row, MetricsRow};
use crate::{CliError, Result};

const WARM_STREAM: u64 = 0x5741_524d;
const ROLLOUT_STREAM: u64 = 0x524f_4c4c;

/// Inputs loaded once per command and shared by all of its runs.
#[derive(Debug, Clone)]
pub struct RunResources {
    pub suite: TaskSuite,
    pub encoder: Encoder,
    pub external_reference: Option<SuccessReferenceSet>,
    pub demos: Vec<Trajectory>,
}

impl RunResources {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let suite = cfg.load_suite()?;
        let encoder = Encoder::new(cfg.encoder_spec(), suite.env.grid_h, suite.env.grid_w)
            .map_err(CliError::from_core_config)?;
        let load_store = |path: &str| -> Result<Vec<Trajectory>> {
            let store = TrajectoryStore::open(path)?;
            let h = store.header();
            if (h.grid_h, h.grid_w) != (suite.env.grid_h, suite.env.grid_w) {
                return Err(CliError::Config(format!(
                    "store {path} holds {}x{} frames but the suite grid is {}x{}",
                    h.grid_h, h.grid_w, suite.env.grid_h, suite.env.grid_w
                )));
            }
            Ok(store.load()?)
        };
        let external_reference = if cfg.reference_store.is_empty() {
            None
        } else {
            let trajs = load_store(&cfg.reference_store)?;
            let successes = trajs
                .iter()
                .filter(|t| t.outcome)
                .map(|t| encoder.encode_trajectory(t))
                .collect::<srpo_core::Result<Vec<_>>>()?;
            if successes.is_empty() {
                return Err(CliError::Config(format!("reference store {} has no successes", cfg.reference_store)));
            }
            let rw = cfg.reward()?;
            Some(build_reference(successes, &rw.cluster, rw.center_mode, ReferenceSource::ExternalFixed))
        };
        let demos = if cfg.demo_store.is_empty() { Vec::new() } else { load_store(&cfg.demo_store)? };
        Ok(RunResources {
            suite,
            encoder,
            external_reference,
            demos,
        })
    }
}

/// Per-iteration outputs of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    pub params: PolicyParams,
    /// First iteration whose evaluation reached the threshold, or
    /// `iterations + 1`.
    pub steps_to_threshold: usize,
}

/// Initial policy: behavior cloning on scripted demonstrations, or zeros.
pub fn warm_start(cfg: &RunConfig, suite: &TaskSuite, run_seed: u64) -> Result<PolicyParams> {
    let zeros = PolicyParams::zeros(feature_dim(suite.env.grid_h, suite.env.grid_w), suite.env.action_count());
    if cfg.warm_start_demos == 0 || cfg.warm_start_steps == 0 {
        return Ok(zeros);
    }
    let mut demos = Vec::new();
    for (k, task) in suite.tasks.iter().enumerate() {
        for i in 0..cfg.warm_start_demos {
            let s = seed::derive(run_seed, &[WARM_STREAM, k as u64, i as u64]);
            demos.push(scripted_rollout(task, &suite.env, ScriptedBehavior::Optimal, s)?);
        }
    }
    let mut optim = cfg.optim();
    optim.learning_rate = cfg.warm_start_lr;
    optim.max_grad_norm = None;
    Ok(behavior_cloning(&demos, &optim, &zeros, cfg.warm_start_steps)?)
}

/// Rollout groups of iteration `it`, one per task. Members are sampled in
/// parallel; each has its own seed, so the result does not depend on
/// scheduling.
pub fn collect_groups(cfg: &RunConfig, suite: &TaskSuite, params: &PolicyParams, run_seed: u64, it: usize) -> Result<Vec<RolloutGroup>> {
    suite
        .tasks
        .iter()
        .enumerate()
        .map(|(k, task)| {
            let trajs = (0..cfg.group_size)
                .into_par_iter()
                .map(|m| {
                    let s = seed::derive(run_seed, &[ROLLOUT_STREAM, it as u64, k as u64, m as u64]);
                    rollout_episode(task, &suite.env, params, s)
                })
                .collect::<srpo_core::Result<Vec<_>>>()?;
            Ok(RolloutGroup::new(task.task_id.clone(), trajs)?)
        })
        .collect()
}

struct RunFiles {
    dir: PathBuf,
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
    diagnostics: BufWriter<File>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

impl RunFiles {
    fn open(dir: &Path, cfg: &RunConfig, run_seed: u64) -> Result<Self> {
        fs::create_dir_all(dir.join("checkpoints"))?;
        let mut echo = cfg.clone();
        echo.seeds = vec![run_seed];
        fs::write(dir.join("config.toml"), echo.to_toml())?;
        let mut metrics = create(&dir.join("metrics.csv"))?;
        write_metrics_header(&mut metrics)?;
        let mut timing = create(&dir.join("timing.csv"))?;
        writeln!(timing, "iteration,wall_time")?;
        let mut diagnostics = create(&dir.join("diagnostics.tsv"))?;
        writeln!(diagnostics, "iteration\ttask\tmember\toutcome\treward\tadvantage\tdistance\treference_digest")?;
        Ok(RunFiles {
            dir: dir.to_path_buf(),
            metrics,
            timing,
            diagnostics,
        })
    }

    fn record(&mut self, row: &MetricsRow, wall: f64, diag: Option<&UpdateDiagnostics>) -> Result<()> {
        write_metrics_row(&mut self.metrics, row)?;
        writeln!(self.timing, "{},{wall:.6}", row.iteration)?;
        if let Some(d) = diag {
            for g in &d.groups {
                for (m, (((ok, r), a), rd)) in g
                    .outcomes
                    .iter()
                    .zip(&g.rewards.rewards)
                    .zip(&g.advantages)
                    .zip(&g.rewards.diagnostics)
                    .enumerate()
                {
                    let dist = rd.distance.map_or_else(|| "-".to_string(), |x| x.to_string());
                    let digest = g.reference_digest.as_deref().unwrap_or("-");
                    writeln!(
                        self.diagnostics,
                        "{}\t{}\t{m}\t{}\t{r}\t{a}\t{dist}\t{digest}",
                        row.iteration,
                        g.task_id,
                        u8::from(*ok)
                    )?;
                }
            }
        }
        for w in [&mut self.metrics, &mut self.timing, &mut self.diagnostics] {
            w.flush()?;
        }
        Ok(())
    }

    fn checkpoint(&self, name: &str, params: &PolicyParams) -> Result<()> {
        Ok(params.save(self.dir.join("checkpoints").join(name))?)
    }
}

/// Runs `cfg.algorithm` for `cfg.iterations` iterations with `run_seed`.
/// When `dir` is given, outputs are written there as the run progresses,
/// so a failing run leaves its completed iterations behind.
pub fn train_run(cfg: &RunConfig, res: &RunResources, run_seed: u64, dir: Option<&Path>) -> Result<RunOutcome> {
    let mut files = dir.map(|d| RunFiles::open(d, cfg, run_seed)).transpose()?;
    let optim = cfg.optim();
    let reward_cfg = cfg.reward()?;
    let suite = &res.suite;
    let params = warm_start(cfg, suite, run_seed)?;
    let mut state = TrainerState::new(params, res.encoder.clone());
    state.external_reference = res.external_reference.clone();
    if cfg.algorithm == Algorithm::AwrOffline && res.demos.is_empty() {
        return Err(CliError::Config("awr-offline needs a non-empty demo_store".into()));
    }

    let mut rows = Vec::with_capacity(cfg.iterations);
    let mut steps_to_threshold = cfg.iterations + 1;
    for it in 1..=cfg.iterations {
        let start = Instant::now();
        let (mean_reward, mean_kl, diag) = match cfg.algorithm {
            Algorithm::Srpo | Algorithm::Grpo => {
                let groups = collect_groups(cfg, suite, &state.params, run_seed, it)?;
                let d = if cfg.algorithm == Algorithm::Srpo {
                    srpo_update(&groups, &reward_cfg, &optim, &mut state)?
                } else {
                    grpo_update(&groups, &optim, &mut state)?
                };
                (d.mean_reward, d.kl, Some(d))
            }
            Algorithm::AwrOffline => {
                let (next, batch) = awr_offline_update(
                    &res.demos,
                    res.external_reference.as_ref(),
                    &state.encoder,
                    &reward_cfg,
                    &optim,
                    &state.params,
                )?;
                state.params = next;
                let obs: Vec<_> = res.demos.iter().flat_map(|t| t.steps.iter().map(|s| &s.observation)).collect();
                let kl = kl_regularizer(&state.params, &state.reference_policy, &obs, 1.0)?;
                let mean_inc = batch.increments.iter().sum::<f64>() / batch.increments.len().max(1) as f64;
                (mean_inc, kl, None)
            }
        };
        let success_rate = evaluate(&suite.tasks, &suite.env, &state.params, cfg.eval_episodes, cfg.eval_seed)?;
        if success_rate >= cfg.threshold && steps_to_threshold > cfg.iterations {
            steps_to_threshold = it;
        }
        let row = MetricsRow {
            iteration: it,
            success_rate,
            mean_reward,
            mean_kl,
        };
        if let Some(f) = files.as_mut() {
            f.record(&row, start.elapsed().as_secs_f64(), diag.as_ref())?;
            if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 {
                f.checkpoint(&format!("iter-{it:05}.policy"), &state.params)?;
            }
        }
        rows.push(row);
    }
    if let Some(f) = &files {
        f.checkpoint("final.policy", &state.params)?;
    }
    Ok(RunOutcome {
        rows,
        params: state.params,
        steps_to_threshold,
    })
}
