//! Sampling episodes from the policy: the rollout loop
//! `a_t ~ pi(. | o_t, l)`, `z_{t+1} ~ E(. | z_t, a_t)`, `o_t = O(z_t)`.

use rand::Rng as _;

use crate::env::{is_success, observe, Action, EnvConfig, Episode, TaskSpec};
use crate::optimize::{features, PolicyParams};
use crate::seed;
use crate::trajectory::{RolloutGroup, Step, Trajectory};
use crate::{Error, Result};

const ACTION_STREAM: u64 = 0x4143_5449_4f4e;

fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Runs one episode under `params`, recording `log pi(a_t | o_t)` for every
/// sampled action.
pub fn rollout_episode(task: &TaskSpec, cfg: &EnvConfig, params: &PolicyParams, seed: u64) -> Result<Trajectory> {
    if params.action_count != cfg.action_count() {
        return Err(Error::shape(cfg.action_count(), params.action_count));
    }
    let mut ep = Episode::start(task, cfg, seed)?;
    let mut rng = seed::stream(cfg.seed, &[ACTION_STREAM, seed]);
    let mut steps = Vec::with_capacity(cfg.horizon);
    while !ep.done(task, cfg) {
        let observation = observe(&ep.state);
        let log_p = params.log_probs(&features(&observation))?;
        let probs: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
        let a = sample_categorical(&probs, rng.random::<f64>());
        steps.push(Step {
            observation,
            action: a,
            old_log_prob: log_p[a].min(0.0),
        });
        ep.act(Action::from_index(a)?, cfg)?;
    }
    Ok(Trajectory {
        task_id: task.task_id.clone(),
        goal_text: task.goal_text.clone(),
        steps,
        terminal: observe(&ep.state),
        outcome: is_success(&ep.state, task),
        seed,
    })
}

/// `seeds.len()` rollouts of one task.
pub fn sample_group(task: &TaskSpec, cfg: &EnvConfig, params: &PolicyParams, seeds: &[u64]) -> Result<RolloutGroup> {
    let trajs = seeds
        .iter()
        .map(|&s| rollout_episode(task, cfg, params, s))
        .collect::<Result<Vec<_>>>()?;
    RolloutGroup::new(task.task_id.clone(), trajs)
}

/// Success rate over `episodes` sampled episodes per task, seeded from
/// `base_seed` so that every call with the same arguments sees the same
/// initial states and noise.
pub fn evaluate(tasks: &[TaskSpec], cfg: &EnvConfig, params: &PolicyParams, episodes: usize, base_seed: u64) -> Result<f64> {
    if tasks.is_empty() || episodes == 0 {
        return Err(Error::Config("evaluation needs at least one task and episode".into()));
    }
    let mut wins = 0usize;
    for (k, task) in tasks.iter().enumerate() {
        for e in 0..episodes {
            let s = seed::derive(base_seed, &[0x4556_414c, k as u64, e as u64]);
            wins += usize::from(rollout_episode(task, cfg, params, s)?.outcome);
        }
    }
    Ok(wins as f64 / (tasks.len() * episodes) as f64)
}
