use super::objective::{group_advantages, objective_and_gradient, BatchStep};
use super::policy::{features, PolicyParams, PolicySnapshot};
use super::{ascend, OptimConfig};
use crate::encoder::{Embedding, Encoder};
use crate::reward::{
    build_reference, shape_rewards, ProgressRewardConfig, ReferenceSource, ShapedRewardVector,
    SuccessReferenceSet,
};
use crate::trajectory::RolloutGroup;
use crate::{Error, Result};

/// Everything an online update reads besides the batch.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub params: PolicyParams,
    /// `pi_ref`, captured before training starts.
    pub reference_policy: PolicySnapshot,
    pub encoder: Encoder,
    /// Frozen success reference for the external-fixed ablation.
    pub external_reference: Option<SuccessReferenceSet>,
}

impl TrainerState {
    pub fn new(params: PolicyParams, encoder: Encoder) -> Self {
        TrainerState {
            reference_policy: PolicySnapshot::capture(&params),
            params,
            encoder,
            external_reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub task_id: String,
    pub outcomes: Vec<bool>,
    pub rewards: ShapedRewardVector,
    pub advantages: Vec<f64>,
    /// Digest of the success reference used, when one was built or loaded.
    pub reference_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiagnostics {
    pub mean_reward: f64,
    pub mean_abs_advantage: f64,
    /// Mean KL to `pi_ref` after the update.
    pub kl: f64,
    pub success_rate: f64,
    pub groups: Vec<GroupReport>,
}

fn check_groups(groups: &[RolloutGroup]) -> Result<()> {
    for g in groups {
        if g.size() < 2 {
            return Err(Error::Contract(format!("group {} has fewer than 2 rollouts", g.task_id)));
        }
        for t in &g.trajectories {
            if let Some(s) = t.steps.iter().find(|s| !(s.old_log_prob.is_finite() && s.old_log_prob <= 0.0)) {
                return Err(Error::Contract(format!(
                    "group {}: trajectory {} lacks a valid stored old log-probability ({})",
                    g.task_id, t.seed, s.old_log_prob
                )));
            }
        }
    }
    Ok(())
}

/// SRPO step: embed every rollout, reward failures by latent distance to
/// the success reference, standardize per group and ascend the clipped
/// surrogate minus `beta * KL`.
pub fn srpo_update(
    groups: &[RolloutGroup],
    reward_cfg: &ProgressRewardConfig,
    optim: &OptimConfig,
    state: &mut TrainerState,
) -> Result<UpdateDiagnostics> {
    check_groups(groups)?;
    reward_cfg.validate()?;
    let mut rewards = Vec::with_capacity(groups.len());
    let mut digests = Vec::with_capacity(groups.len());
    for g in groups {
        let embeddings: Vec<Embedding> = g
            .trajectories
            .iter()
            .map(|t| state.encoder.encode_trajectory(t))
            .collect::<Result<_>>()?;
        let outcomes = g.outcomes();
        let reference = match reward_cfg.source {
            ReferenceSource::InBatch => {
                let successes = embeddings
                    .iter()
                    .zip(&outcomes)
                    .filter(|(_, ok)| **ok)
                    .map(|(e, _)| e.clone())
                    .collect();
                build_reference(successes, &reward_cfg.cluster, reward_cfg.center_mode, ReferenceSource::InBatch)
            }
            ReferenceSource::ExternalFixed => state
                .external_reference
                .clone()
                .ok_or_else(|| Error::Contract("external-fixed reference requested but none loaded".into()))?,
        };
        digests.push((!reference.is_empty()).then(|| reference.digest()));
        rewards.push(shape_rewards(&embeddings, &outcomes, &reference, reward_cfg)?);
    }
    let mut diag = update_with_rewards(groups, rewards, optim, state)?;
    for (g, d) in diag.groups.iter_mut().zip(digests) {
        g.reference_digest = d;
    }
    Ok(diag)
}

/// GRPO baseline: rewards are the binary outcomes.
pub fn grpo_update(
    groups: &[RolloutGroup],
    optim: &OptimConfig,
    state: &mut TrainerState,
) -> Result<UpdateDiagnostics> {
    check_groups(groups)?;
    let rewards = groups
        .iter()
        .map(|g| ShapedRewardVector {
            rewards: g.outcomes().iter().map(|&o| f64::from(u8::from(o))).collect(),
            diagnostics: vec![
                crate::reward::RewardDiagnostic { distance: None, nearest_center: None };
                g.size()
            ],
        })
        .collect();
    update_with_rewards(groups, rewards, optim, state)
}

/// Shared tail of both online updates: per-group advantages, then
/// `epochs_per_batch` gradient-ascent steps against the stored
/// `pi_theta_old` log-probabilities.
pub fn update_with_rewards(
    groups: &[RolloutGroup],
    rewards: Vec<ShapedRewardVector>,
    optim: &OptimConfig,
    state: &mut TrainerState,
) -> Result<UpdateDiagnostics> {
    check_groups(groups)?;
    optim.validate()?;
    if rewards.len() != groups.len() {
        return Err(Error::shape(groups.len(), rewards.len()));
    }
    let mut batch = Vec::new();
    let mut reports = Vec::with_capacity(groups.len());
    let reference = state.reference_policy.params();
    for (g, r) in groups.iter().zip(rewards) {
        if r.rewards.len() != g.size() {
            return Err(Error::shape(g.size(), r.rewards.len()));
        }
        let adv = group_advantages(&r.rewards, optim.norm_eps);
        for (t, &a) in g.trajectories.iter().zip(&adv) {
            for s in &t.steps {
                let x = features(&s.observation);
                batch.push(BatchStep {
                    ref_log_probs: reference.log_probs(&x)?,
                    features: x,
                    action: s.action,
                    old_log_prob: s.old_log_prob,
                    advantage: a,
                });
            }
        }
        reports.push(GroupReport {
            task_id: g.task_id.clone(),
            outcomes: g.outcomes(),
            rewards: r,
            advantages: adv,
            reference_digest: None,
        });
    }
    for _ in 0..optim.epochs_per_batch {
        let (_, grad) = objective_and_gradient(&state.params, &batch, optim.clip_eps, optim.kl_beta)?;
        ascend(&mut state.params, &grad, optim);
    }
    let (after, _) = objective_and_gradient(&state.params, &batch, optim.clip_eps, optim.kl_beta)?;

    let n_traj: usize = groups.iter().map(RolloutGroup::size).sum();
    let mean = |f: &dyn Fn(&GroupReport) -> f64| reports.iter().map(f).sum::<f64>() / n_traj as f64;
    Ok(UpdateDiagnostics {
        mean_reward: mean(&|g| g.rewards.rewards.iter().sum()),
        mean_abs_advantage: mean(&|g| g.advantages.iter().map(|a| a.abs()).sum()),
        kl: after.kl,
        success_rate: mean(&|g| g.outcomes.iter().filter(|o| **o).count() as f64),
        groups: reports,
    })
}
