//! Offline advantage-weighted regression on self-referential progress.
//!
//! Each stored trajectory gets a per-step progress value from its latent
//! progress curve. Increments `D_t = R_t - R_{t-1}` (with `D_0 = R_0`) are
//! standardized over every step of every trajectory, and the policy takes
//! weighted log-likelihood steps with weights `min(exp(A / tau), w_max)`.

use serde::{Deserialize, Serialize};

use super::objective::standardize;
use super::policy::{features, softmax, PolicyParams};
use super::{ascend, OptimConfig};
use crate::encoder::{window_ends, Embedding, Encoder};
use crate::reward::{build_reference, progress_curve, ProgressCurve, ProgressRewardConfig, ReferenceSource, SuccessReferenceSet};
use crate::trajectory::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AwrConfig {
    pub temperature: f64,
    pub weight_cap: f64,
}

impl Default for AwrConfig {
    fn default() -> Self {
        AwrConfig {
            temperature: 1.0,
            weight_cap: 20.0,
        }
    }
}

impl AwrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config("awr temperature must be positive".into()));
        }
        if !(self.weight_cap > 1.0) {
            return Err(Error::Config("awr weight cap must exceed 1".into()));
        }
        Ok(())
    }
}

pub fn awr_weight(advantage: f64, cfg: &AwrConfig) -> f64 {
    (advantage / cfg.temperature).exp().min(cfg.weight_cap)
}

/// Per-step progress `R_t` for a trajectory of `n_steps` actions. Step `t`
/// reads the window ending at frame `t + 1`, clamped to the available
/// windows.
pub fn step_progress(curve: &ProgressCurve, n_steps: usize) -> Vec<f64> {
    let ends = window_ends(n_steps + 1);
    let (first, last) = (ends[0], ends[ends.len() - 1]);
    (0..n_steps)
        .map(|t| curve.values[(t + 1).clamp(first, last) - first])
        .collect()
}

/// Flattened AWR training set.
#[derive(Debug, Clone, PartialEq)]
pub struct AwrBatch {
    pub features: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    /// Trajectory index of each step.
    pub trajectory: Vec<usize>,
    pub increments: Vec<f64>,
    pub advantages: Vec<f64>,
    pub weights: Vec<f64>,
    /// Trajectories whose curve was flat and so contribute zero increments.
    pub degenerate: Vec<usize>,
}

fn resolve_reference(
    trajs: &[Trajectory],
    reference: Option<&SuccessReferenceSet>,
    encoder: &Encoder,
    reward_cfg: &ProgressRewardConfig,
) -> Result<SuccessReferenceSet> {
    if let Some(r) = reference {
        if r.is_empty() {
            return Err(Error::Contract("AWR reference set is empty".into()));
        }
        return Ok(r.clone());
    }
    let successes: Vec<Embedding> = trajs
        .iter()
        .filter(|t| t.outcome)
        .map(|t| encoder.encode_trajectory(t))
        .collect::<Result<_>>()?;
    if successes.is_empty() {
        return Err(Error::Contract(
            "no successful trajectories to build an AWR reference from".into(),
        ));
    }
    Ok(build_reference(successes, &reward_cfg.cluster, reward_cfg.center_mode, ReferenceSource::ExternalFixed))
}

pub fn awr_batch(
    trajs: &[Trajectory],
    reference: Option<&SuccessReferenceSet>,
    encoder: &Encoder,
    reward_cfg: &ProgressRewardConfig,
    optim: &OptimConfig,
) -> Result<AwrBatch> {
    if trajs.is_empty() {
        return Err(Error::Contract("AWR needs a non-empty dataset".into()));
    }
    let reference = resolve_reference(trajs, reference, encoder, reward_cfg)?;
    let mut batch = AwrBatch {
        features: Vec::new(),
        actions: Vec::new(),
        trajectory: Vec::new(),
        increments: Vec::new(),
        advantages: Vec::new(),
        weights: Vec::new(),
        degenerate: Vec::new(),
    };
    for (i, t) in trajs.iter().enumerate() {
        let curve = progress_curve(t, &reference, encoder)?;
        if curve.degenerate {
            batch.degenerate.push(i);
            batch.increments.extend(std::iter::repeat_n(0.0, t.len()));
        } else {
            let r = step_progress(&curve, t.len());
            let mut prev = 0.0;
            for v in r {
                batch.increments.push(v - prev);
                prev = v;
            }
        }
        for s in &t.steps {
            batch.features.push(features(&s.observation));
            batch.actions.push(s.action);
            batch.trajectory.push(i);
        }
    }
    batch.advantages = standardize(&batch.increments, optim.norm_eps);
    batch.weights = batch.advantages.iter().map(|&a| awr_weight(a, &optim.awr)).collect();
    Ok(batch)
}

fn weighted_likelihood_gradient(params: &PolicyParams, batch: &AwrBatch) -> Result<Vec<f64>> {
    let a_count = params.action_count;
    let mut grad = vec![0.0; params.len()];
    let n = batch.actions.len() as f64;
    for ((x, &a), &w) in batch.features.iter().zip(&batch.actions).zip(&batch.weights) {
        let p = softmax(&params.logits(x)?);
        let g: Vec<f64> = (0..a_count)
            .map(|b| w * (f64::from(u8::from(b == a)) - p[b]) / n)
            .collect();
        for (f, &xf) in x.iter().enumerate() {
            if xf == 0.0 {
                continue;
            }
            for (gw, gb) in grad[f * a_count..(f + 1) * a_count].iter_mut().zip(&g) {
                *gw += xf * gb;
            }
        }
    }
    Ok(grad)
}

/// One offline update over the dataset; returns the new parameters and the
/// batch that produced them.
pub fn awr_offline_update(
    trajs: &[Trajectory],
    reference: Option<&SuccessReferenceSet>,
    encoder: &Encoder,
    reward_cfg: &ProgressRewardConfig,
    optim: &OptimConfig,
    params: &PolicyParams,
) -> Result<(PolicyParams, AwrBatch)> {
    optim.validate()?;
    let batch = awr_batch(trajs, reference, encoder, reward_cfg, optim)?;
    let mut next = params.clone();
    for _ in 0..optim.epochs_per_batch {
        let grad = weighted_likelihood_gradient(&next, &batch)?;
        ascend(&mut next, &grad, optim);
    }
    Ok((next, batch))
}

/// Plain behavior cloning: `steps` unit-weight likelihood ascent steps on
/// every stored transition.
pub fn behavior_cloning(trajs: &[Trajectory], optim: &OptimConfig, params: &PolicyParams, steps: usize) -> Result<PolicyParams> {
    let mut batch = AwrBatch {
        features: Vec::new(),
        actions: Vec::new(),
        trajectory: Vec::new(),
        increments: Vec::new(),
        advantages: Vec::new(),
        weights: Vec::new(),
        degenerate: Vec::new(),
    };
    for (i, t) in trajs.iter().enumerate() {
        for s in &t.steps {
            batch.features.push(features(&s.observation));
            batch.actions.push(s.action);
            batch.trajectory.push(i);
            batch.weights.push(1.0);
        }
    }
    let mut next = params.clone();
    for _ in 0..steps {
        let grad = weighted_likelihood_gradient(&next, &batch)?;
        ascend(&mut next, &grad, optim);
    }
    Ok(next)
}
