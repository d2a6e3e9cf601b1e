//! Policy representation and the three training updates.
//!
//! - [`srpo_update`]: shaped latent-progress rewards, group-standardized.
//! - [`grpo_update`]: the same pipeline on binary outcome rewards.
//! - [`awr_offline_update`]: advantage-weighted regression on per-step
//!   progress increments from a stored dataset.

mod awr;
mod objective;
mod policy;
mod update;

pub use awr::{awr_batch, awr_offline_update, awr_weight, behavior_cloning, step_progress, AwrBatch, AwrConfig};
pub use objective::{
    clip, clipped_surrogate, group_advantages, kl_regularizer, objective, objective_and_gradient,
    ratio, standardize, BatchStep, ObjectiveValue,
};
pub use policy::{
    action_distribution, feature_dim, features, log_softmax, softmax, PolicyParams, PolicySnapshot,
};
pub use update::{
    grpo_update, srpo_update, update_with_rewards, GroupReport, TrainerState, UpdateDiagnostics,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub group_size: usize,
    pub epochs_per_batch: usize,
    /// Added to the variance before the square root when standardizing.
    pub norm_eps: f64,
    /// Rescale the gradient to at most this norm.
    pub max_grad_norm: Option<f64>,
    pub awr: AwrConfig,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.5,
            clip_eps: 0.2,
            kl_beta: 0.001,
            group_size: 8,
            epochs_per_batch: 4,
            norm_eps: 1e-8,
            max_grad_norm: None,
            awr: AwrConfig::default(),
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(self.kl_beta >= 0.0) {
            return bad("kl_beta must be non-negative");
        }
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if self.epochs_per_batch == 0 {
            return bad("epochs_per_batch must be at least 1");
        }
        if !(self.norm_eps > 0.0) {
            return bad("norm_eps must be positive");
        }
        if self.max_grad_norm.is_some_and(|g| !(g > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        self.awr.validate()
    }
}

/// `params += lr * grad`, after optional norm clipping.
pub(crate) fn ascend(params: &mut PolicyParams, grad: &[f64], cfg: &OptimConfig) {
    let mut scale = cfg.learning_rate;
    if let Some(max) = cfg.max_grad_norm {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > max {
            scale *= max / norm;
        }
    }
    for (w, g) in params.weights.iter_mut().zip(grad) {
        *w += scale * g;
    }
}
