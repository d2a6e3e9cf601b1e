//! Group advantages and the clipped-surrogate objective with its analytic
//! gradient for the linear-softmax policy.

use super::policy::{features, log_softmax, softmax, PolicyParams, PolicySnapshot};
use crate::trajectory::{Observation, Step};
use crate::Result;

/// Standardizes with the population variance and `norm_eps` inside the
/// square root. Constant inputs map to all zeros.
pub fn standardize(values: &[f64], norm_eps: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return vec![0.0; values.len()];
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = (var + norm_eps).sqrt();
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// `A_i = (g_i - mu) / sqrt(var + eps)` over one group.
pub fn group_advantages(rewards: &[f64], norm_eps: f64) -> Vec<f64> {
    standardize(rewards, norm_eps)
}

/// `exp(log pi_theta(a|o) - log pi_old(a|o))` for a recorded step.
pub fn ratio(params: &PolicyParams, old: &PolicySnapshot, step: &Step) -> Result<f64> {
    let x = features(&step.observation);
    let lp = params.log_probs(&x)?[step.action];
    let lo = old.params().log_probs(&x)?[step.action];
    Ok((lp - lo).exp())
}

pub fn clip(r: f64, eps: f64) -> f64 {
    r.clamp(1.0 - eps, 1.0 + eps)
}

/// `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn clipped_surrogate(r: f64, advantage: f64, eps: f64) -> f64 {
    (r * advantage).min(clip(r, eps) * advantage)
}

/// `d/dr` of [`clipped_surrogate`]: `A` on the unclipped branch, 0 on the
/// clipped one.
fn surrogate_slope(r: f64, advantage: f64, eps: f64) -> f64 {
    if r * advantage <= clip(r, eps) * advantage {
        advantage
    } else {
        0.0
    }
}

fn categorical_kl(p: &[f64], log_p: &[f64], log_q: &[f64]) -> f64 {
    p.iter()
        .zip(log_p.iter().zip(log_q))
        .map(|(pi, (lp, lq))| if *pi > 0.0 { pi * (lp - lq) } else { 0.0 })
        .sum()
}

/// `beta * mean_o KL(pi_theta(.|o) || pi_ref(.|o))`.
pub fn kl_regularizer(
    params: &PolicyParams,
    reference: &PolicySnapshot,
    observations: &[&Observation],
    beta: f64,
) -> Result<f64> {
    if observations.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for o in observations {
        let x = features(o);
        let lp = params.log_probs(&x)?;
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        total += categorical_kl(&p, &lp, &reference.params().log_probs(&x)?);
    }
    Ok(beta * (total / observations.len() as f64).max(0.0))
}

/// One flattened `(i, t)` term of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStep {
    pub features: Vec<f64>,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    /// `log pi_ref(. | o)`, fixed for the whole update.
    pub ref_log_probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveValue {
    /// Mean clipped surrogate over steps.
    pub surrogate: f64,
    /// Mean KL to the reference policy (not multiplied by beta).
    pub kl: f64,
    /// `surrogate - beta * kl`, the quantity being maximized.
    pub total: f64,
}

/// Value and gradient of `E[L_clip] - beta * E[KL]` with respect to the
/// flattened weights.
pub fn objective_and_gradient(
    params: &PolicyParams,
    batch: &[BatchStep],
    clip_eps: f64,
    beta: f64,
) -> Result<(ObjectiveValue, Vec<f64>)> {
    let a_count = params.action_count;
    let mut grad = vec![0.0; params.len()];
    if batch.is_empty() {
        return Ok((ObjectiveValue::default(), grad));
    }
    let n = batch.len() as f64;
    let (mut surrogate, mut kl_sum) = (0.0, 0.0);
    let mut g_logits = vec![0.0; a_count];
    for s in batch {
        let z = params.logits(&s.features)?;
        let p = softmax(&z);
        let log_p = log_softmax(&z);
        let r = (log_p[s.action] - s.old_log_prob).exp();
        surrogate += clipped_surrogate(r, s.advantage, clip_eps);
        let kl = categorical_kl(&p, &log_p, &s.ref_log_probs);
        kl_sum += kl;

        // d surrogate / d z_b = slope * r * (1[b = a] - p_b)
        let coef = surrogate_slope(r, s.advantage, clip_eps) * r;
        for b in 0..a_count {
            let onehot = if b == s.action { 1.0 } else { 0.0 };
            let d_surr = coef * (onehot - p[b]);
            // d KL / d z_b = p_b (log p_b - log q_b - KL)
            let d_kl = p[b] * (log_p[b] - s.ref_log_probs[b] - kl);
            g_logits[b] = (d_surr - beta * d_kl) / n;
        }
        for (f, &xf) in s.features.iter().enumerate() {
            if xf == 0.0 {
                continue;
            }
            for (g, gl) in grad[f * a_count..(f + 1) * a_count].iter_mut().zip(&g_logits) {
                *g += xf * gl;
            }
        }
    }
    let value = ObjectiveValue {
        surrogate: surrogate / n,
        kl: kl_sum / n,
        total: surrogate / n - beta * kl_sum / n,
    };
    Ok((value, grad))
}

pub fn objective(
    params: &PolicyParams,
    batch: &[BatchStep],
    clip_eps: f64,
    beta: f64,
) -> Result<ObjectiveValue> {
    objective_and_gradient(params, batch, clip_eps, beta).map(|(v, _)| v)
}
