//! Group-relative advantages, the clipped surrogate with KL penalty, and its
//! analytic gradient for a tabular softmax policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `A_i = (R_i − μ) / (σ + ε_stab)` with population mean and deviation.
pub fn group_advantages(rewards: &[f64], eps_stab: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + eps_stab;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Population variance, the spread of the centered advantage `R_i − μ`.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n
}

/// `min(ρ·A, clip(ρ, 1−ε, 1+ε)·A)`.
pub fn clipped_term(ratio: f64, advantage: f64, eps: f64) -> Result<f64> {
    if !(ratio > 0.0) {
        return Err(Error::NonPositiveRatio(ratio));
    }
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    Ok((ratio * advantage).min(clipped * advantage))
}

/// Exact `KL(p ‖ q)` for categorical distributions.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Support(format!("{} vs {} outcomes", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (k, (&pk, &qk)) in p.iter().zip(q).enumerate() {
        if pk > 0.0 {
            if !(qk > 0.0) {
                return Err(Error::Support(format!("q[{k}] = {qk} where p[{k}] = {pk}")));
            }
            kl += pk * (pk / qk).ln();
        }
    }
    Ok(kl)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Tabular policy: one logit vector per query class, plus the frozen
/// reference snapshot and the snapshot that sampled the current batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub logits: Vec<Vec<f64>>,
    pub reference: Vec<Vec<f64>>,
    pub old: Vec<Vec<f64>>,
}

impl PolicyState {
    pub fn uniform(classes: usize, actions: usize) -> Self {
        PolicyState::from_logits(vec![vec![0.0; actions]; classes])
    }

    /// Reference and old snapshots both start at `logits`.
    pub fn from_logits(logits: Vec<Vec<f64>>) -> Self {
        PolicyState {
            reference: logits.clone(),
            old: logits.clone(),
            logits,
        }
    }

    pub fn classes(&self) -> usize {
        self.logits.len()
    }

    pub fn actions(&self) -> usize {
        self.logits.first().map_or(0, Vec::len)
    }

    pub fn probs(&self, class: usize) -> Vec<f64> {
        softmax(&self.logits[class])
    }

    pub fn old_probs(&self, class: usize) -> Vec<f64> {
        softmax(&self.old[class])
    }

    pub fn reference_probs(&self, class: usize) -> Vec<f64> {
        softmax(&self.reference[class])
    }

    /// Makes the current parameters the sampling snapshot.
    pub fn refresh_old(&mut self) {
        self.old = self.logits.clone();
    }
}

/// `G` sampled actions for one query, with rewards, advantages and the
/// sampling log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryGroup {
    pub query_id: usize,
    pub class: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub old_log_probs: Vec<f64>,
}

/// The objective's knobs, split from the full training config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParams {
    pub clip_eps: f64,
    pub kl_coef: f64,
}

/// Mean clipped term over the group minus `β·KL(π_θ ‖ π_ref)` for its class.
pub fn surrogate_objective(
    group: &TrajectoryGroup,
    policy: &PolicyState,
    params: ObjectiveParams,
) -> Result<f64> {
    let log_p = log_softmax(&policy.logits[group.class]);
    let mut total = 0.0;
    for ((&a, &adv), &old) in group.actions.iter().zip(&group.advantages).zip(&group.old_log_probs) {
        total += clipped_term((log_p[a] - old).exp(), adv, params.clip_eps)?;
    }
    let kl = kl_categorical(&policy.probs(group.class), &policy.reference_probs(group.class))?;
    Ok(total / group.actions.len() as f64 - params.kl_coef * kl)
}

/// Mean of [`surrogate_objective`] over a batch of groups.
pub fn batch_objective(
    groups: &[TrajectoryGroup],
    policy: &PolicyState,
    params: ObjectiveParams,
) -> Result<f64> {
    let mut total = 0.0;
    for g in groups {
        total += surrogate_objective(g, policy, params)?;
    }
    Ok(total / groups.len().max(1) as f64)
}

/// Gradient of [`batch_objective`] with respect to every class's logits.
pub fn batch_gradient(
    groups: &[TrajectoryGroup],
    policy: &PolicyState,
    params: ObjectiveParams,
) -> Result<Vec<Vec<f64>>> {
    let mut grad = vec![vec![0.0; policy.actions()]; policy.classes()];
    let scale = 1.0 / groups.len().max(1) as f64;
    for g in groups {
        let c = g.class;
        let p = policy.probs(c);
        let log_p = log_softmax(&policy.logits[c]);
        let n = g.actions.len() as f64;
        for ((&a, &adv), &old) in g.actions.iter().zip(&g.advantages).zip(&g.old_log_probs) {
            let ratio = (log_p[a] - old).exp();
            let clipped = ratio.clamp(1.0 - params.clip_eps, 1.0 + params.clip_eps);
            // the clipped branch is constant in θ
            if ratio * adv <= clipped * adv {
                let w = scale * adv * ratio / n;
                for (k, gk) in grad[c].iter_mut().enumerate() {
                    *gk -= w * p[k];
                }
                grad[c][a] += w;
            }
        }
        let q = policy.reference_probs(c);
        let kl = kl_categorical(&p, &q)?;
        for (k, gk) in grad[c].iter_mut().enumerate() {
            if p[k] > 0.0 {
                *gk -= scale * params.kl_coef * p[k] * ((p[k] / q[k]).ln() - kl);
            }
        }
    }
    for (c, row) in grad.iter().enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(c));
        }
    }
    Ok(grad)
}

/// One gradient-ascent step on the logits. Snapshots are left untouched.
pub fn policy_step(
    policy: &PolicyState,
    groups: &[TrajectoryGroup],
    params: ObjectiveParams,
    learning_rate: f64,
) -> Result<PolicyState> {
    if groups.is_empty() {
        return Err(Error::Config("policy step needs at least one group".into()));
    }
    let grad = batch_gradient(groups, policy, params)?;
    let mut next = policy.clone();
    for (row, g) in next.logits.iter_mut().zip(&grad) {
        for (l, d) in row.iter_mut().zip(g) {
            *l += learning_rate * d;
        }
    }
    Ok(next)
}
