//! Desk-scale GRPO training loop over the synthetic environment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::curriculum::{schedule_order, Strategy};
use super::env::{realize, sample_index, EnvConfig, SimQuery, TEMPLATE_COUNT};
use super::objective::{
    group_advantages, policy_step, population_variance, ObjectiveParams, PolicyState, TrajectoryGroup,
};
use crate::error::{Error, Result};
use crate::io::numbers::fmt_num;
use crate::model::ExecutionCase;
use crate::profiling::DEFAULT_PARTITION_THRESHOLD;
use crate::shaping::{composite_reward_with, RewardContext, RewardOptions, ShapingConfig};
use crate::structural::FailureProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Rollouts per query, `G`.
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_coef: f64,
    pub eps_stab: f64,
    pub learning_rate: f64,
    /// Policy updates (outer iterations).
    pub steps: u64,
    pub strategy: Strategy,
    pub seed: u64,
    /// Queries drawn from the stream per update.
    pub queries_per_step: usize,
    /// Ascent steps taken on each sampled batch before resampling.
    pub epochs_per_step: usize,
    /// Easy/hard cut for the two-stage curriculum.
    pub partition_threshold: f64,
    pub reward: RewardOptions,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            group_size: 8,
            clip_eps: 0.2,
            kl_coef: 0.01,
            eps_stab: 1e-8,
            learning_rate: 0.5,
            steps: 500,
            strategy: Strategy::EasyToHard,
            seed: 0,
            queries_per_step: 64,
            epochs_per_step: 1,
            partition_threshold: DEFAULT_PARTITION_THRESHOLD,
            reward: RewardOptions::default(),
            env: EnvConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.group_size < 2 {
            return bad(format!("group_size must be at least 2, got {}", self.group_size));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps));
        }
        if !(self.kl_coef >= 0.0 && self.kl_coef.is_finite()) {
            return bad(format!("kl_coef must be non-negative, got {}", self.kl_coef));
        }
        if !(self.eps_stab > 0.0) {
            return bad(format!("eps_stab must be positive, got {}", self.eps_stab));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.queries_per_step == 0 || self.epochs_per_step == 0 {
            return bad("queries_per_step and epochs_per_step must be positive".into());
        }
        self.env.check()
    }

    pub fn objective(&self) -> ObjectiveParams {
        ObjectiveParams {
            clip_eps: self.clip_eps,
            kl_coef: self.kl_coef,
        }
    }
}

/// Expected behavior of a policy over the whole case suite, computed in
/// closed form from its action probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub band_cases: Vec<usize>,
    /// Mean chosen reasoning length per band (0 for empty bands).
    pub band_length: Vec<f64>,
    /// Exact-match rate per band (0 for empty bands).
    pub band_success: Vec<f64>,
    pub mean_length: f64,
    pub success_rate: f64,
    /// Probability of any name, key, type or constraint failure.
    pub structural_failure_rate: f64,
    /// Per-dimension failure probability: name, key, type, constraint, value.
    pub failure_rates: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub mean_reward: f64,
    pub mean_sampled_length: f64,
    /// Mean within-group variance of the composite reward.
    pub advantage_variance: f64,
    pub policy: PolicyMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub config: TrainConfig,
    pub initial: PolicyMetrics,
    pub steps: Vec<StepMetrics>,
    #[serde(rename = "final")]
    pub final_metrics: PolicyMetrics,
    pub policy: PolicyState,
}

impl TrainingReport {
    /// Mean advantage variance over the first and last `window` steps.
    pub fn variance_endpoints(&self, window: usize) -> Option<(f64, f64)> {
        let n = self.steps.len();
        if n == 0 {
            return None;
        }
        let w = window.clamp(1, n);
        let mean = |s: &[StepMetrics]| s.iter().map(|m| m.advantage_variance).sum::<f64>() / s.len() as f64;
        Some((mean(&self.steps[..w]), mean(&self.steps[n - w..])))
    }

    /// Per-step metrics as CSV, one row per update.
    pub fn to_csv(&self) -> String {
        let bands = self.initial.band_cases.len();
        let mut header = vec![
            "step".to_string(),
            "mean_reward".into(),
            "mean_sampled_length".into(),
            "advantage_variance".into(),
            "mean_length".into(),
            "success_rate".into(),
            "structural_failure_rate".into(),
        ];
        for name in ["name", "key", "type", "constraint", "value"] {
            header.push(format!("{name}_error_rate"));
        }
        for d in 0..bands {
            header.push(format!("band{d}_length"));
            header.push(format!("band{d}_success"));
        }
        let mut out = header.join(",");
        out.push('\n');
        for s in &self.steps {
            let p = &s.policy;
            let mut row = vec![
                s.step.to_string(),
                fmt_num(s.mean_reward),
                fmt_num(s.mean_sampled_length),
                fmt_num(s.advantage_variance),
                fmt_num(p.mean_length),
                fmt_num(p.success_rate),
                fmt_num(p.structural_failure_rate),
            ];
            row.extend(p.failure_rates.iter().map(|&x| fmt_num(x)));
            for d in 0..bands {
                row.push(fmt_num(p.band_length[d]));
                row.push(fmt_num(p.band_success[d]));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Per-query data reused at every step.
struct Prepared {
    query: SimQuery,
    outcomes: Vec<(FailureProfile, bool)>,
}

/// RNG for one rollout, keyed by run seed, step, batch slot, query and rollout index so
/// rollouts are independent of evaluation order.
fn rollout_rng(seed: u64, step: u64, slot: usize, query: usize, index: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..20].copy_from_slice(&(slot as u32).to_le_bytes());
    key[20..24].copy_from_slice(&(query as u32).to_le_bytes());
    key[24..].copy_from_slice(&(index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn policy_metrics(policy: &PolicyState, prepared: &[Prepared], env: &EnvConfig, bands: usize) -> PolicyMetrics {
    let class_probs: Vec<Vec<f64>> = (0..policy.classes()).map(|c| policy.probs(c)).collect();
    let mut band_cases = vec![0usize; bands];
    let mut band_length = vec![0.0; bands];
    let mut band_success = vec![0.0; bands];
    let mut structural = 0.0;
    let mut failure_rates = [0.0; 5];
    for prep in prepared {
        let q = &prep.query;
        let probs = &class_probs[q.class];
        let mut emitted = [0.0; TEMPLATE_COUNT];
        let mut length = 0.0;
        for (a, &p) in probs.iter().enumerate() {
            let (b, t) = env.decode(a);
            let l = env.bucket_length(b);
            length += p * l;
            for (e, pe) in env.emission_probs(t, l, q.length_need).iter().enumerate() {
                emitted[e] += p * pe;
            }
        }
        let mut success = 0.0;
        for (e, &pe) in emitted.iter().enumerate() {
            let (profile, exact) = prep.outcomes[e];
            if exact {
                success += pe;
            }
            if profile.is_structural() {
                structural += pe;
            }
            for (rate, flag) in failure_rates.iter_mut().zip(profile.flags()) {
                if flag {
                    *rate += pe;
                }
            }
        }
        band_cases[q.band] += 1;
        band_length[q.band] += length;
        band_success[q.band] += success;
    }
    let n = prepared.len().max(1) as f64;
    let mean_length = band_length.iter().sum::<f64>() / n;
    let success_rate = band_success.iter().sum::<f64>() / n;
    for d in 0..bands {
        if band_cases[d] > 0 {
            band_length[d] /= band_cases[d] as f64;
            band_success[d] /= band_cases[d] as f64;
        }
    }
    PolicyMetrics {
        band_cases,
        band_length,
        band_success,
        mean_length,
        success_rate,
        structural_failure_rate: structural / n,
        failure_rates: failure_rates.map(|r| r / n),
    }
}

/// Case index for each query slot of each step: the scheduled stream is
/// spread evenly over the whole run.
fn stream_slots(order: &[usize], steps: u64, per_step: usize) -> impl Fn(u64, usize) -> usize + '_ {
    let total = steps as u128 * per_step as u128;
    move |step, k| {
        let slot = step as u128 * per_step as u128 + k as u128;
        order[(slot * order.len() as u128 / total) as usize]
    }
}

/// Trains a tabular policy (one logit vector per band) on profiled cases.
pub fn train(cases: &[ExecutionCase], shaping: &ShapingConfig, cfg: &TrainConfig) -> Result<TrainingReport> {
    cfg.check()?;
    shaping.check()?;
    let env = &cfg.env;
    let bands = shaping.bands.len();
    let prepared = cases
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let query = SimQuery::from_case(i, c, env)?;
            if query.band >= bands {
                return Err(Error::UnknownBand(query.band));
            }
            let outcomes = query.template_outcomes()?;
            Ok(Prepared { query, outcomes })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut policy = PolicyState::uniform(bands, env.action_count());
    let initial = policy_metrics(&policy, &prepared, env, bands);
    let mut steps = Vec::with_capacity(cfg.steps as usize);
    if !prepared.is_empty() {
        let hardness: Vec<f64> = prepared.iter().map(|p| p.query.hardness).collect();
        let order = schedule_order(&hardness, cfg.strategy, cfg.seed, cfg.partition_threshold);
        let slot = stream_slots(&order, cfg.steps, cfg.queries_per_step);
        for step in 0..cfg.steps {
            policy.refresh_old();
            let mut groups = Vec::with_capacity(cfg.queries_per_step);
            let (mut reward_sum, mut length_sum, mut var_sum) = (0.0, 0.0, 0.0);
            for k in 0..cfg.queries_per_step {
                let q = &prepared[slot(step, k)].query;
                let probs = policy.old_probs(q.class);
                let log_probs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
                let ctx = RewardContext {
                    reference_calls: &q.reference_calls,
                    schemas: &q.schemas,
                    hardness: q.hardness,
                    band: q.band,
                    step,
                };
                let mut actions = Vec::with_capacity(cfg.group_size);
                let mut rewards = Vec::with_capacity(cfg.group_size);
                for i in 0..cfg.group_size {
                    let mut rng = rollout_rng(cfg.seed, step, k, q.id, i);
                    let action = sample_index(&probs, &mut rng);
                    let r = realize(action, q, env, &mut rng);
                    let breakdown = composite_reward_with(&r.trajectory, &ctx, shaping, cfg.reward)?;
                    length_sum += r.trajectory.length_tokens as f64;
                    actions.push(action);
                    rewards.push(breakdown.r_total);
                }
                reward_sum += rewards.iter().sum::<f64>();
                var_sum += population_variance(&rewards);
                groups.push(TrajectoryGroup {
                    query_id: q.id,
                    class: q.class,
                    old_log_probs: actions.iter().map(|&a| log_probs[a]).collect(),
                    advantages: group_advantages(&rewards, cfg.eps_stab)?,
                    actions,
                    rewards,
                });
            }
            for _ in 0..cfg.epochs_per_step {
                policy = policy_step(&policy, &groups, cfg.objective(), cfg.learning_rate)?;
            }
            let samples = (cfg.queries_per_step * cfg.group_size) as f64;
            steps.push(StepMetrics {
                step,
                mean_reward: reward_sum / samples,
                mean_sampled_length: length_sum / samples,
                advantage_variance: var_sum / cfg.queries_per_step as f64,
                policy: policy_metrics(&policy, &prepared, env, bands),
            });
        }
    }
    policy.refresh_old();
    let final_metrics = policy_metrics(&policy, &prepared, env, bands);
    Ok(TrainingReport {
        config: cfg.clone(),
        initial,
        steps,
        final_metrics,
        policy,
    })
}
