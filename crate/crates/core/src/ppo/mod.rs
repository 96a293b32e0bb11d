//! Clipped-surrogate PPO with GAE, and alternating adversarial training.

mod rarl;
mod rollout;

pub use rarl::{
    rarl_train, write_metrics_csv, IterationRecord, RarlConfig, RoleSnapshot, TrainCallbacks, TrainState,
    TrainingOutcome, METRICS_HEADER,
};
pub use rollout::{collect_rollouts, seed_stream, Role, RolloutStats, SlotSnapshot, VecEnv};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, TrainError};
use crate::nn::{clip_grad_norm, log_prob_entropy, ActorCritic, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub n_steps: usize,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// `None` disables ratio clipping.
    pub clip_range: Option<f64>,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub n_envs: usize,
    pub normalize_advantage: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            n_steps: 2048,
            batch_size: 64,
            n_epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: Some(0.2),
            ent_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            n_envs: 8,
            normalize_advantage: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.learning_rate > 0.0
            && self.n_steps > 0
            && self.batch_size > 0
            && self.n_envs > 0
            && (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.gae_lambda)
            && self.clip_range.is_none_or(|c| c > 0.0)
            && self.max_grad_norm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Invalid("PPO hyperparameters out of range".into()))
        }
    }
}

/// GAE over one environment's sequence. `dones[k]` marks that the episode
/// ended after step k; `bootstrap` is V at the observation after the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for k in (0..n).rev() {
        let live = if dones[k] { 0.0 } else { 1.0 };
        let delta = rewards[k] + gamma * next_value * live - values[k];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[k] = next_adv;
        next_value = values[k];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// min(ρÂ, clip(ρ, 1−ε, 1+ε)Â).
pub fn clipped_surrogate(ratio: f64, clip: Option<f64>, advantage: f64) -> f64 {
    let unclipped = ratio * advantage;
    match clip {
        Some(eps) => unclipped.min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage),
        None => unclipped,
    }
}

/// Training samples for one policy, stored env-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self { obs_dim, act_dim, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], log_prob: f64, reward: f64, value: f64, done: bool) {
        self.obs.extend_from_slice(obs);
        self.actions.extend_from_slice(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    /// Appends another env's segment and its GAE.
    pub fn append_segment(&mut self, other: RolloutBuffer, bootstrap: f64, gamma: f64, lambda: f64) {
        let (adv, ret) = compute_gae(&other.rewards, &other.values, &other.dones, bootstrap, gamma, lambda);
        self.obs.extend(other.obs);
        self.actions.extend(other.actions);
        self.log_probs.extend(other.log_probs);
        self.rewards.extend(other.rewards);
        self.values.extend(other.values);
        self.dones.extend(other.dones);
        self.advantages.extend(adv);
        self.returns.extend(ret);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Loss statistics and the gradient of
/// −surrogate − c_e·entropy + c_v·MSE(value, return) over `indices`.
pub fn minibatch_gradient(
    policy: &ActorCritic,
    buffer: &RolloutBuffer,
    indices: &[usize],
    cfg: &PpoConfig,
    grad: &mut [f64],
) -> Result<LossStats, TrainError> {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let b = indices.len() as f64;
    let mut adv: Vec<f64> = indices.iter().map(|&i| buffer.advantages[i]).collect();
    if cfg.normalize_advantage && adv.len() > 1 {
        let mean = adv.iter().sum::<f64>() / b;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (b - 1.0);
        let std = var.sqrt();
        adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
    }

    let log_std = policy.log_std().to_vec();
    let ls_range = policy.log_std_range();
    let mut stats = LossStats::default();
    for (j, &i) in indices.iter().enumerate() {
        let obs = buffer.obs(i);
        let action = buffer.action(i);
        let actor = policy.actor_pass(obs)?;
        let mean = actor.output();
        let (logp, entropy) = log_prob_entropy(mean, &log_std, action);
        let log_ratio = logp - buffer.log_probs[i];
        let ratio = log_ratio.exp();
        let a = adv[j];
        let surrogate = clipped_surrogate(ratio, cfg.clip_range, a);
        // The min selects the unclipped branch whenever it is the smaller one.
        let active = surrogate == ratio * a;
        if !active {
            stats.clip_fraction += 1.0 / b;
        }
        stats.policy_loss -= surrogate / b;
        stats.entropy += entropy / b;
        stats.approx_kl += ((ratio - 1.0) - log_ratio) / b;

        let d_logp = if active { -ratio * a / b } else { 0.0 };
        let mut d_mean = vec![0.0; mean.len()];
        for k in 0..mean.len() {
            let inv_var = (-2.0 * log_std[k]).exp();
            let diff = action[k] - mean[k];
            d_mean[k] = d_logp * diff * inv_var;
            let z2 = diff * diff * inv_var;
            grad[ls_range.start + k] += d_logp * (z2 - 1.0) - cfg.ent_coef / b;
        }
        policy.actor_backward(&actor, &d_mean, grad);

        let critic = policy.critic_pass(obs)?;
        let v = critic.output()[0];
        let err = v - buffer.returns[i];
        stats.value_loss += err * err / b;
        policy.critic_backward(&critic, cfg.vf_coef * 2.0 * err / b, grad);
    }
    Ok(stats)
}

/// Runs `n_epochs` of shuffled minibatch updates; returns mean statistics.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut ActorCritic,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<LossStats, TrainError> {
    let mut grad = vec![0.0; policy.params.len()];
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut total = LossStats::default();
    let mut batches = 0usize;
    for epoch in 0..cfg.n_epochs {
        order.shuffle(rng);
        for (mb, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let s = minibatch_gradient(policy, buffer, chunk, cfg, &mut grad)?;
            if !(s.policy_loss.is_finite() && s.value_loss.is_finite()) || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    minibatch: mb,
                    policy_loss: s.policy_loss,
                    value_loss: s.value_loss,
                });
            }
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(&mut policy.params, &grad)?;
            total.policy_loss += s.policy_loss;
            total.value_loss += s.value_loss;
            total.entropy += s.entropy;
            total.clip_fraction += s.clip_fraction;
            total.approx_kl += s.approx_kl;
            batches += 1;
        }
    }
    if batches > 0 {
        let n = batches as f64;
        total.policy_loss /= n;
        total.value_loss /= n;
        total.entropy /= n;
        total.clip_fraction /= n;
        total.approx_kl /= n;
    }
    Ok(total)
}

/// 1 − Var(returns − values)/Var(returns); NaN when returns are constant.
pub fn explained_variance(values: &[f64], returns: &[f64]) -> f64 {
    let n = returns.len() as f64;
    let var = |x: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = x.collect();
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n
    };
    let var_y = var(&mut returns.iter().copied());
    if var_y == 0.0 {
        return f64::NAN;
    }
    1.0 - var(&mut returns.iter().zip(values).map(|(r, v)| r - v)) / var_y
}
