use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RolloutBuffer;
use crate::dynamics::AircraftModel;
use crate::environment::{
    AdversaryMode, Env, EnvSettings, EnvSnapshot, ACT_ETA_DIM, ACT_MU_DIM, OBS_ETA_DIM, OBS_MU_DIM,
};
use crate::error::{EnvError, TrainError};
use crate::nn::ActorCritic;
use crate::reference::PathCatalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Protagonist,
    Adversary,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Protagonist => "protagonist",
            Role::Adversary => "adversary",
        }
    }
}

/// Independent ChaCha stream `stream` under `seed`.
pub fn seed_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
struct Slot {
    env: Env,
    /// Drives action sampling and episode resets for this env.
    rng: ChaCha8Rng,
}

impl Slot {
    fn reset(&mut self) -> Result<(), EnvError> {
        let path = self.rng.random_range(0..self.env.catalog().len());
        let seed: u64 = self.rng.random();
        self.env.reset(path, seed)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSnapshot {
    pub env: EnvSnapshot,
    pub rng: ChaCha8Rng,
}

/// A fixed set of environments whose episodes continue across rollouts.
#[derive(Debug, Clone)]
pub struct VecEnv {
    slots: Vec<Slot>,
}

impl VecEnv {
    pub fn new(
        model: Arc<AircraftModel>,
        catalog: Arc<PathCatalog>,
        settings: &EnvSettings,
        n_envs: usize,
        seed: u64,
    ) -> Result<Self, EnvError> {
        let mut slots = Vec::with_capacity(n_envs);
        for i in 0..n_envs {
            let env = Env::new(model.clone(), catalog.clone(), settings.clone())?;
            let mut slot = Slot { env, rng: seed_stream(seed, i as u64 + 1) };
            slot.reset()?;
            slots.push(slot);
        }
        Ok(Self { slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn env(&self, i: usize) -> &Env {
        &self.slots[i].env
    }

    pub fn adversary_mode(&self) -> AdversaryMode {
        self.slots.first().map_or(AdversaryMode::None, |s| s.env.settings().adversary)
    }

    pub fn snapshot(&self) -> Vec<SlotSnapshot> {
        self.slots.iter().map(|s| SlotSnapshot { env: s.env.snapshot(), rng: s.rng.clone() }).collect()
    }

    pub fn restore(&mut self, snaps: Vec<SlotSnapshot>) -> Result<(), TrainError> {
        if snaps.len() != self.slots.len() {
            return Err(TrainError::ResumeMismatch(format!(
                "checkpoint holds {} environments, run has {}",
                snaps.len(),
                self.slots.len()
            )));
        }
        for (slot, snap) in self.slots.iter_mut().zip(snaps) {
            slot.env.restore(snap.env)?;
            slot.rng = snap.rng;
        }
        Ok(())
    }
}

/// Per-rollout statistics for the training role.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutStats {
    /// Returns of episodes that finished during the rollout, in env order.
    pub completed_returns: Vec<f64>,
    /// Running returns of episodes still in progress at the end.
    pub partial_returns: Vec<f64>,
    pub steps: usize,
    pub faults: usize,
}

impl RolloutStats {
    /// Mean and population std of completed returns, or of partial ones if none completed.
    pub fn episode_reward(&self) -> (f64, f64) {
        let xs = if self.completed_returns.is_empty() { &self.partial_returns } else { &self.completed_returns };
        if xs.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

struct EnvRollout {
    buffer: RolloutBuffer,
    bootstrap: f64,
    stats: RolloutStats,
}

fn collect_one(
    slot: &mut Slot,
    protagonist: &ActorCritic,
    adversary: &ActorCritic,
    role: Role,
    n_steps: usize,
    gamma: f64,
    stochastic_opponent: bool,
) -> Result<EnvRollout, TrainError> {
    let (obs_dim, act_dim) = match role {
        Role::Protagonist => (OBS_MU_DIM, ACT_MU_DIM),
        Role::Adversary => (OBS_ETA_DIM, ACT_ETA_DIM),
    };
    let sign = match role {
        Role::Protagonist => 1.0,
        Role::Adversary => -1.0,
    };
    let trained = match role {
        Role::Protagonist => protagonist,
        Role::Adversary => adversary,
    };
    let adversary_acts = slot.env.settings().adversary == AdversaryMode::Policy;
    let mut buffer = RolloutBuffer::new(obs_dim, act_dim);
    let mut stats = RolloutStats::default();

    for _ in 0..n_steps {
        let (obs_mu, obs_eta) = slot.env.observe();
        let (obs, sample, a_mu, a_eta) = match role {
            Role::Protagonist => {
                let s = protagonist.sample(&obs_mu, &mut slot.rng)?;
                let a_eta = if !adversary_acts {
                    vec![0.0; ACT_ETA_DIM]
                } else if stochastic_opponent {
                    adversary.sample(&obs_eta, &mut slot.rng)?.clipped
                } else {
                    adversary.act_deterministic(&obs_eta)?
                };
                (&obs_mu[..], s.clone(), s.clipped, a_eta)
            }
            Role::Adversary => {
                let s = adversary.sample(&obs_eta, &mut slot.rng)?;
                let a_mu = if stochastic_opponent {
                    protagonist.sample(&obs_mu, &mut slot.rng)?.clipped
                } else {
                    protagonist.act_deterministic(&obs_mu)?
                };
                (&obs_eta[..], s.clone(), a_mu, s.clipped)
            }
        };
        let a_mu: [f64; ACT_MU_DIM] = a_mu.try_into().expect("protagonist action width");
        let a_eta: [f64; ACT_ETA_DIM] = a_eta.try_into().expect("adversary action width");
        let out = slot.env.step(&a_mu, &a_eta)?;
        let mut reward = sign * out.reward.total;
        if out.info.truncated && out.info.fault.is_none() {
            let next: &[f64] = match role {
                Role::Protagonist => &out.obs_mu,
                Role::Adversary => &out.obs_eta,
            };
            reward += gamma * trained.value(next)?;
        }
        buffer.push(obs, &sample.action, sample.log_prob, reward, sample.value, out.done);
        stats.steps += 1;
        if out.done {
            stats.faults += usize::from(out.info.fault.is_some());
            stats.completed_returns.push(sign * slot.env.episode_return());
            slot.reset()?;
        }
    }
    stats.partial_returns.push(sign * slot.env.episode_return());
    let (obs_mu, obs_eta) = slot.env.observe();
    let bootstrap = match role {
        Role::Protagonist => trained.value(&obs_mu)?,
        Role::Adversary => trained.value(&obs_eta)?,
    };
    Ok(EnvRollout { buffer, bootstrap, stats })
}

/// Runs every env for `n_steps` with both policies frozen and returns the
/// training role's GAE-processed buffer. The opponent plays its mean action
/// unless `stochastic_opponent` is set. Envs run in parallel; results are
/// merged in env order so the output does not depend on thread count.
pub fn collect_rollouts(
    envs: &mut VecEnv,
    protagonist: &ActorCritic,
    adversary: &ActorCritic,
    role: Role,
    n_steps: usize,
    gamma: f64,
    lambda: f64,
    stochastic_opponent: bool,
) -> Result<(RolloutBuffer, RolloutStats), TrainError> {
    let parts: Vec<Result<EnvRollout, TrainError>> = envs
        .slots
        .par_iter_mut()
        .map(|slot| collect_one(slot, protagonist, adversary, role, n_steps, gamma, stochastic_opponent))
        .collect();
    let (obs_dim, act_dim) = match role {
        Role::Protagonist => (OBS_MU_DIM, ACT_MU_DIM),
        Role::Adversary => (OBS_ETA_DIM, ACT_ETA_DIM),
    };
    let mut buffer = RolloutBuffer::new(obs_dim, act_dim);
    let mut stats = RolloutStats::default();
    for part in parts {
        let part = part?;
        buffer.append_segment(part.buffer, part.bootstrap, gamma, lambda);
        stats.completed_returns.extend(part.stats.completed_returns);
        stats.partial_returns.extend(part.stats.partial_returns);
        stats.steps += part.stats.steps;
        stats.faults += part.stats.faults;
    }
    Ok((buffer, stats))
}
