use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rollout::SlotSnapshot;
use super::{collect_rollouts, explained_variance, ppo_update, seed_stream, LossStats, PpoConfig, Role, VecEnv};
use crate::dynamics::AircraftModel;
use crate::environment::{AdversaryMode, EnvSettings, ACT_ETA_DIM, ACT_MU_DIM, OBS_ETA_DIM, OBS_MU_DIM};
use crate::error::{ConfigError, TrainError};
use crate::nn::{ActorCritic, Adam, Checkpoint};
use crate::reference::PathCatalog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RarlConfig {
    pub iterations: usize,
    pub hidden: Vec<usize>,
    /// Keep the adversary at its initial parameters.
    pub freeze_adversary: bool,
    /// Sample the frozen opponent's actions instead of using its mean.
    pub stochastic_opponent: bool,
    pub seed: u64,
}

impl Default for RarlConfig {
    fn default() -> Self {
        Self { iterations: 500, hidden: vec![64, 64], freeze_adversary: false, stochastic_opponent: true, seed: 0 }
    }
}

impl RarlConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.hidden.iter().any(|h| *h == 0) {
            return Err(ConfigError::Invalid("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub role: Role,
    pub mean_episode_reward: f64,
    pub std_episode_reward: f64,
    pub episodes: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub explained_variance: f64,
    pub steps: usize,
}

pub const METRICS_HEADER: [&str; 12] = [
    "iteration",
    "role",
    "mean_episode_reward",
    "std_episode_reward",
    "episodes",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
    "approx_kl",
    "explained_variance",
    "steps",
];

impl IterationRecord {
    fn fields(&self) -> [String; 12] {
        [
            self.iteration.to_string(),
            self.role.as_str().to_string(),
            self.mean_episode_reward.to_string(),
            self.std_episode_reward.to_string(),
            self.episodes.to_string(),
            self.policy_loss.to_string(),
            self.value_loss.to_string(),
            self.entropy.to_string(),
            self.clip_fraction.to_string(),
            self.approx_kl.to_string(),
            self.explained_variance.to_string(),
            self.steps.to_string(),
        ]
    }

    /// Appends one metrics row, writing the header first if the file is new or empty.
    pub fn append_csv(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let path = path.as_ref();
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = csv::Writer::from_writer(file);
        if fresh {
            w.write_record(METRICS_HEADER)?;
        }
        w.write_record(self.fields())?;
        w.flush()?;
        Ok(())
    }
}

/// Writes the full history as a metrics CSV.
pub fn write_metrics_csv(history: &[IterationRecord], path: impl AsRef<Path>) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in history {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Network parameters and optimizer state for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSnapshot {
    pub policy: Checkpoint,
    pub adam: Adam,
}

/// Everything needed to continue training bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub format_version: u32,
    /// Iterations completed so far.
    pub iteration: usize,
    pub ppo: PpoConfig,
    pub rarl: RarlConfig,
    pub env: EnvSettings,
    pub protagonist: RoleSnapshot,
    pub adversary: RoleSnapshot,
    pub update_rng: ChaCha8Rng,
    pub envs: Vec<SlotSnapshot>,
    pub history: Vec<IterationRecord>,
}

const STATE_VERSION: u32 = 1;

impl TrainState {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, self)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let state: TrainState = serde_json::from_reader(f)?;
        if state.format_version != STATE_VERSION {
            return Err(TrainError::ResumeMismatch(format!("unsupported state version {}", state.format_version)));
        }
        Ok(state)
    }
}

/// Hooks invoked by the training loop.
pub trait TrainCallbacks {
    /// Called after each completed iteration with the resumable state.
    fn on_iteration(&mut self, _state: &TrainState, _records: &[IterationRecord]) -> Result<(), TrainError> {
        Ok(())
    }
}

impl TrainCallbacks for () {}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub protagonist: ActorCritic,
    pub adversary: ActorCritic,
    pub history: Vec<IterationRecord>,
    /// Environment steps taken by this call.
    pub env_steps: usize,
}

fn record(iteration: usize, role: Role, stats: &super::RolloutStats, loss: &LossStats, ev: f64) -> IterationRecord {
    let (mean, std) = stats.episode_reward();
    IterationRecord {
        iteration,
        role,
        mean_episode_reward: mean,
        std_episode_reward: std,
        episodes: stats.completed_returns.len(),
        policy_loss: loss.policy_loss,
        value_loss: loss.value_loss,
        entropy: loss.entropy,
        clip_fraction: loss.clip_fraction,
        approx_kl: loss.approx_kl,
        explained_variance: ev,
        steps: stats.steps,
    }
}

/// Alternating protagonist/adversary PPO. The adversary trains only in
/// `AdversaryMode::Policy` and when not frozen; otherwise this is plain PPO
/// on the protagonist.
pub fn rarl_train(
    model: Arc<AircraftModel>,
    catalog: Arc<PathCatalog>,
    env: &EnvSettings,
    ppo: &PpoConfig,
    rarl: &RarlConfig,
    resume: Option<TrainState>,
    callbacks: &mut dyn TrainCallbacks,
) -> Result<TrainingOutcome, TrainError> {
    ppo.validate()?;
    rarl.validate()?;
    env.validate()?;
    let mut envs = VecEnv::new(model, catalog, env, ppo.n_envs, rarl.seed)?;

    let mut init_rng = seed_stream(rarl.seed, 0);
    let mut mu = ActorCritic::new(OBS_MU_DIM, ACT_MU_DIM, &rarl.hidden, &mut init_rng);
    let mut eta = ActorCritic::new(OBS_ETA_DIM, ACT_ETA_DIM, &rarl.hidden, &mut init_rng);
    let mut adam_mu = Adam::new(mu.params.len(), ppo.learning_rate);
    let mut adam_eta = Adam::new(eta.params.len(), ppo.learning_rate);
    let mut update_rng = seed_stream(rarl.seed, u64::MAX);
    let mut history = Vec::new();
    let mut start = 0;

    if let Some(state) = resume {
        if state.ppo != *ppo || state.rarl.hidden != rarl.hidden || state.rarl.seed != rarl.seed
            || state.rarl.freeze_adversary != rarl.freeze_adversary
            || state.rarl.stochastic_opponent != rarl.stochastic_opponent
            || state.env != *env
        {
            return Err(TrainError::ResumeMismatch("configuration differs from the checkpointed run".into()));
        }
        if state.iteration > rarl.iterations {
            return Err(TrainError::ResumeMismatch(format!(
                "checkpoint is at iteration {}, beyond the requested {}",
                state.iteration, rarl.iterations
            )));
        }
        mu = ActorCritic::from_checkpoint(&state.protagonist.policy)?;
        eta = ActorCritic::from_checkpoint(&state.adversary.policy)?;
        adam_mu = state.protagonist.adam;
        adam_eta = state.adversary.adam;
        update_rng = state.update_rng;
        envs.restore(state.envs)?;
        history = state.history;
        start = state.iteration;
    }

    let train_adversary = env.adversary == AdversaryMode::Policy && !rarl.freeze_adversary;
    let mut env_steps = 0;
    for iteration in start..rarl.iterations {
        let mut records = Vec::with_capacity(2);

        let (buf, stats) = collect_rollouts(&mut envs, &mu, &eta, Role::Protagonist, ppo.n_steps, ppo.gamma, ppo.gae_lambda, rarl.stochastic_opponent)?;
        env_steps += stats.steps;
        let loss = ppo_update(&mut mu, &mut adam_mu, &buf, ppo, &mut update_rng)?;
        records.push(record(iteration, Role::Protagonist, &stats, &loss, explained_variance(&buf.values, &buf.returns)));

        if train_adversary {
            let (buf, stats) = collect_rollouts(&mut envs, &mu, &eta, Role::Adversary, ppo.n_steps, ppo.gamma, ppo.gae_lambda, rarl.stochastic_opponent)?;
            env_steps += stats.steps;
            let loss = ppo_update(&mut eta, &mut adam_eta, &buf, ppo, &mut update_rng)?;
            records.push(record(iteration, Role::Adversary, &stats, &loss, explained_variance(&buf.values, &buf.returns)));
        }

        history.extend_from_slice(&records);
        let state = TrainState {
            format_version: STATE_VERSION,
            iteration: iteration + 1,
            ppo: ppo.clone(),
            rarl: rarl.clone(),
            env: env.clone(),
            protagonist: RoleSnapshot { policy: mu.to_checkpoint(), adam: adam_mu.clone() },
            adversary: RoleSnapshot { policy: eta.to_checkpoint(), adam: adam_eta.clone() },
            update_rng: update_rng.clone(),
            envs: envs.snapshot(),
            history: history.clone(),
        };
        callbacks.on_iteration(&state, &records)?;
    }

    Ok(TrainingOutcome { protagonist: mu, adversary: eta, history, env_steps })
}
