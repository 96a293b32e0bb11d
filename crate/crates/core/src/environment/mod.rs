//! Two-agent path-tracking environment.
//!
//! The protagonist commands offsets from the reference input; the adversary
//! commands increments of the aerodynamic-coefficient perturbation. Rewards
//! are zero-sum.

mod reward;
mod trace;

pub use reward::{control_margin, denormalize, normalize, RewardBreakdown, RewardWeights};
pub use trace::{read_trace_csv, trace_header, write_trace_csv, TraceRow};

use std::sync::Arc;

use nalgebra::{Vector3, Vector4, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::disturbances::{
    gust_to_inertial, sample_delay, sample_steady_wind, DelayLine, DrydenGust, NoiseModel, PerturbationBounds,
    WindSettings,
};
use crate::dynamics::{rk4_step, saturate, wrap_angle, AircraftModel, VehicleState, MIN_AIRSPEED};
use crate::error::{ConfigError, EnvError};
use crate::measurement::{idx, measure, Measurement, MEAS_DIM};
use crate::reference::{PathCatalog, ReferenceTrajectory};

pub const OBS_MU_DIM: usize = 27;
pub const OBS_ETA_DIM: usize = 19;
pub const ACT_MU_DIM: usize = 4;
pub const ACT_ETA_DIM: usize = 6;

pub type ObsMu = [f64; OBS_MU_DIM];
pub type ObsEta = [f64; OBS_ETA_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryMode {
    /// Increments come from the adversary action.
    Policy,
    /// Increments drawn uniformly from the rate box.
    Stochastic,
    /// No perturbation.
    None,
}

impl AdversaryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdversaryMode::Policy => "policy",
            AdversaryMode::Stochastic => "stochastic",
            AdversaryMode::None => "none",
        }
    }
}

impl std::str::FromStr for AdversaryMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "policy" => Ok(Self::Policy),
            "stochastic" => Ok(Self::Stochastic),
            "none" => Ok(Self::None),
            _ => Err(ConfigError::Invalid(format!("unknown adversary mode {s:?}"))),
        }
    }
}

/// Symmetric half-ranges used to scale ȳ into [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorBounds {
    pub rates: f64,
    pub airspeed: f64,
    pub roll_pitch: f64,
    pub heading: f64,
    pub position: f64,
    pub specific_force: f64,
}

impl Default for ErrorBounds {
    fn default() -> Self {
        Self {
            rates: 2.0,
            airspeed: 10.0,
            roll_pitch: std::f64::consts::FRAC_PI_2,
            heading: std::f64::consts::PI,
            position: 50.0,
            specific_force: 20.0,
        }
    }
}

impl ErrorBounds {
    pub fn half_ranges(&self) -> Measurement {
        let (w, a, p, f) = (self.rates, self.roll_pitch, self.position, self.specific_force);
        [w, w, w, self.airspeed, a, a, self.heading, p, p, p, f, f, f]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSettings {
    /// Physical command offset at a normalized action of ±1.
    pub action_scale: [f64; 4],
    pub error_bounds: ErrorBounds,
    /// Time-indexed position error that ends an episode as a fault (m).
    pub abort_radius: f64,
    pub max_delay: usize,
    pub noise: NoiseModel,
    pub wind: WindSettings,
    pub perturbation: PerturbationBounds,
    pub reward: RewardWeights,
    pub adversary: AdversaryMode,
}

impl Default for EnvSettings {
    fn default() -> Self {
        Self {
            action_scale: [0.25, 0.25, 0.25, 30.0],
            error_bounds: ErrorBounds::default(),
            abort_radius: 100.0,
            max_delay: 1,
            noise: NoiseModel::default(),
            wind: WindSettings::default(),
            perturbation: PerturbationBounds::default(),
            reward: RewardWeights::default(),
            adversary: AdversaryMode::Policy,
        }
    }
}

impl EnvSettings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.action_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(ConfigError::Invalid("action scales must be positive".into()));
        }
        if self.error_bounds.half_ranges().iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(ConfigError::Invalid("error bounds must be positive".into()));
        }
        if !(self.abort_radius > 0.0) {
            return Err(ConfigError::Invalid("abort radius must be positive".into()));
        }
        self.noise.validate()?;
        self.wind.validate()?;
        self.perturbation.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    Dynamics,
    Abort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub k: usize,
    pub fault: Option<Fault>,
    /// Episode ended at the horizon rather than by a fault.
    pub truncated: bool,
    /// Observation components clipped into [−1, 1] this step.
    pub obs_clipped: usize,
    pub command: Vector4<f64>,
    pub perturbation: Vector6<f64>,
    pub margin: Vector4<f64>,
    pub position_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs_mu: ObsMu,
    pub obs_eta: ObsEta,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

fn clip_unit(x: f64, clipped: &mut usize) -> f64 {
    if x > 1.0 {
        *clipped += 1;
        1.0
    } else if x < -1.0 {
        *clipped += 1;
        -1.0
    } else {
        x
    }
}

/// Measurement minus reference with wrapped angles.
pub fn tracking_error(y: &Measurement, y_ref: &Measurement) -> Measurement {
    let mut e = [0.0; MEAS_DIM];
    for i in 0..MEAS_DIM {
        e[i] = y[i] - y_ref[i];
    }
    for i in idx::ATTITUDE {
        e[i] = wrap_angle(e[i]);
    }
    e
}

/// Rotates the horizontal position error into (along-track, cross-track).
fn heading_frame(err: &Measurement, heading: f64) -> Measurement {
    let mut out = *err;
    let (s, c) = heading.sin_cos();
    let (ex, ey) = (err[idx::POSITION.start], err[idx::POSITION.start + 1]);
    out[idx::POSITION.start] = c * ex + s * ey;
    out[idx::POSITION.start + 1] = -s * ex + c * ey;
    out
}

/// Mutable episode state, enough to resume an environment bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    rng: ChaCha8Rng,
    path: usize,
    k: usize,
    x: VehicleState,
    airspeed: f64,
    steady_wind: Vector3<f64>,
    gust: DrydenGust,
    delay: DelayLine,
    perturbation: Vector6<f64>,
    prev_command: Vector4<f64>,
    error: Measurement,
    done: bool,
    episode_return: f64,
}

#[derive(Debug, Clone)]
pub struct Env {
    model: Arc<AircraftModel>,
    catalog: Arc<PathCatalog>,
    settings: EnvSettings,
    lower: Vector4<f64>,
    upper: Vector4<f64>,
    schedule_bounds: (f64, f64),
    rng: ChaCha8Rng,
    path: usize,
    k: usize,
    x: VehicleState,
    airspeed: f64,
    steady_wind: Vector3<f64>,
    gust: DrydenGust,
    delay: DelayLine,
    perturbation: Vector6<f64>,
    prev_command: Vector4<f64>,
    error: Measurement,
    done: bool,
    episode_return: f64,
    trace: Option<Vec<TraceRow>>,
}

impl Env {
    pub fn new(model: Arc<AircraftModel>, catalog: Arc<PathCatalog>, settings: EnvSettings) -> Result<Self, EnvError> {
        settings.validate()?;
        if catalog.is_empty() {
            return Err(ConfigError::Invalid("path catalog is empty".into()).into());
        }
        let lower = model.actuators.lower();
        let upper = model.actuators.upper();
        for path in &catalog.paths {
            for rec in &path.steps {
                control_margin(&rec.delta_cmd, &rec.delta_cmd, &lower, &upper)?;
            }
        }
        let schedule_bounds = catalog.settings.schedule_bounds();
        let first = catalog.paths[0].steps[0].clone();
        let gust = DrydenGust::from_settings(&settings.wind);
        Ok(Self {
            model,
            catalog,
            lower,
            upper,
            schedule_bounds,
            rng: ChaCha8Rng::seed_from_u64(0),
            path: 0,
            k: 0,
            x: first.x,
            airspeed: first.y[idx::AIRSPEED],
            steady_wind: Vector3::zeros(),
            gust,
            delay: DelayLine::new(0, first.delta_cmd),
            perturbation: Vector6::zeros(),
            prev_command: first.delta_cmd,
            error: [0.0; MEAS_DIM],
            done: true,
            episode_return: 0.0,
            trace: None,
            settings,
        })
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            rng: self.rng.clone(),
            path: self.path,
            k: self.k,
            x: self.x,
            airspeed: self.airspeed,
            steady_wind: self.steady_wind,
            gust: self.gust.clone(),
            delay: self.delay.clone(),
            perturbation: self.perturbation,
            prev_command: self.prev_command,
            error: self.error,
            done: self.done,
            episode_return: self.episode_return,
        }
    }

    pub fn restore(&mut self, snap: EnvSnapshot) -> Result<(), EnvError> {
        if snap.path >= self.catalog.len() {
            return Err(EnvError::UnknownPath(snap.path));
        }
        if snap.k > self.catalog.paths[snap.path].horizon() {
            return Err(ConfigError::Invalid("snapshot step index beyond the path horizon".into()).into());
        }
        self.rng = snap.rng;
        self.path = snap.path;
        self.k = snap.k;
        self.x = snap.x;
        self.airspeed = snap.airspeed;
        self.steady_wind = snap.steady_wind;
        self.gust = snap.gust;
        self.delay = snap.delay;
        self.perturbation = snap.perturbation;
        self.prev_command = snap.prev_command;
        self.error = snap.error;
        self.done = snap.done;
        self.episode_return = snap.episode_return;
        Ok(())
    }

    /// Observations for the current state without stepping.
    pub fn observe(&self) -> (ObsMu, ObsEta) {
        let mut clipped = 0;
        (self.obs_mu(&mut clipped), self.obs_eta(&mut clipped))
    }

    pub fn settings(&self) -> &EnvSettings {
        &self.settings
    }

    pub fn catalog(&self) -> &PathCatalog {
        &self.catalog
    }

    pub fn reference(&self) -> &ReferenceTrajectory {
        &self.catalog.paths[self.path]
    }

    pub fn horizon(&self) -> usize {
        self.reference().horizon()
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn state(&self) -> &VehicleState {
        &self.x
    }

    pub fn perturbation(&self) -> &Vector6<f64> {
        &self.perturbation
    }

    pub fn steady_wind(&self) -> &Vector3<f64> {
        &self.steady_wind
    }

    pub fn delay_steps(&self) -> usize {
        self.delay.delay()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    /// Keeps a per-step trace from the next reset on.
    pub fn set_tracing(&mut self, enabled: bool) {
        self.trace = enabled.then(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceRow]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceRow>> {
        self.trace.as_mut().map(std::mem::take)
    }

    pub fn reset(&mut self, path_id: usize, seed: u64) -> Result<(ObsMu, ObsEta), EnvError> {
        if path_id >= self.catalog.len() {
            return Err(EnvError::UnknownPath(path_id));
        }
        self.path = path_id;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let first = self.catalog.paths[path_id].steps[0].clone();
        self.k = 0;
        self.x = first.x;
        let wind = &self.settings.wind;
        self.steady_wind = if wind.steady {
            sample_steady_wind(&mut self.rng, wind.min_speed, wind.max_speed)
        } else {
            Vector3::zeros()
        };
        self.gust.reset();
        self.perturbation = Vector6::zeros();
        let delay = sample_delay(&mut self.rng, self.settings.max_delay);
        self.delay = DelayLine::new(delay, first.delta_cmd);
        self.prev_command = first.delta_cmd;
        self.done = false;
        self.episode_return = 0.0;

        // A reference state is a solved trim, so it measures cleanly even in steady wind.
        let y_true = measure(&self.model, &self.x, &self.steady_wind, &self.perturbation)
            .map_err(|e| ConfigError::Invalid(format!("initial state invalid in sampled wind: {e}")))?;
        self.airspeed = y_true[idx::AIRSPEED];
        let y = self.settings.noise.apply(&y_true, &mut self.rng);
        self.error = tracking_error(&y, &first.y);
        let margin = Vector4::repeat(1.0);
        if let Some(trace) = self.trace.as_mut() {
            trace.clear();
            trace.push(TraceRow {
                k: 0,
                t: 0.0,
                x: self.x,
                ref_position: first.x.p,
                ref_attitude: first.x.theta,
                measurement: y,
                action_mu: Vector4::zeros(),
                action_eta: Vector6::zeros(),
                command: first.delta_cmd,
                perturbation: self.perturbation,
                margin,
                reward: RewardBreakdown::default(),
            });
        }
        Ok(self.observe())
    }

    fn obs_mu(&self, clipped: &mut usize) -> ObsMu {
        let path = &self.catalog.paths[self.path];
        let rec = &path.steps[self.k.min(path.horizon())];
        let half = self.settings.error_bounds.half_ranges();
        let err = heading_frame(&self.error, rec.x.theta[2]);
        let margin = reward::margin_unchecked(&self.prev_command, &rec.delta_cmd, &self.lower, &self.upper);
        let mut o = [0.0; OBS_MU_DIM];
        for i in 0..MEAS_DIM {
            o[i] = clip_unit(err[i] / half[i], clipped);
        }
        for ch in 0..4 {
            o[13 + ch] = clip_unit(normalize(rec.delta_cmd[ch], self.lower[ch], self.upper[ch]), clipped);
            o[17 + ch] = clip_unit(normalize(self.prev_command[ch], self.lower[ch], self.upper[ch]), clipped);
            o[21 + ch] = clip_unit(2.0 * margin[ch] - 1.0, clipped);
        }
        o[25] = clip_unit(rec.kappa / self.schedule_bounds.0, clipped);
        o[26] = clip_unit(rec.gamma / self.schedule_bounds.1, clipped);
        o
    }

    fn obs_eta(&self, clipped: &mut usize) -> ObsEta {
        let path = &self.catalog.paths[self.path];
        let rec = &path.steps[self.k.min(path.horizon())];
        let half = self.settings.error_bounds.half_ranges();
        let err = heading_frame(&self.error, rec.x.theta[2]);
        let dc = self.settings.perturbation.normalize(&self.perturbation);
        let mut o = [0.0; OBS_ETA_DIM];
        for i in 0..MEAS_DIM {
            o[i] = clip_unit(err[i] / half[i], clipped);
        }
        for i in 0..6 {
            o[13 + i] = clip_unit(dc[i], clipped);
        }
        o
    }

    /// Protagonist command for a normalized action at the current step.
    pub fn command_for(&self, action_mu: &Vector4<f64>) -> Vector4<f64> {
        let rec = &self.reference().steps[self.k];
        let offset = Vector4::from_fn(|i, _| action_mu[i].clamp(-1.0, 1.0) * self.settings.action_scale[i]);
        saturate(&self.model.actuators, &(rec.delta_cmd + offset))
    }

    pub fn step(&mut self, action_mu: &[f64; ACT_MU_DIM], action_eta: &[f64; ACT_ETA_DIM]) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let a_mu = Vector4::from_fn(|i, _| action_mu[i].clamp(-1.0, 1.0));
        let a_eta = Vector6::from_fn(|i, _| action_eta[i].clamp(-1.0, 1.0));
        let dt = self.reference().dt;
        let rec = self.reference().steps[self.k].clone();

        let command = self.command_for(&a_mu);
        let applied = self.delay.push_pop(command);

        let bounds = &self.settings.perturbation;
        let raw_step = match self.settings.adversary {
            AdversaryMode::Policy => bounds.action_to_step(&a_eta),
            AdversaryMode::Stochastic => bounds.random_step(&mut self.rng),
            AdversaryMode::None => Vector6::zeros(),
        };
        self.perturbation = bounds.clamp(&self.perturbation, &raw_step);

        let gust = if self.settings.wind.gusts {
            let g = self.gust.step(self.airspeed.max(MIN_AIRSPEED), dt, &mut self.rng);
            gust_to_inertial(&g, self.x.theta[2])
        } else {
            Vector3::zeros()
        };
        let wind = self.steady_wind + gust;

        let margin = reward::margin_unchecked(&command, &rec.delta_cmd, &self.lower, &self.upper);
        let change = Vector4::from_fn(|i, _| 2.0 * (command[i] - self.prev_command[i]) / (self.upper[i] - self.lower[i]));

        let advanced = rk4_step(&self.model, &self.x, &applied, &wind, &self.perturbation, dt)
            .and_then(|x| measure(&self.model, &x, &wind, &self.perturbation).map(|y| (x, y)));
        self.k += 1;
        self.prev_command = command;
        let horizon = self.horizon();
        let mut clipped = 0;

        let (reward, fault, position_error) = match advanced {
            Ok((x, y_true)) => {
                self.x = x;
                self.airspeed = y_true[idx::AIRSPEED];
                let next = &self.catalog.paths[self.path].steps[self.k];
                let y = self.settings.noise.apply(&y_true, &mut self.rng);
                self.error = tracking_error(&y, &next.y);
                let reward = self.settings.reward.breakdown(&self.error, &margin, &change);
                let position_error = (x.p - next.x.p).norm();
                let fault = (position_error > self.settings.abort_radius).then_some(Fault::Abort);
                if let Some(trace) = self.trace.as_mut() {
                    trace.push(TraceRow {
                        k: self.k,
                        t: self.k as f64 * dt,
                        x,
                        ref_position: next.x.p,
                        ref_attitude: next.x.theta,
                        measurement: y,
                        action_mu: a_mu,
                        action_eta: a_eta,
                        command,
                        perturbation: self.perturbation,
                        margin,
                        reward,
                    });
                }
                (reward, fault, position_error)
            }
            Err(_) => (RewardBreakdown::default(), Some(Fault::Dynamics), f64::INFINITY),
        };

        let truncated = fault.is_none() && self.k >= horizon;
        self.done = truncated || fault.is_some();
        self.episode_return += reward.total;
        let obs_mu = self.obs_mu(&mut clipped);
        let obs_eta = self.obs_eta(&mut clipped);
        Ok(StepOutcome {
            obs_mu,
            obs_eta,
            reward,
            done: self.done,
            info: StepInfo {
                k: self.k,
                fault,
                truncated,
                obs_clipped: clipped,
                command,
                perturbation: self.perturbation,
                margin,
                position_error,
            },
        })
    }
}
