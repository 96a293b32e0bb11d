//! Trial runner and path-tracking metrics.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{Vector3, Vector4};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::AircraftModel;
use crate::environment::{AdversaryMode, Env, EnvSettings, TraceRow, ACT_ETA_DIM, ACT_MU_DIM};
use crate::error::{ConfigError, TrainError};
use crate::nn::ActorCritic;
use crate::ppo::seed_stream;
use crate::reference::PathCatalog;

/// Minimum distance from `p` to the piecewise-linear path through `polyline`.
pub fn path_error(p: &Vector3<f64>, polyline: &[Vector3<f64>]) -> f64 {
    match polyline {
        [] => f64::NAN,
        [only] => (p - only).norm(),
        _ => polyline
            .windows(2)
            .map(|w| point_segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

/// Σ‖a_k‖ over normalized protagonist actions.
pub fn control_effort(actions: &[Vector4<f64>]) -> f64 {
    actions.iter().map(|a| a.norm()).sum()
}

#[derive(Debug, Clone)]
pub enum Controller {
    /// Deterministic (mean) action of a trained policy.
    Policy(Arc<ActorCritic>),
    Zero,
    /// Uniform actions in [−1, 1].
    Random,
}

impl Controller {
    pub fn label(&self) -> &'static str {
        match self {
            Controller::Policy(_) => "policy",
            Controller::Zero => "zero",
            Controller::Random => "random",
        }
    }
}

#[derive(Debug, Clone)]
pub enum AdversarySpec {
    None,
    Stochastic,
    /// Deterministic actions of a trained adversary.
    Policy(Arc<ActorCritic>),
}

impl AdversarySpec {
    pub fn mode(&self) -> AdversaryMode {
        match self {
            AdversarySpec::None => AdversaryMode::None,
            AdversarySpec::Stochastic => AdversaryMode::Stochastic,
            AdversarySpec::Policy(_) => AdversaryMode::Policy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub path_id: usize,
    pub adversary_mode: AdversaryMode,
    pub mpe_m: f64,
    pub maxpe_m: f64,
    pub effort: f64,
    pub fault: bool,
    #[serde(rename = "sat_E")]
    pub sat_e: f64,
    #[serde(rename = "sat_A")]
    pub sat_a: f64,
    #[serde(rename = "sat_R")]
    pub sat_r: f64,
    #[serde(rename = "sat_T")]
    pub sat_t: f64,
}

/// Path metrics and saturation fractions of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceMetrics {
    pub mpe: f64,
    pub maxpe: f64,
    pub effort: f64,
    pub saturation: [f64; 4],
}

/// Metrics over rows k ≥ 1 of a trace; row 0 is the reset state.
pub fn trace_metrics(rows: &[TraceRow], polyline: &[Vector3<f64>]) -> TraceMetrics {
    let steps = rows.iter().filter(|r| r.k > 0);
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    let mut actions = Vec::new();
    let mut sat = [0usize; 4];
    for r in steps {
        let e = path_error(&r.x.p, polyline);
        sum += e;
        max = max.max(e);
        actions.push(r.action_mu);
        for (ch, count) in sat.iter_mut().enumerate() {
            *count += usize::from(r.margin[ch] == 0.0);
        }
        n += 1;
    }
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    TraceMetrics {
        mpe: if n == 0 { 0.0 } else { sum / n as f64 },
        maxpe: max,
        effort: control_effort(&actions),
        saturation: sat.map(frac),
    }
}

/// Trial seed and path for trial `i` of a batch seeded by `seed`.
pub fn trial_assignment(seed: u64, i: usize, n_paths: usize) -> (u64, usize) {
    let mut rng = seed_stream(seed, i as u64);
    let path = rng.random_range(0..n_paths);
    (rng.random(), path)
}

/// Evaluation episodes run to the full horizon: the training abort radius
/// is lifted so early divergence cannot shorten the metric window.
pub fn evaluation_settings(base: &EnvSettings, adversary: &AdversarySpec) -> EnvSettings {
    EnvSettings { abort_radius: f64::INFINITY, adversary: adversary.mode(), ..base.clone() }
}

/// Runs one full episode and returns it with its trace.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    model: &Arc<AircraftModel>,
    catalog: &Arc<PathCatalog>,
    settings: &EnvSettings,
    controller: &Controller,
    adversary: &AdversarySpec,
    trial: usize,
    seed: u64,
    path_id: usize,
) -> Result<(TrialResult, Vec<TraceRow>), TrainError> {
    let settings = evaluation_settings(settings, adversary);
    let mut env = Env::new(model.clone(), catalog.clone(), settings)?;
    env.set_tracing(true);
    let (mut obs_mu, mut obs_eta) = env.reset(path_id, seed)?;
    let mut rng = seed_stream(seed, 1);
    let fault = loop {
        let a_mu: [f64; ACT_MU_DIM] = match controller {
            Controller::Policy(p) => p.act_deterministic(&obs_mu)?.try_into().expect("protagonist action width"),
            Controller::Zero => [0.0; ACT_MU_DIM],
            Controller::Random => std::array::from_fn(|_| rng.random_range(-1.0..=1.0)),
        };
        let a_eta: [f64; ACT_ETA_DIM] = match adversary {
            AdversarySpec::Policy(p) => p.act_deterministic(&obs_eta)?.try_into().expect("adversary action width"),
            _ => [0.0; ACT_ETA_DIM],
        };
        let out = env.step(&a_mu, &a_eta)?;
        obs_mu = out.obs_mu;
        obs_eta = out.obs_eta;
        if out.done {
            break out.info.fault.is_some();
        }
    };
    let rows = env.take_trace().unwrap_or_default();
    let m = trace_metrics(&rows, &catalog.paths[path_id].positions());
    let result = TrialResult {
        trial,
        seed,
        path_id,
        adversary_mode: adversary.mode(),
        mpe_m: m.mpe,
        maxpe_m: m.maxpe,
        effort: m.effort,
        fault,
        sat_e: m.saturation[0],
        sat_a: m.saturation[1],
        sat_r: m.saturation[2],
        sat_t: m.saturation[3],
    };
    Ok((result, rows))
}

/// Runs `n_trials` trials in parallel; results are ordered by trial index.
pub fn run_trials(
    model: &Arc<AircraftModel>,
    catalog: &Arc<PathCatalog>,
    settings: &EnvSettings,
    controller: &Controller,
    adversary: &AdversarySpec,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<TrialResult>, TrainError> {
    (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let (trial_seed, path) = trial_assignment(seed, i, catalog.len());
            run_trial(model, catalog, settings, controller, adversary, i, trial_seed, path).map(|(r, _)| r)
        })
        .collect()
}

pub fn write_results_csv(results: &[TrialResult], path: impl AsRef<Path>) -> Result<(), ConfigError> {
    let mut w = csv::Writer::from_path(path)?;
    if results.is_empty() {
        w.write_record(RESULT_COLUMNS)?;
    }
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<TrialResult>, ConfigError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub const RESULT_COLUMNS: [&str; 12] =
    ["trial", "seed", "path_id", "adversary_mode", "mpe_m", "maxpe_m", "effort", "fault", "sat_E", "sat_A", "sat_R", "sat_T"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub trials: usize,
    pub faults: usize,
    pub mean_mpe: f64,
    pub mean_maxpe: f64,
    pub mean_effort: f64,
    pub median_mpe: f64,
    pub mpe: Vec<f64>,
    pub maxpe: Vec<f64>,
    pub effort: Vec<f64>,
}

impl GroupSummary {
    fn new(label: &str, results: &[&TrialResult]) -> Self {
        let col = |f: fn(&TrialResult) -> f64| results.iter().map(|r| f(r)).collect::<Vec<_>>();
        let mpe = col(|r| r.mpe_m);
        let maxpe = col(|r| r.maxpe_m);
        let effort = col(|r| r.effort);
        Self {
            label: label.to_string(),
            trials: results.len(),
            faults: results.iter().filter(|r| r.fault).count(),
            mean_mpe: mean(&mpe),
            mean_maxpe: mean(&maxpe),
            mean_effort: mean(&effort),
            median_mpe: median(&mpe),
            mpe,
            maxpe,
            effort,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub groups: Vec<GroupSummary>,
    /// All trials pooled; absent when there are none.
    pub pooled: Option<GroupSummary>,
}

/// Per-group means and distributions, plus the pooled set.
pub fn aggregate(groups: &[(String, Vec<TrialResult>)]) -> AggregateReport {
    let all: Vec<&TrialResult> = groups.iter().flat_map(|(_, r)| r.iter()).collect();
    AggregateReport {
        groups: groups
            .iter()
            .filter(|(_, r)| !r.is_empty())
            .map(|(label, r)| GroupSummary::new(label, &r.iter().collect::<Vec<_>>()))
            .collect(),
        pooled: (!all.is_empty()).then(|| GroupSummary::new("pooled", &all)),
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
