//! Lemniscate-like reference paths built from trimmed motion primitives.
//!
//! A path is: straight-and-level leg, coordinated turn at (κ, γ), a second
//! straight leg, then the mirrored turn at (−κ, −γ). With leg length L and turn
//! radius R = 1/|κ| the horizontal figure closes when each turn sweeps
//! 2π − 2·atan(L/(2R)); the ±γ pair returns the path to its start altitude.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::{rk4_step, AircraftModel, VehicleState};
use crate::error::{ConfigError, TrimError};
use crate::measurement::{measure, Measurement};
use crate::trim::{solve_trim, TrimOptions, TrimPoint, TrimSpec};

pub const KAPPA_GRID: [f64; 4] = [-0.02, -0.012, 0.012, 0.02];
pub const GAMMA_GRID: [f64; 5] = [-0.21, -0.11, 0.0, 0.11, 0.21];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    /// Length of each straight leg (m).
    pub leg_length: f64,
    /// Integration step (s).
    pub dt: f64,
    pub airspeed: f64,
    /// Start altitude above the NED origin (m).
    pub start_altitude: f64,
    pub kappas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub trim: TrimOptions,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self {
            leg_length: 200.0,
            dt: 0.04,
            airspeed: crate::trim::NOMINAL_AIRSPEED,
            start_altitude: 50.0,
            kappas: KAPPA_GRID.to_vec(),
            gammas: GAMMA_GRID.to_vec(),
            trim: TrimOptions::default(),
        }
    }
}

impl PathSettings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.leg_length > 0.0 && self.airspeed > 0.0) {
            return Err(ConfigError::Invalid("path settings need positive dt, leg length and airspeed".into()));
        }
        if self.kappas.iter().any(|k| *k == 0.0) || self.kappas.is_empty() || self.gammas.is_empty() {
            return Err(ConfigError::Invalid("turn curvatures must be nonzero and grids nonempty".into()));
        }
        Ok(())
    }

    /// Largest |κ| and |γ| in the grid, used to normalize scheduling inputs.
    pub fn schedule_bounds(&self) -> (f64, f64) {
        let k = self.kappas.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let g = self.gammas.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        (k.max(1e-9), g.max(1e-9))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub x: VehicleState,
    pub y: Measurement,
    /// Command applied from this step to the next.
    pub delta_cmd: Vector4<f64>,
    pub kappa: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub id: usize,
    pub kappa: f64,
    pub gamma: f64,
    pub dt: f64,
    /// Records for k = 0..=N.
    pub steps: Vec<ReferenceRecord>,
    /// First index of each of the four segments.
    pub segment_starts: Vec<usize>,
}

impl ReferenceTrajectory {
    /// Number of transitions N.
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.horizon() as f64 * self.dt
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.steps.iter().map(|s| s.x.p).collect()
    }

    /// Half-open step ranges `[start, end]` of each segment (end is the join index).
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut bounds = self.segment_starts.clone();
        bounds.push(self.horizon());
        bounds.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Reference measurement at a reference state: the trim's rates, airspeed and
/// attitude with the integrated heading/position and the trim specific force.
pub fn reference_measurement(model: &AircraftModel, x_ref: &VehicleState) -> Measurement {
    // The reference state is a solved trim, so air data is valid.
    measure(model, x_ref, &Vector3::zeros(), &Vector6::zeros()).expect("reference state must be a valid trim")
}

/// Integrates `n_steps` of the trim command from `start`, returning the states
/// after each step with attitude, velocity, rates and actuators held at trim
/// and position/heading taken from the integration.
pub fn integrate_segment(
    model: &AircraftModel,
    trim: &TrimPoint,
    start: &VehicleState,
    n_steps: usize,
    dt: f64,
) -> Result<Vec<VehicleState>, TrimError> {
    let mut out = Vec::with_capacity(n_steps);
    let mut x = *start;
    for _ in 0..n_steps {
        x = rk4_step(model, &x, &trim.delta_cmd, &Vector3::zeros(), &Vector6::zeros(), dt)?;
        out.push(trim.state(x.p, x.theta[2]));
    }
    Ok(out)
}

/// Heading change of each turn that closes the figure for leg `leg` and |κ|.
pub fn turn_sweep(leg: f64, kappa: f64) -> f64 {
    TAU - 2.0 * (0.5 * leg * kappa.abs()).atan()
}

/// Trims indexed by the bit pattern of (κ, γ).
#[derive(Debug, Clone, Default)]
pub struct TrimTable {
    trims: HashMap<(u64, u64), TrimPoint>,
}

impl TrimTable {
    fn key(kappa: f64, gamma: f64) -> (u64, u64) {
        // Normalize −0.0 so mirrored straight segments share an entry.
        ((kappa + 0.0).to_bits(), (gamma + 0.0).to_bits())
    }

    pub fn get_or_solve(
        &mut self,
        model: &AircraftModel,
        kappa: f64,
        gamma: f64,
        settings: &PathSettings,
    ) -> Result<TrimPoint, TrimError> {
        let key = Self::key(kappa, gamma);
        if let Some(t) = self.trims.get(&key) {
            return Ok(t.clone());
        }
        let spec = TrimSpec { kappa, gamma, airspeed: settings.airspeed };
        let t = solve_trim(model, &spec, &settings.trim)?;
        self.trims.insert(key, t.clone());
        Ok(t)
    }
}

pub fn build_lemniscate(
    model: &AircraftModel,
    kappa: f64,
    gamma: f64,
    settings: &PathSettings,
    trims: &mut TrimTable,
    id: usize,
) -> Result<ReferenceTrajectory, TrimError> {
    let dt = settings.dt;
    let v = settings.airspeed;
    let straight = trims.get_or_solve(model, 0.0, 0.0, settings)?;
    let turn = trims.get_or_solve(model, kappa, gamma, settings)?;
    let closing = trims.get_or_solve(model, -kappa, -gamma, settings)?;

    let leg_steps = (settings.leg_length / (v * dt)).round() as usize;
    let turn_time = turn_sweep(settings.leg_length, kappa) / (kappa.abs() * v * gamma.cos());
    let turn_steps = (turn_time / dt).round() as usize;

    let plan = [(&straight, leg_steps), (&turn, turn_steps), (&straight, leg_steps), (&closing, turn_steps)];

    let mut steps = Vec::with_capacity(2 * (leg_steps + turn_steps) + 1);
    let mut segment_starts = Vec::with_capacity(4);
    let mut position = Vector3::new(0.0, 0.0, -settings.start_altitude);
    let mut heading = 0.0;

    let record = |x: VehicleState, trim: &TrimPoint| ReferenceRecord {
        y: reference_measurement(model, &x),
        x,
        delta_cmd: trim.delta_cmd,
        kappa: trim.spec.kappa,
        gamma: trim.spec.gamma,
    };

    for (trim, n) in plan {
        segment_starts.push(steps.len().saturating_sub(1));
        let start = trim.state(position, heading);
        // The join record belongs to the segment that starts there.
        match steps.last_mut() {
            Some(last) => *last = record(start, trim),
            None => steps.push(record(start, trim)),
        }
        let states = integrate_segment(model, trim, &start, n, dt)?;
        for x in states {
            position = x.p;
            heading = x.theta[2];
            steps.push(record(x, trim));
        }
    }
    // The final record carries the closing segment's command.
    Ok(ReferenceTrajectory { id, kappa, gamma, dt, steps, segment_starts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCatalog {
    pub settings: PathSettings,
    pub paths: Vec<ReferenceTrajectory>,
}

impl PathCatalog {
    /// One path per (κ, γ) in the grid; ids run γ-fastest.
    pub fn build(model: &AircraftModel, settings: &PathSettings) -> Result<Self, TrimError> {
        let mut trims = TrimTable::default();
        let mut paths = Vec::with_capacity(settings.kappas.len() * settings.gammas.len());
        for &k in &settings.kappas {
            for &g in &settings.gammas {
                let id = paths.len();
                paths.push(build_lemniscate(model, k, g, settings, &mut trims, id)?);
            }
        }
        Ok(Self { settings: settings.clone(), paths })
    }

    pub fn get(&self, id: usize) -> Option<&ReferenceTrajectory> {
        self.paths.get(id)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::wrap_angle;
    use crate::measurement::idx;
    use approx::assert_abs_diff_eq;

    fn settings() -> PathSettings {
        PathSettings::default()
    }

    #[test]
    fn straight_segment_advances_at_airspeed() {
        let model = AircraftModel::default();
        let s = settings();
        let trim = solve_trim(&model, &TrimSpec::new(0.0, 0.0), &s.trim).unwrap();
        let start = trim.state(Vector3::zeros(), 0.0);
        let states = integrate_segment(&model, &trim, &start, 50, 0.04).unwrap();
        let end = states.last().unwrap().p;
        // The side-force bank tilts the body axis slightly off the ground track.
        assert_abs_diff_eq!(end.norm(), 42.0, epsilon = 1e-9);
        assert!(end.z.abs() < 1e-9);
        assert!(end.y.abs() < 1.0);
    }

    #[test]
    fn full_circle_wraps_heading() {
        let model = AircraftModel::default();
        let trim = solve_trim(&model, &TrimSpec::new(0.012, 0.0), &TrimOptions::default()).unwrap();
        let period = TAU / (0.012 * 21.0);
        // Choose dt so the period is an integer number of steps.
        let n = 2000;
        let dt = period / n as f64;
        let states = integrate_segment(&model, &trim, &trim.state(Vector3::zeros(), 0.0), n, dt).unwrap();
        let psi = states.last().unwrap().theta[2];
        assert_abs_diff_eq!(psi, TAU, epsilon = 1e-3);
        assert!(wrap_angle(psi).abs() < 1e-3);
    }

    #[test]
    fn zero_duration_is_empty() {
        let model = AircraftModel::default();
        let trim = solve_trim(&model, &TrimSpec::new(0.0, 0.0), &TrimOptions::default()).unwrap();
        assert!(integrate_segment(&model, &trim, &trim.state(Vector3::zeros(), 0.0), 0, 0.04).unwrap().is_empty());
    }

    #[test]
    fn lemniscate_structure() {
        let model = AircraftModel::default();
        let s = settings();
        let path = build_lemniscate(&model, 0.02, 0.21, &s, &mut TrimTable::default(), 0).unwrap();
        assert_eq!(path.segment_starts.len(), 4);
        let z0 = path.steps[0].x.p.z;
        let last = path.steps.last().unwrap();
        assert!((last.x.p.z - z0).abs() < 0.1, "altitude mismatch {}", last.x.p.z - z0);
        // The ascending turn climbs.
        let (a, b) = path.segments()[1];
        assert!(path.steps[b].x.p.z < path.steps[a].x.p.z - 10.0);
        // Joins are continuous in position and heading.
        for &j in &path.segment_starts[1..] {
            let prev = path.steps[j - 1].x.p;
            let here = path.steps[j].x.p;
            assert!((here - prev).norm() < 21.0 * 0.04 + 1e-9);
        }
        // The horizontal figure nearly closes.
        let gap = (last.x.p - path.steps[0].x.p).xy().norm();
        assert!(gap < 2.0, "closure gap {gap}");
        for r in &path.steps {
            assert_abs_diff_eq!(r.y[idx::AIRSPEED], 21.0, epsilon = 1e-9);
            assert_eq!(&r.y[idx::POSITION], r.x.p.as_slice());
        }
    }

    #[test]
    fn level_reference_specific_force_balances_gravity() {
        let model = AircraftModel::default();
        let trim = solve_trim(&model, &TrimSpec::new(0.0, 0.0), &TrimOptions::default()).unwrap();
        let x = trim.state(Vector3::zeros(), 0.4);
        let y = reference_measurement(&model, &x);
        let g = crate::dynamics::rotation_matrix(&x.theta).transpose() * Vector3::new(0.0, 0.0, 9.81);
        for i in 0..3 {
            assert_abs_diff_eq!(y[idx::SPECIFIC_FORCE.start + i], -g[i], epsilon = 1e-8);
        }
    }
}
