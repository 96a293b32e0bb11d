use std::path::Path;

use nalgebra::{Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use super::reward::RewardBreakdown;
use crate::dynamics::{VehicleState, STATE_DIM};
use crate::error::ConfigError;
use crate::measurement::{Measurement, MEAS_DIM};

/// One row of an episode trace; row 0 is the reset state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub t: f64,
    pub x: VehicleState,
    pub ref_position: Vector3<f64>,
    pub ref_attitude: Vector3<f64>,
    pub measurement: Measurement,
    pub action_mu: Vector4<f64>,
    pub action_eta: Vector6<f64>,
    pub command: Vector4<f64>,
    pub perturbation: Vector6<f64>,
    pub margin: Vector4<f64>,
    pub reward: RewardBreakdown,
}

const STATE_COLS: [&str; STATE_DIM] =
    ["x", "y", "z", "u", "v", "w", "phi", "theta", "psi", "p", "q", "r", "dE", "dA", "dR", "dT"];
const MEAS_COLS: [&str; MEAS_DIM] = [
    "y_p", "y_q", "y_r", "y_Vr", "y_phi", "y_theta", "y_psi", "y_x", "y_y", "y_z", "y_fx", "y_fy", "y_fz",
];
const CHANNELS: [&str; 4] = ["E", "A", "R", "T"];
const COEFFS: [&str; 6] = ["X", "Y", "Z", "L", "M", "N"];

pub fn trace_header() -> Vec<String> {
    let mut h: Vec<String> = vec!["k".into(), "t".into()];
    h.extend(STATE_COLS.iter().map(|s| s.to_string()));
    h.extend(["ref_x", "ref_y", "ref_z", "ref_phi", "ref_theta", "ref_psi"].map(String::from));
    h.extend(MEAS_COLS.iter().map(|s| s.to_string()));
    h.extend(CHANNELS.iter().map(|c| format!("a_mu_{c}")));
    h.extend(COEFFS.iter().map(|c| format!("a_eta_{c}")));
    h.extend(CHANNELS.iter().map(|c| format!("cmd_{c}")));
    h.extend(COEFFS.iter().map(|c| format!("dC_{c}")));
    h.extend(CHANNELS.iter().map(|c| format!("m_{c}")));
    h.extend(["r_tracking", "r_barrier", "r_rate", "r_total"].map(String::from));
    h
}

impl TraceRow {
    fn values(&self) -> Vec<f64> {
        let mut v = vec![self.k as f64, self.t];
        v.extend(self.x.to_array());
        v.extend(self.ref_position.iter().chain(self.ref_attitude.iter()));
        v.extend(self.measurement);
        v.extend(self.action_mu.iter());
        v.extend(self.action_eta.iter());
        v.extend(self.command.iter());
        v.extend(self.perturbation.iter());
        v.extend(self.margin.iter());
        v.extend([self.reward.tracking, self.reward.barrier, self.reward.input_rate, self.reward.total]);
        v
    }

    fn from_values(v: &[f64]) -> Self {
        let mut it = v.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let head = take(2);
        let x = VehicleState::from_array(&take(STATE_DIM).try_into().expect("state columns"));
        let refs = take(6);
        let measurement: Measurement = take(MEAS_DIM).try_into().expect("measurement columns");
        let action_mu = Vector4::from_vec(take(4));
        let action_eta = Vector6::from_vec(take(6));
        let command = Vector4::from_vec(take(4));
        let perturbation = Vector6::from_vec(take(6));
        let margin = Vector4::from_vec(take(4));
        let r = take(4);
        Self {
            k: head[0] as usize,
            t: head[1],
            x,
            ref_position: Vector3::new(refs[0], refs[1], refs[2]),
            ref_attitude: Vector3::new(refs[3], refs[4], refs[5]),
            measurement,
            action_mu,
            action_eta,
            command,
            perturbation,
            margin,
            reward: RewardBreakdown { tracking: r[0], barrier: r[1], input_rate: r[2], total: r[3] },
        }
    }
}

pub fn write_trace_csv(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<(), ConfigError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trace_header())?;
    for row in rows {
        w.write_record(row.values().iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRow>, ConfigError> {
    let mut r = csv::Reader::from_path(path)?;
    let expected = trace_header();
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != expected {
        return Err(ConfigError::Invalid("trace CSV header does not match the expected columns".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| ConfigError::Invalid(format!("trace value {s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != expected.len() {
            return Err(ConfigError::Invalid("trace row has the wrong number of columns".into()));
        }
        rows.push(TraceRow::from_values(&values));
    }
    Ok(rows)
}
