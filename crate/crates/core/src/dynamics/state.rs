use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

pub const STATE_DIM: usize = 16;

/// Rigid-body plus actuator state.
///
/// The same layout doubles as the time derivative returned by
/// [`state_derivative`](super::state_derivative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Inertial NED position (m).
    pub p: Vector3<f64>,
    /// Body-frame velocity u, v, w (m/s).
    pub v: Vector3<f64>,
    /// Euler angles φ, θ, ψ (rad).
    pub theta: Vector3<f64>,
    /// Body rates p, q, r (rad/s).
    pub omega: Vector3<f64>,
    /// Actuator states δ_E, δ_A, δ_R (rad) and δ_T (rev/s).
    pub delta: Vector4<f64>,
}

impl Default for VehicleState {
    fn default() -> Self {
        Self::from_array(&[0.0; STATE_DIM])
    }
}

impl VehicleState {
    /// Flattened as `[p, v, θ, ω, δ]`.
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let mut out = [0.0; STATE_DIM];
        out[0..3].copy_from_slice(self.p.as_slice());
        out[3..6].copy_from_slice(self.v.as_slice());
        out[6..9].copy_from_slice(self.theta.as_slice());
        out[9..12].copy_from_slice(self.omega.as_slice());
        out[12..16].copy_from_slice(self.delta.as_slice());
        out
    }

    pub fn from_array(a: &[f64; STATE_DIM]) -> Self {
        Self {
            p: Vector3::new(a[0], a[1], a[2]),
            v: Vector3::new(a[3], a[4], a[5]),
            theta: Vector3::new(a[6], a[7], a[8]),
            omega: Vector3::new(a[9], a[10], a[11]),
            delta: Vector4::new(a[12], a[13], a[14], a[15]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// `self + h * rate`, component-wise.
    pub(crate) fn offset(&self, rate: &VehicleState, h: f64) -> VehicleState {
        let a = self.to_array();
        let r = rate.to_array();
        let mut out = [0.0; STATE_DIM];
        for i in 0..STATE_DIM {
            out[i] = a[i] + h * r[i];
        }
        VehicleState::from_array(&out)
    }
}
