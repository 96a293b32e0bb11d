//! Coordinated-turn trim solving.
//!
//! Unknowns are (φ, θ, u, v, w, p, q, r, δ_E, δ_A, δ_R, δ_T) with the actuator
//! states pinned to their commands. The twelve residuals are the body
//! accelerations, the body angular accelerations, φ̇, θ̇, the airspeed
//! constraint, zero sideslip, the climb-rate constraint and the turn-rate
//! constraint ψ̇ = κ·V·cos γ. They are driven to zero by a damped Newton
//! iteration on a central-difference Jacobian.

use nalgebra::{SMatrix, SVector, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::{state_derivative, AircraftModel, VehicleState};
use crate::error::{DynamicsError, TrimError};

const N: usize = 12;
type Unknowns = SVector<f64, N>;

/// Nominal trim airspeed (m/s).
pub const NOMINAL_AIRSPEED: f64 = 21.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimSpec {
    /// Inverse turn radius (1/m); positive turns right.
    pub kappa: f64,
    /// Flight-path angle (rad); positive climbs.
    pub gamma: f64,
    pub airspeed: f64,
}

impl TrimSpec {
    pub fn new(kappa: f64, gamma: f64) -> Self {
        Self { kappa, gamma, airspeed: NOMINAL_AIRSPEED }
    }

    /// Heading rate of the coordinated turn.
    pub fn yaw_rate(&self) -> f64 {
        self.kappa * self.airspeed * self.gamma.cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimPoint {
    pub spec: TrimSpec,
    pub phi: f64,
    pub theta: f64,
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub delta: Vector4<f64>,
    pub delta_cmd: Vector4<f64>,
    /// ‖(v̇, ω̇, φ̇, θ̇)‖∞ at the solution.
    pub residual: f64,
    pub iterations: usize,
}

impl TrimPoint {
    /// Trim state at the given position and heading.
    pub fn state(&self, position: Vector3<f64>, heading: f64) -> VehicleState {
        VehicleState {
            p: position,
            v: self.v,
            theta: Vector3::new(self.phi, self.theta, heading),
            omega: self.omega,
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrimOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the max-abs residual.
    pub tolerance: f64,
}

impl Default for TrimOptions {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-11 }
    }
}

fn unpack(z: &Unknowns) -> (VehicleState, Vector4<f64>) {
    let delta = Vector4::new(z[8], z[9], z[10], z[11]);
    let x = VehicleState {
        p: Vector3::zeros(),
        v: Vector3::new(z[2], z[3], z[4]),
        theta: Vector3::new(z[0], z[1], 0.0),
        omega: Vector3::new(z[5], z[6], z[7]),
        delta,
    };
    (x, delta)
}

fn residual(model: &AircraftModel, spec: &TrimSpec, z: &Unknowns) -> Result<Unknowns, DynamicsError> {
    let (x, cmd) = unpack(z);
    let d = state_derivative(model, &x, &cmd, &Vector3::zeros(), &Vector6::zeros())?;
    let mut r = Unknowns::zeros();
    r.fixed_rows_mut::<3>(0).copy_from(&d.v);
    r.fixed_rows_mut::<3>(3).copy_from(&d.omega);
    r[6] = d.theta[0];
    r[7] = d.theta[1];
    r[8] = x.v.norm() - spec.airspeed;
    r[9] = x.v.y;
    r[10] = d.p.z + spec.airspeed * spec.gamma.sin();
    r[11] = d.theta[2] - spec.yaw_rate();
    Ok(r)
}

/// Dynamic part of the residual: ‖(v̇, ω̇, φ̇, θ̇)‖∞.
pub fn dynamic_residual(model: &AircraftModel, trim: &TrimPoint) -> Result<f64, DynamicsError> {
    let x = trim.state(Vector3::zeros(), 0.0);
    let d = state_derivative(model, &x, &trim.delta_cmd, &Vector3::zeros(), &Vector6::zeros())?;
    Ok(d.v.amax().max(d.omega.amax()).max(d.theta[0].abs()).max(d.theta[1].abs()))
}

fn initial_guess(model: &AircraftModel, spec: &TrimSpec) -> Unknowns {
    let g = model.constants.gravity;
    let yaw_rate = spec.yaw_rate();
    let phi = (spec.airspeed * yaw_rate / g).atan();
    let alpha = 0.05;
    let theta = spec.gamma + alpha;
    let mut z = Unknowns::zeros();
    z[0] = phi;
    z[1] = theta;
    z[2] = spec.airspeed * alpha.cos();
    z[4] = spec.airspeed * alpha.sin();
    z[5] = -yaw_rate * theta.sin();
    z[6] = yaw_rate * phi.sin() * theta.cos();
    z[7] = yaw_rate * phi.cos() * theta.cos();
    z[8] = 0.05;
    z[11] = 10.0;
    z
}

fn jacobian(model: &AircraftModel, spec: &TrimSpec, z: &Unknowns) -> Result<SMatrix<f64, N, N>, DynamicsError> {
    let mut jac = SMatrix::<f64, N, N>::zeros();
    for j in 0..N {
        let h = 1e-6 * z[j].abs().max(1.0);
        let mut zp = *z;
        let mut zm = *z;
        zp[j] += h;
        zm[j] -= h;
        let col = (residual(model, spec, &zp)? - residual(model, spec, &zm)?) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Solves for the coordinated-turn equilibrium described by `spec`.
pub fn solve_trim(model: &AircraftModel, spec: &TrimSpec, opts: &TrimOptions) -> Result<TrimPoint, TrimError> {
    let mut z = initial_guess(model, spec);
    let mut r = residual(model, spec, &z)?;
    let mut iterations = 0;
    while r.amax() > opts.tolerance {
        if iterations >= opts.max_iterations {
            return Err(TrimError::NoConvergence { iterations, residual: r.amax() });
        }
        iterations += 1;
        let jac = jacobian(model, spec, &z)?;
        let step = jac
            .lu()
            .solve(&(-r))
            .ok_or(TrimError::NoConvergence { iterations, residual: r.amax() })?;

        // Backtracking on the residual 2-norm.
        let base = r.norm();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = z + step * scale;
            if let Ok(rt) = residual(model, spec, &trial) {
                if rt.norm() < base || rt.amax() <= opts.tolerance {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((zn, rn)) => {
                z = zn;
                r = rn;
            }
            None => {
                // Stalled at round-off: accept if already well inside the dynamic tolerance.
                if r.amax() < 1e-9 {
                    break;
                }
                return Err(TrimError::NoConvergence { iterations, residual: r.amax() });
            }
        }
    }

    let (x, cmd) = unpack(&z);
    if !x.is_finite() || x.theta[1].cos() < 1e-3 {
        return Err(TrimError::NoConvergence { iterations, residual: r.amax() });
    }
    let act = &model.actuators;
    for ch in 0..4 {
        if cmd[ch] <= act.cmd_min[ch] || cmd[ch] >= act.cmd_max[ch] {
            return Err(TrimError::Saturated { channel: ch, value: cmd[ch] });
        }
    }
    let mut trim = TrimPoint {
        spec: *spec,
        phi: x.theta[0],
        theta: x.theta[1],
        v: x.v,
        omega: x.omega,
        delta: cmd,
        delta_cmd: cmd,
        residual: 0.0,
        iterations,
    };
    trim.residual = dynamic_residual(model, &trim)?;
    Ok(trim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn straight_and_level_has_no_sideslip_or_rates() {
        let model = AircraftModel::default();
        let t = solve_trim(&model, &TrimSpec::new(0.0, 0.0), &TrimOptions::default()).unwrap();
        assert!(t.residual < 1e-8);
        // The side-force intercept is balanced by a small bank.
        assert!(t.phi.abs() < 0.1);
        let x = t.state(Vector3::zeros(), 0.0);
        let (f, _, _) = crate::dynamics::body_loads(&model, &x, &Vector3::zeros(), &Vector6::zeros()).unwrap();
        let lateral_gravity = 9.81 * t.phi.sin() * t.theta.cos();
        assert_abs_diff_eq!(f.y / model.constants.mass + lateral_gravity, 0.0, epsilon = 1e-8);
        assert!(t.v.y.abs() < 1e-9);
        assert!(t.omega.amax() < 1e-9);
        assert_abs_diff_eq!(t.v.norm(), 21.0, epsilon = 1e-9);
    }

    #[test]
    fn climbing_turn_kinematics() {
        let model = AircraftModel::default();
        let spec = TrimSpec::new(0.02, 0.21);
        let t = solve_trim(&model, &spec, &TrimOptions::default()).unwrap();
        assert!(t.residual < 1e-8, "residual {}", t.residual);
        let x = t.state(Vector3::zeros(), 0.3);
        let d = state_derivative(&model, &x, &t.delta_cmd, &Vector3::zeros(), &Vector6::zeros()).unwrap();
        assert_abs_diff_eq!(d.theta[2], 0.02 * 21.0 * 0.21_f64.cos(), epsilon = 1e-6);
        assert_abs_diff_eq!(d.p.z, -21.0 * 0.21_f64.sin(), epsilon = 1e-6);
        // Horizontal radius of curvature.
        let horizontal = (d.p.x * d.p.x + d.p.y * d.p.y).sqrt();
        assert_abs_diff_eq!(horizontal / d.theta[2], 50.0, epsilon = 1e-4);
    }

    #[test]
    fn tight_turn_is_unflyable() {
        let model = AircraftModel::default();
        assert!(solve_trim(&model, &TrimSpec::new(0.5, 0.0), &TrimOptions::default()).is_err());
    }
}
