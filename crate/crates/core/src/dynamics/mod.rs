//! CZ-150 rigid-body model: kinematics, aerodynamics, actuators and a
//! fixed-step RK4 integrator.
//!
//! All functions are pure; wind and coefficient offsets are treated as
//! constant inputs for the duration of a call.

mod actuator;
mod aero;
mod kinematics;
mod params;
mod state;

pub use actuator::{actuator_derivative, pwm_to_command, saturate};
pub use aero::{aero_coefficients, air_data, forces_moments, AirData, MIN_AIRSPEED};
pub use kinematics::{euler_rate_matrix, rotation_matrix, wrap_angle, EULER_SINGULARITY_TOL};
pub use params::{
    ActuatorModel, AeroCoefficientSet, AircraftModel, AxialForceCoefficients, NormalForceCoefficients,
    PhysicalConstants, PitchMomentCoefficients, RollMomentCoefficients, SideForceCoefficients,
    YawMomentCoefficients,
};
pub use state::{VehicleState, STATE_DIM};

use nalgebra::{Vector3, Vector4, Vector6};

use crate::error::DynamicsError;

/// Aerodynamic + thrust force and moment acting on the body at state `x`.
pub fn body_loads(
    model: &AircraftModel,
    x: &VehicleState,
    wind: &Vector3<f64>,
    offsets: &Vector6<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>, AirData), DynamicsError> {
    let air = air_data(&model.constants, &x.v, &x.theta, wind, &x.omega, x.delta[3])?;
    let coeffs = aero_coefficients(&model.aero, &air, &x.delta, offsets);
    let (f, m) = forces_moments(&model.constants, &coeffs, &air);
    Ok((f, m, air))
}

/// Specific force F/m in the body frame, i.e. what an ideal accelerometer reads.
pub fn specific_force(
    model: &AircraftModel,
    x: &VehicleState,
    wind: &Vector3<f64>,
    offsets: &Vector6<f64>,
) -> Result<Vector3<f64>, DynamicsError> {
    let (f, _, _) = body_loads(model, x, wind, offsets)?;
    Ok(f / model.constants.mass)
}

/// Full 16-state time derivative.
///
/// `cmd` is the commanded input fed to the actuator lags; callers are
/// responsible for saturating it.
pub fn state_derivative(
    model: &AircraftModel,
    x: &VehicleState,
    cmd: &Vector4<f64>,
    wind: &Vector3<f64>,
    offsets: &Vector6<f64>,
) -> Result<VehicleState, DynamicsError> {
    let c = &model.constants;
    let r_ib = rotation_matrix(&x.theta);
    let eps = euler_rate_matrix(x.theta[0], x.theta[1])?;
    let (f, m, _) = body_loads(model, x, wind, offsets)?;

    let gravity = r_ib.transpose() * Vector3::new(0.0, 0.0, c.gravity);
    let j = c.inertia();
    // The symmetric-plane tensor is validated positive definite.
    let j_inv = j.try_inverse().ok_or(DynamicsError::NonFinite)?;

    let rates = VehicleState {
        p: r_ib * x.v,
        v: x.v.cross(&x.omega) + gravity + f / c.mass,
        theta: eps * x.omega,
        omega: j_inv * ((j * x.omega).cross(&x.omega) + m),
        delta: actuator_derivative(&model.actuators, &x.delta, cmd),
    };
    if rates.is_finite() {
        Ok(rates)
    } else {
        Err(DynamicsError::NonFinite)
    }
}

/// One classical RK4 step with `cmd`, `wind` and `offsets` held over the step.
pub fn rk4_step(
    model: &AircraftModel,
    x: &VehicleState,
    cmd: &Vector4<f64>,
    wind: &Vector3<f64>,
    offsets: &Vector6<f64>,
    dt: f64,
) -> Result<VehicleState, DynamicsError> {
    debug_assert!(dt > 0.0);
    let k1 = state_derivative(model, x, cmd, wind, offsets)?;
    let k2 = state_derivative(model, &x.offset(&k1, 0.5 * dt), cmd, wind, offsets)?;
    let k3 = state_derivative(model, &x.offset(&k2, 0.5 * dt), cmd, wind, offsets)?;
    let k4 = state_derivative(model, &x.offset(&k3, dt), cmd, wind, offsets)?;

    let a = x.to_array();
    let (k1, k2, k3, k4) = (k1.to_array(), k2.to_array(), k3.to_array(), k4.to_array());
    let mut out = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        out[i] = a[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let next = VehicleState::from_array(&out);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DynamicsError::NonFinite)
    }
}
