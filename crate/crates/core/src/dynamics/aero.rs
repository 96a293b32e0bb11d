//! Air data, aerodynamic coefficients and the resulting body forces/moments.

use nalgebra::{Vector3, Vector4, Vector6};

use super::kinematics::rotation_matrix;
use super::params::{AeroCoefficientSet, PhysicalConstants};
use crate::error::DynamicsError;

/// Airspeed floor below which the aerodynamic regressors are not meaningful.
pub const MIN_AIRSPEED: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirData {
    pub airspeed: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dynamic_pressure: f64,
    /// Nondimensional rates p̂, q̂, r̂.
    pub p_hat: f64,
    pub q_hat: f64,
    pub r_hat: f64,
    /// Inverse advance ratio δ_T·D_prop / V_r.
    pub inv_advance: f64,
    /// Air-relative body velocity.
    pub v_rel: Vector3<f64>,
}

/// Evaluates air data for body velocity `v` in an inertial wind field `wind`.
pub fn air_data(
    consts: &PhysicalConstants,
    v: &Vector3<f64>,
    att: &Vector3<f64>,
    wind: &Vector3<f64>,
    omega: &Vector3<f64>,
    throttle: f64,
) -> Result<AirData, DynamicsError> {
    let v_rel = v - rotation_matrix(att).transpose() * wind;
    let airspeed = v_rel.norm();
    if !airspeed.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    if airspeed <= MIN_AIRSPEED {
        return Err(DynamicsError::LowAirspeed { airspeed });
    }
    let half_v = 2.0 * airspeed;
    Ok(AirData {
        airspeed,
        alpha: v_rel.z.atan2(v_rel.x),
        beta: (v_rel.y / airspeed).clamp(-1.0, 1.0).asin(),
        dynamic_pressure: 0.5 * consts.air_density * airspeed * airspeed,
        p_hat: omega.x * consts.span / half_v,
        q_hat: omega.y * consts.chord / half_v,
        r_hat: omega.z * consts.span / half_v,
        inv_advance: throttle * consts.prop_diameter / airspeed,
        v_rel,
    })
}

/// (C_X, C_Y, C_Z, C_L, C_M, C_N) at the given air data and actuator state,
/// each shifted by the matching component of `offsets`.
pub fn aero_coefficients(
    c: &AeroCoefficientSet,
    air: &AirData,
    delta: &Vector4<f64>,
    offsets: &Vector6<f64>,
) -> Vector6<f64> {
    let (de, da, dr) = (delta[0], delta[1], delta[2]);
    let a = air.alpha;
    let b = air.beta;
    let j = air.inv_advance;
    let (ph, qh, rh) = (air.p_hat, air.q_hat, air.r_hat);

    let cx = c.x.alpha2 * a * a + c.x.inv_advance * j + c.x.inv_advance2 * j * j + c.x.elevator_alpha * de * a + c.x.zero;
    let cy = c.y.beta * b + c.y.roll_rate * ph + c.y.yaw_rate * rh + c.y.aileron * da + c.y.rudder * dr + c.y.zero;
    let cz = c.z.alpha * a + c.z.pitch_rate * qh + c.z.elevator * de + c.z.zero;
    let cl = c.l.beta * b + c.l.roll_rate * ph + c.l.yaw_rate * rh + c.l.aileron * da + c.l.zero;
    let cm = c.m.alpha * a
        + c.m.alpha3 * a * a * a
        + c.m.pitch_rate * qh
        + c.m.elevator * de
        + c.m.pitch_rate_elevator * qh * de
        + c.m.zero;
    let cn = c.n.beta * b + c.n.roll_rate * ph + c.n.yaw_rate * rh + c.n.aileron * da + c.n.rudder * dr + c.n.zero;

    Vector6::new(cx, cy, cz, cl, cm, cn) + offsets
}

/// Body force (N) and moment (N·m) from the coefficient vector.
pub fn forces_moments(consts: &PhysicalConstants, coeffs: &Vector6<f64>, air: &AirData) -> (Vector3<f64>, Vector3<f64>) {
    let qs = air.dynamic_pressure * consts.area;
    let force = Vector3::new(coeffs[0], coeffs[1], coeffs[2]) * qs;
    let moment = Vector3::new(coeffs[3] * qs * consts.span, coeffs[4] * qs * consts.chord, coeffs[5] * qs * consts.span);
    (force, moment)
}
