use nalgebra::Vector4;

use super::params::ActuatorModel;

fn cubic(c: &[f64; 4], x: f64) -> f64 {
    ((c[3] * x + c[2]) * x + c[1]) * x + c[0]
}

/// Centered PWM → commanded inputs (rad for surfaces, rev/s for throttle).
pub fn pwm_to_command(model: &ActuatorModel, pwm: &Vector4<f64>) -> Vector4<f64> {
    let deg = std::f64::consts::PI / 180.0;
    Vector4::new(
        deg * cubic(&model.elevator_pwm, pwm[0]),
        deg * cubic(&model.aileron_pwm, pwm[1]),
        deg * cubic(&model.rudder_pwm, pwm[2]),
        (model.throttle_pwm[1] * pwm[3] + model.throttle_pwm[0]) / 60.0,
    )
}

/// First-order lag δ̇ = (δ_cmd − δ)/τ per channel.
pub fn actuator_derivative(model: &ActuatorModel, delta: &Vector4<f64>, cmd: &Vector4<f64>) -> Vector4<f64> {
    Vector4::from_fn(|i, _| (cmd[i] - delta[i]) / model.time_constants[i])
}

/// Clips a command into the configured saturation limits.
pub fn saturate(model: &ActuatorModel, cmd: &Vector4<f64>) -> Vector4<f64> {
    Vector4::from_fn(|i, _| cmd[i].clamp(model.cmd_min[i], model.cmd_max[i]))
}
