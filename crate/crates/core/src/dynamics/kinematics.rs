use nalgebra::{Matrix3, Vector3};

use crate::error::DynamicsError;

/// |cos θ| below this is treated as gimbal lock.
pub const EULER_SINGULARITY_TOL: f64 = 1e-6;

/// R_Ib: body → inertial (NED) for Euler angles (φ, θ, ψ), 3-2-1 sequence.
pub fn rotation_matrix(att: &Vector3<f64>) -> Matrix3<f64> {
    let (sf, cf) = att[0].sin_cos();
    let (st, ct) = att[1].sin_cos();
    let (sp, cp) = att[2].sin_cos();
    Matrix3::new(
        ct * cp,
        sf * st * cp - cf * sp,
        cf * st * cp + sf * sp,
        ct * sp,
        sf * st * sp + cf * cp,
        cf * st * sp - sf * cp,
        -st,
        sf * ct,
        cf * ct,
    )
}

/// ε(φ, θ) mapping body rates to Euler-angle rates.
pub fn euler_rate_matrix(phi: f64, theta: f64) -> Result<Matrix3<f64>, DynamicsError> {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    if ct.abs() < EULER_SINGULARITY_TOL || !ct.is_finite() {
        return Err(DynamicsError::EulerSingularity { pitch: theta });
    }
    let tt = st / ct;
    Ok(Matrix3::new(
        1.0,
        sf * tt,
        cf * tt,
        0.0,
        cf,
        -sf,
        0.0,
        sf / ct,
        cf / ct,
    ))
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}
