//! The 13-channel sensor vector y = [ω, V_r, θ, p, f_b].

use nalgebra::{Vector3, Vector6};

use crate::dynamics::{air_data, specific_force, AircraftModel, VehicleState};
use crate::error::DynamicsError;

pub const MEAS_DIM: usize = 13;

pub type Measurement = [f64; MEAS_DIM];

/// Index ranges into a [`Measurement`].
pub mod idx {
    use std::ops::Range;
    pub const RATES: Range<usize> = 0..3;
    pub const AIRSPEED: usize = 3;
    pub const ATTITUDE: Range<usize> = 4..7;
    pub const HEADING: usize = 6;
    pub const POSITION: Range<usize> = 7..10;
    pub const SPECIFIC_FORCE: Range<usize> = 10..13;
}

/// Noise-free measurement of the state `x` in the given wind and coefficient offsets.
pub fn measure(
    model: &AircraftModel,
    x: &VehicleState,
    wind: &Vector3<f64>,
    offsets: &Vector6<f64>,
) -> Result<Measurement, DynamicsError> {
    let air = air_data(&model.constants, &x.v, &x.theta, wind, &x.omega, x.delta[3])?;
    let f = specific_force(model, x, wind, offsets)?;
    let mut y = [0.0; MEAS_DIM];
    y[idx::RATES].copy_from_slice(x.omega.as_slice());
    y[idx::AIRSPEED] = air.airspeed;
    y[idx::ATTITUDE].copy_from_slice(x.theta.as_slice());
    y[idx::POSITION].copy_from_slice(x.p.as_slice());
    y[idx::SPECIFIC_FORCE].copy_from_slice(f.as_slice());
    Ok(y)
}
