//! CZ-150 model parameters.
//!
//! Every `Default` impl in this file reproduces the identified CZ-150 airframe:
//! inertial/geometric properties, the 32 aerodynamic coefficients, the PWM
//! polynomial maps and the first-order actuator lags. The JSON form of
//! [`AircraftModel`] is the model-parameter config file; missing keys fall back
//! to these defaults and unknown keys are rejected.

use std::path::Path;

use nalgebra::{Matrix3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConstants {
    /// kg
    pub mass: f64,
    /// Mean aerodynamic chord, m.
    pub chord: f64,
    /// Wingspan, m.
    pub span: f64,
    /// Wing reference area, m².
    pub area: f64,
    /// Propeller diameter, m.
    pub prop_diameter: f64,
    pub j_xx: f64,
    pub j_yy: f64,
    pub j_zz: f64,
    pub j_xz: f64,
    /// m/s²
    pub gravity: f64,
    /// kg/m³
    pub air_density: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            mass: 4.90,
            chord: 0.320,
            span: 2.12,
            area: 0.680,
            prop_diameter: 0.406,
            j_xx: 0.546,
            j_yy: 0.430,
            j_zz: 0.801,
            j_xz: 0.066,
            gravity: 9.81,
            air_density: 1.225,
        }
    }
}

impl PhysicalConstants {
    /// Body-frame inertia tensor with x–z plane symmetry (J_xy = J_yz = 0).
    pub fn inertia(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.j_xx, 0.0, -self.j_xz, //
            0.0, self.j_yy, 0.0, //
            -self.j_xz, 0.0, self.j_zz,
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let geometric = [
            ("mass", self.mass),
            ("chord", self.chord),
            ("span", self.span),
            ("area", self.area),
            ("prop_diameter", self.prop_diameter),
            ("gravity", self.gravity),
            ("air_density", self.air_density),
        ];
        for (name, value) in geometric {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {value}")));
            }
        }
        // Positive definiteness of the symmetric-plane tensor.
        let xz_minor = self.j_xx * self.j_zz - self.j_xz * self.j_xz;
        if !(self.j_xx > 0.0 && self.j_yy > 0.0 && xz_minor > 0.0) {
            return Err(ConfigError::Invalid("inertia tensor is not positive definite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxialForceCoefficients {
    pub alpha2: f64,
    pub inv_advance: f64,
    pub inv_advance2: f64,
    pub elevator_alpha: f64,
    pub zero: f64,
}

impl Default for AxialForceCoefficients {
    fn default() -> Self {
        Self { alpha2: 3.82, inv_advance: 0.111, inv_advance2: 0.0575, elevator_alpha: 1.08, zero: -0.00680 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SideForceCoefficients {
    pub beta: f64,
    pub roll_rate: f64,
    pub yaw_rate: f64,
    pub aileron: f64,
    pub rudder: f64,
    pub zero: f64,
}

impl Default for SideForceCoefficients {
    fn default() -> Self {
        Self { beta: -0.613, roll_rate: -0.136, yaw_rate: -0.284, aileron: -0.131, rudder: 0.0481, zero: 0.0214 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalForceCoefficients {
    pub alpha: f64,
    pub pitch_rate: f64,
    pub elevator: f64,
    pub zero: f64,
}

impl Default for NormalForceCoefficients {
    fn default() -> Self {
        Self { alpha: -4.925, pitch_rate: 16.9, elevator: -0.161, zero: 0.0296 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollMomentCoefficients {
    pub beta: f64,
    pub roll_rate: f64,
    pub yaw_rate: f64,
    pub aileron: f64,
    pub zero: f64,
}

impl Default for RollMomentCoefficients {
    fn default() -> Self {
        Self { beta: -0.0530, roll_rate: -0.215, yaw_rate: 0.0326, aileron: -0.0758, zero: -0.0002 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PitchMomentCoefficients {
    pub alpha: f64,
    pub alpha3: f64,
    pub pitch_rate: f64,
    pub elevator: f64,
    pub pitch_rate_elevator: f64,
    pub zero: f64,
}

impl Default for PitchMomentCoefficients {
    fn default() -> Self {
        Self { alpha: -0.356, alpha3: 1.85, pitch_rate: -1.59, elevator: -0.197, pitch_rate_elevator: 9.71, zero: 0.0340 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YawMomentCoefficients {
    pub beta: f64,
    pub roll_rate: f64,
    pub yaw_rate: f64,
    pub aileron: f64,
    pub rudder: f64,
    pub zero: f64,
}

impl Default for YawMomentCoefficients {
    fn default() -> Self {
        Self { beta: 0.0390, roll_rate: 0.00470, yaw_rate: -0.0991, aileron: 0.0150, rudder: -0.0259, zero: 0.00004 }
    }
}

/// The six polynomial expansions C_X … C_N.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeroCoefficientSet {
    pub x: AxialForceCoefficients,
    pub y: SideForceCoefficients,
    pub z: NormalForceCoefficients,
    pub l: RollMomentCoefficients,
    pub m: PitchMomentCoefficients,
    pub n: YawMomentCoefficients,
}

impl AeroCoefficientSet {
    /// Every coefficient set to zero; useful to isolate rigid-body terms.
    pub fn zeroed() -> Self {
        Self {
            x: AxialForceCoefficients { alpha2: 0.0, inv_advance: 0.0, inv_advance2: 0.0, elevator_alpha: 0.0, zero: 0.0 },
            y: SideForceCoefficients { beta: 0.0, roll_rate: 0.0, yaw_rate: 0.0, aileron: 0.0, rudder: 0.0, zero: 0.0 },
            z: NormalForceCoefficients { alpha: 0.0, pitch_rate: 0.0, elevator: 0.0, zero: 0.0 },
            l: RollMomentCoefficients { beta: 0.0, roll_rate: 0.0, yaw_rate: 0.0, aileron: 0.0, zero: 0.0 },
            m: PitchMomentCoefficients {
                alpha: 0.0,
                alpha3: 0.0,
                pitch_rate: 0.0,
                elevator: 0.0,
                pitch_rate_elevator: 0.0,
                zero: 0.0,
            },
            n: YawMomentCoefficients { beta: 0.0, roll_rate: 0.0, yaw_rate: 0.0, aileron: 0.0, rudder: 0.0, zero: 0.0 },
        }
    }

    /// The constant terms (C_X0, C_Y0, C_Z0, C_L0, C_M0, C_N0).
    pub fn intercepts(&self) -> [f64; 6] {
        [self.x.zero, self.y.zero, self.z.zero, self.l.zero, self.m.zero, self.n.zero]
    }
}

/// Static PWM maps, actuator lags and saturation limits, channels ordered
/// (elevator, aileron, rudder, throttle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorModel {
    /// Cubic coefficients `[c0, c1, c2, c3]`, output in degrees.
    pub elevator_pwm: [f64; 4],
    pub aileron_pwm: [f64; 4],
    pub rudder_pwm: [f64; 4],
    /// Linear coefficients `[c0, c1]`, output in rev/min.
    pub throttle_pwm: [f64; 2],
    /// Time constants (s).
    pub time_constants: [f64; 4],
    pub cmd_min: [f64; 4],
    pub cmd_max: [f64; 4],
}

impl Default for ActuatorModel {
    fn default() -> Self {
        Self {
            elevator_pwm: [-8.87e-1, 7.21e-2, -9.54e-6, -8.24e-8],
            aileron_pwm: [-2.56e-1, -6.24e-2, 1.08e-8, -3.98e-8],
            rudder_pwm: [-7.40e-1, 1.16e-1, 7.58e-6, -2.72e-7],
            throttle_pwm: [2.91e3, 6.56e3],
            time_constants: [0.071, 0.083, 0.071, 0.082],
            cmd_min: [-0.35, -0.30, -0.35, -60.0],
            cmd_max: [0.35, 0.30, 0.35, 110.0],
        }
    }
}

impl ActuatorModel {
    pub fn lower(&self) -> Vector4<f64> {
        Vector4::from(self.cmd_min)
    }

    pub fn upper(&self) -> Vector4<f64> {
        Vector4::from(self.cmd_max)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for i in 0..4 {
            if !(self.time_constants[i] > 0.0) {
                return Err(ConfigError::Invalid(format!("actuator time constant {i} must be positive")));
            }
            if !(self.cmd_min[i] < self.cmd_max[i]) {
                return Err(ConfigError::Invalid(format!("actuator limits for channel {i} are empty")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AircraftModel {
    pub constants: PhysicalConstants,
    pub aero: AeroCoefficientSet,
    pub actuators: ActuatorModel,
}

impl AircraftModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.constants.validate()?;
        self.actuators.validate()
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}
