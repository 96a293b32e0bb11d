//! Sensor noise, steady wind, Dryden gusts, input delay and the
//! aerodynamic-perturbation bounds.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3, Vector4, Vector6};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::measurement::{Measurement, MEAS_DIM};

const KNOT: f64 = 0.514444;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub enabled: bool,
    pub rates: f64,
    pub airspeed: f64,
    pub roll_pitch: f64,
    pub heading: f64,
    pub horizontal_position: f64,
    pub vertical_position: f64,
    pub specific_force: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            enabled: true,
            rates: 0.01,
            airspeed: 2.0,
            roll_pitch: 0.01,
            heading: 0.1,
            horizontal_position: 0.03,
            vertical_position: 0.01,
            specific_force: 0.03,
        }
    }
}

impl NoiseModel {
    /// Per-channel std devs in measurement order.
    pub fn sigmas(&self) -> Measurement {
        if !self.enabled {
            return [0.0; MEAS_DIM];
        }
        let (w, f) = (self.rates, self.specific_force);
        let (a, h) = (self.roll_pitch, self.horizontal_position);
        [w, w, w, self.airspeed, a, a, self.heading, h, h, self.vertical_position, f, f, f]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sigmas().iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ConfigError::Invalid("noise std devs must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn apply<R: Rng + ?Sized>(&self, y: &Measurement, rng: &mut R) -> Measurement {
        let sigma = self.sigmas();
        let mut out = *y;
        if !self.enabled {
            return out;
        }
        for (o, s) in out.iter_mut().zip(sigma) {
            let n: f64 = StandardNormal.sample(rng);
            *o += s * n;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindSettings {
    pub steady: bool,
    pub min_speed: f64,
    pub max_speed: f64,
    pub gusts: bool,
    /// Reference wind speed at 20 ft (m/s).
    pub w20: f64,
    /// Altitude at which the turbulence scales are evaluated (m).
    pub altitude: f64,
}

impl Default for WindSettings {
    fn default() -> Self {
        Self { steady: true, min_speed: 3.0, max_speed: 7.0, gusts: true, w20: 30.0 * KNOT, altitude: 50.0 }
    }
}

impl WindSettings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0 <= self.min_speed && self.min_speed <= self.max_speed && self.max_speed.is_finite()) {
            return Err(ConfigError::Invalid("wind speed range must satisfy 0 <= min <= max".into()));
        }
        if !(self.w20 >= 0.0 && self.altitude > 0.0) {
            return Err(ConfigError::Invalid("turbulence needs w20 >= 0 and altitude > 0".into()));
        }
        Ok(())
    }
}

/// Horizontal wind with uniform magnitude in `[min, max]` and uniform heading.
pub fn sample_steady_wind<R: Rng + ?Sized>(rng: &mut R, min_speed: f64, max_speed: f64) -> Vector3<f64> {
    let speed = if max_speed > min_speed { rng.random_range(min_speed..=max_speed) } else { min_speed };
    let heading = rng.random_range(0.0..TAU);
    Vector3::new(speed * heading.cos(), speed * heading.sin(), 0.0)
}

/// Low-altitude turbulence scale lengths and intensities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrydenScales {
    pub length_u: f64,
    pub length_v: f64,
    pub length_w: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub sigma_w: f64,
}

impl DrydenScales {
    pub fn low_altitude(altitude: f64, w20: f64) -> Self {
        let base = 0.177 + 0.000823 * altitude;
        let length = altitude / base.powf(1.2);
        let sigma_w = 0.1 * w20;
        let sigma_uv = sigma_w / base.powf(0.4);
        Self {
            length_u: length,
            length_v: length,
            length_w: altitude,
            sigma_u: sigma_uv,
            sigma_v: sigma_uv,
            sigma_w,
        }
    }
}

/// Discrete first-order (longitudinal) and second-order (lateral/vertical)
/// shaping filters for one (airspeed, dt) pair.
#[derive(Debug, Clone, Copy)]
struct DiscreteFilters {
    airspeed: f64,
    dt: f64,
    u_a: f64,
    u_b: f64,
    u_c: f64,
    v: SecondOrder,
    w: SecondOrder,
}

#[derive(Debug, Clone, Copy)]
struct SecondOrder {
    a: nalgebra::Matrix2<f64>,
    b: nalgebra::Vector2<f64>,
    c: nalgebra::RowVector2<f64>,
}

/// ZOH discretization of K(1 + √3·T·s)/(1 + T·s)².
fn second_order(sigma: f64, t: f64, dt: f64) -> SecondOrder {
    let gain = sigma * t.sqrt();
    let mut aug = Matrix3::zeros();
    aug[(0, 1)] = 1.0;
    aug[(1, 0)] = -1.0 / (t * t);
    aug[(1, 1)] = -2.0 / t;
    aug[(1, 2)] = 1.0 / (t * t);
    let e = (aug * dt).exp();
    SecondOrder {
        a: e.fixed_view::<2, 2>(0, 0).into_owned(),
        b: e.fixed_view::<2, 1>(0, 2).into_owned(),
        c: nalgebra::RowVector2::new(gain, gain * 3.0_f64.sqrt() * t),
    }
}

impl DiscreteFilters {
    fn new(scales: &DrydenScales, airspeed: f64, dt: f64) -> Self {
        let tu = scales.length_u / airspeed;
        let u_a = (-dt / tu).exp();
        Self {
            airspeed,
            dt,
            u_a,
            u_b: 1.0 - u_a,
            u_c: scales.sigma_u * (2.0 * tu).sqrt(),
            v: second_order(scales.sigma_v, scales.length_v / airspeed, dt),
            w: second_order(scales.sigma_w, scales.length_w / airspeed, dt),
        }
    }
}

/// Dryden gust generator producing gusts along (heading, right, down).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrydenGust {
    scales: (f64, f64, f64, f64, f64, f64),
    u: f64,
    v: [f64; 2],
    w: [f64; 2],
    #[serde(skip)]
    cache: Option<DiscreteFilters>,
}

impl PartialEq for DrydenGust {
    fn eq(&self, other: &Self) -> bool {
        self.scales == other.scales && self.u == other.u && self.v == other.v && self.w == other.w
    }
}

impl DrydenGust {
    pub fn new(scales: DrydenScales) -> Self {
        Self {
            scales: (scales.length_u, scales.length_v, scales.length_w, scales.sigma_u, scales.sigma_v, scales.sigma_w),
            u: 0.0,
            v: [0.0; 2],
            w: [0.0; 2],
            cache: None,
        }
    }

    pub fn from_settings(settings: &WindSettings) -> Self {
        Self::new(DrydenScales::low_altitude(settings.altitude, settings.w20))
    }

    pub fn scales(&self) -> DrydenScales {
        let s = self.scales;
        DrydenScales { length_u: s.0, length_v: s.1, length_w: s.2, sigma_u: s.3, sigma_v: s.4, sigma_w: s.5 }
    }

    pub fn reset(&mut self) {
        self.u = 0.0;
        self.v = [0.0; 2];
        self.w = [0.0; 2];
    }

    fn filters(&mut self, airspeed: f64, dt: f64) -> DiscreteFilters {
        match self.cache {
            Some(f) if f.airspeed == airspeed && f.dt == dt => f,
            _ => {
                let f = DiscreteFilters::new(&self.scales(), airspeed, dt);
                self.cache = Some(f);
                f
            }
        }
    }

    /// Current gust without advancing the filters.
    pub fn output(&mut self, airspeed: f64, dt: f64) -> Vector3<f64> {
        let f = self.filters(airspeed, dt);
        Vector3::new(
            f.u_c * self.u,
            (f.v.c * nalgebra::Vector2::from(self.v))[0],
            (f.w.c * nalgebra::Vector2::from(self.w))[0],
        )
    }

    /// Advances the filters with the given white-noise samples held over `dt`
    /// and returns the new gust.
    pub fn step_with_noise(&mut self, airspeed: f64, dt: f64, noise: &Vector3<f64>) -> Vector3<f64> {
        let f = self.filters(airspeed, dt);
        let scale = 1.0 / dt.sqrt();
        self.u = f.u_a * self.u + f.u_b * noise[0] * scale;
        let v = f.v.a * nalgebra::Vector2::from(self.v) + f.v.b * noise[1] * scale;
        let w = f.w.a * nalgebra::Vector2::from(self.w) + f.w.b * noise[2] * scale;
        self.v = [v[0], v[1]];
        self.w = [w[0], w[1]];
        self.output(airspeed, dt)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, airspeed: f64, dt: f64, rng: &mut R) -> Vector3<f64> {
        let noise = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        self.step_with_noise(airspeed, dt, &noise)
    }
}

/// Rotates a (heading, right, down) gust into the inertial frame.
pub fn gust_to_inertial(gust: &Vector3<f64>, heading: f64) -> Vector3<f64> {
    let (s, c) = heading.sin_cos();
    Vector3::new(c * gust.x - s * gust.y, s * gust.x + c * gust.y, gust.z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationBounds {
    pub amplitude_min: [f64; 6],
    pub amplitude_max: [f64; 6],
    pub rate_min: [f64; 6],
    pub rate_max: [f64; 6],
}

impl Default for PerturbationBounds {
    fn default() -> Self {
        let amp = [0.0258, 0.0510, 0.0872, 0.0204, 0.0330, 0.0084];
        Self {
            amplitude_min: amp.map(|a| -a),
            amplitude_max: amp,
            rate_min: [-0.0180, -0.0289, -0.0598, -0.0128, -0.0299, -0.0044],
            rate_max: [0.0175, 0.0287, 0.0606, 0.0128, 0.0299, 0.0044],
        }
    }
}

impl PerturbationBounds {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for i in 0..6 {
            let ok = self.amplitude_min[i] <= 0.0
                && 0.0 <= self.amplitude_max[i]
                && self.amplitude_min[i] < self.amplitude_max[i]
                && self.rate_min[i] <= 0.0
                && 0.0 <= self.rate_max[i]
                && self.rate_min[i] < self.rate_max[i];
            if !ok {
                return Err(ConfigError::Invalid(format!("perturbation bounds invalid on component {i}")));
            }
        }
        Ok(())
    }

    /// Clips the increment into the rate bounds, then the sum into the amplitude bounds.
    pub fn clamp(&self, prev: &Vector6<f64>, raw_step: &Vector6<f64>) -> Vector6<f64> {
        Vector6::from_fn(|i, _| {
            let step = raw_step[i].clamp(self.rate_min[i], self.rate_max[i]);
            (prev[i] + step).clamp(self.amplitude_min[i], self.amplitude_max[i])
        })
    }

    /// Maps a normalized action in [−1, 1] to an increment, with 0 → 0,
    /// +1 → ν⁺ and −1 → ν⁻.
    pub fn action_to_step(&self, action: &Vector6<f64>) -> Vector6<f64> {
        Vector6::from_fn(|i, _| {
            let a = action[i].clamp(-1.0, 1.0);
            if a >= 0.0 {
                a * self.rate_max[i]
            } else {
                -a * self.rate_min[i]
            }
        })
    }

    /// Increment drawn uniformly from the rate box.
    pub fn random_step<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector6<f64> {
        Vector6::from_fn(|i, _| rng.random_range(self.rate_min[i]..=self.rate_max[i]))
    }

    /// Maps Δ_C into [−1, 1] against the amplitude box.
    pub fn normalize(&self, delta: &Vector6<f64>) -> Vector6<f64> {
        Vector6::from_fn(|i, _| {
            let (lo, hi) = (self.amplitude_min[i], self.amplitude_max[i]);
            2.0 * (delta[i] - lo) / (hi - lo) - 1.0
        })
    }

    pub fn contains(&self, delta: &Vector6<f64>) -> bool {
        (0..6).all(|i| self.amplitude_min[i] <= delta[i] && delta[i] <= self.amplitude_max[i])
    }

    pub fn step_within_rate(&self, prev: &Vector6<f64>, next: &Vector6<f64>) -> bool {
        (0..6).all(|i| {
            let d = next[i] - prev[i];
            // Exact difference may round by an ulp at the bound.
            let tol = 4.0 * f64::EPSILON * (prev[i].abs() + next[i].abs());
            self.rate_min[i] - tol <= d && d <= self.rate_max[i] + tol
        })
    }
}

/// Fixed-depth FIFO on commanded inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayLine {
    delay: usize,
    buffer: VecDeque<Vector4<f64>>,
}

impl DelayLine {
    pub fn new(delay: usize, init: Vector4<f64>) -> Self {
        Self { delay, buffer: std::iter::repeat_n(init, delay).collect() }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn push_pop(&mut self, cmd: Vector4<f64>) -> Vector4<f64> {
        if self.delay == 0 {
            return cmd;
        }
        self.buffer.push_back(cmd);
        self.buffer.pop_front().expect("buffer holds delay entries")
    }
}

/// Per-episode delay, uniform over `0..=max_delay` steps.
pub fn sample_delay<R: Rng + ?Sized>(rng: &mut R, max_delay: usize) -> usize {
    rng.random_range(0..=max_delay)
}
