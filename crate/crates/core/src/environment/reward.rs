//! Normalization, control margin and the zero-sum reward terms.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::error::EnvError;
use crate::measurement::{idx, Measurement};

/// Affine map of `x` from `[lo, hi]` onto `[−1, 1]`.
pub fn normalize(x: f64, lo: f64, hi: f64) -> f64 {
    2.0 * (x - lo) / (hi - lo) - 1.0
}

pub fn denormalize(z: f64, lo: f64, hi: f64) -> f64 {
    lo + 0.5 * (z + 1.0) * (hi - lo)
}

/// Per-channel distance from saturation: 1 at the reference command, 0 at a limit.
pub fn control_margin(
    cmd: &Vector4<f64>,
    reference: &Vector4<f64>,
    lower: &Vector4<f64>,
    upper: &Vector4<f64>,
) -> Result<Vector4<f64>, EnvError> {
    for ch in 0..4 {
        if !(lower[ch] < reference[ch] && reference[ch] < upper[ch]) {
            return Err(EnvError::DegenerateMargin { channel: ch });
        }
    }
    Ok(margin_unchecked(cmd, reference, lower, upper))
}

pub(crate) fn margin_unchecked(
    cmd: &Vector4<f64>,
    reference: &Vector4<f64>,
    lower: &Vector4<f64>,
    upper: &Vector4<f64>,
) -> Vector4<f64> {
    Vector4::from_fn(|i, _| {
        let up = ((upper[i] - cmd[i]) / (upper[i] - reference[i])).max(0.0);
        let down = ((cmd[i] - lower[i]) / (reference[i] - lower[i])).max(0.0);
        up.min(down)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    /// (k₁, k₂) for body rates.
    pub rates: (f64, f64),
    pub attitude: (f64, f64),
    pub position: (f64, f64),
    /// k₃
    pub barrier: f64,
    /// k₄
    pub input_rate: f64,
    pub barrier_offset: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            rates: (0.1, 1.0),
            attitude: (0.2, 5.0),
            position: (0.5, 0.37),
            barrier: 0.05,
            input_rate: 0.2,
            barrier_offset: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub tracking: f64,
    pub barrier: f64,
    pub input_rate: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// Reward seen by the adversary.
    pub fn adversary(&self) -> f64 {
        -self.total
    }
}

impl RewardWeights {
    /// Σ k₁ e^(−k₂|ȳ|) over rates, attitude and position errors.
    pub fn tracking(&self, err: &Measurement) -> f64 {
        let term = |(k1, k2): (f64, f64), e: f64| k1 * (-k2 * e.abs()).exp();
        let mut r = 0.0;
        for i in idx::RATES {
            r += term(self.rates, err[i]);
        }
        for i in idx::ATTITUDE {
            r += term(self.attitude, err[i]);
        }
        for i in idx::POSITION {
            r += term(self.position, err[i]);
        }
        r
    }

    /// Barrier and rate terms; `input_change` is in normalized units.
    pub fn input(&self, margin: &Vector4<f64>, input_change: &Vector4<f64>) -> (f64, f64) {
        let barrier = self.barrier * margin.iter().map(|m| (m + self.barrier_offset).ln()).sum::<f64>();
        (barrier, -self.input_rate * input_change.norm_squared())
    }

    pub fn breakdown(&self, err: &Measurement, margin: &Vector4<f64>, input_change: &Vector4<f64>) -> RewardBreakdown {
        let tracking = self.tracking(err);
        let (barrier, input_rate) = self.input(margin, input_change);
        RewardBreakdown { tracking, barrier, input_rate, total: tracking + barrier + input_rate }
    }

    /// Largest attainable total reward.
    pub fn upper_bound(&self) -> f64 {
        3.0 * (self.rates.0 + self.attitude.0 + self.position.0) + 4.0 * self.barrier * (1.0 + self.barrier_offset).ln()
    }
}
