//! Tanh MLPs, a diagonal-Gaussian actor-critic and Adam.
//!
//! Parameters and gradients are flat `f64` buffers so a single optimizer and
//! global-norm clip cover the actor, its log-std and the critic.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::NnError;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Fully connected network with tanh on every hidden layer and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Layer inputs and hidden activations from one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("at least one layer")
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        Self { sizes }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offsets of (weight, bias) for each layer; weights are row-major `out × in`.
    fn offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut at = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let o = (at, at + n_in * n_out, n_in, n_out);
                at += n_in * n_out + n_out;
                o
            })
            .collect()
    }

    /// Orthogonal weights scaled by `hidden_gain` (last layer `output_gain`), zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, hidden_gain: f64, output_gain: f64) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        let offsets = self.offsets();
        let last = offsets.len() - 1;
        for (l, &(w, _, n_in, n_out)) in offsets.iter().enumerate() {
            let gain = if l == last { output_gain } else { hidden_gain };
            let q = orthogonal(rng, n_out, n_in);
            for r in 0..n_out {
                for c in 0..n_in {
                    params[w + r * n_in + c] = gain * q[(r, c)];
                }
            }
        }
        params
    }

    pub fn forward_cached(&self, params: &[f64], x: &[f64]) -> Result<Activations, NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::ShapeMismatch { expected: self.param_count(), got: params.len() });
        }
        if x.len() != self.input_dim() {
            return Err(NnError::ShapeMismatch { expected: self.input_dim(), got: x.len() });
        }
        let offsets = self.offsets();
        let last = offsets.len() - 1;
        let mut layers = Vec::with_capacity(offsets.len() + 1);
        layers.push(x.to_vec());
        for (l, &(w, b, n_in, n_out)) in offsets.iter().enumerate() {
            let input = layers.last().unwrap();
            let mut out = params[b..b + n_out].to_vec();
            for (r, o) in out.iter_mut().enumerate() {
                let row = &params[w + r * n_in..w + (r + 1) * n_in];
                *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if l != last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(out);
        }
        Ok(Activations { layers })
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_cached(params, x)?.layers.pop().unwrap())
    }

    /// Accumulates ∂L/∂params into `grad` given ∂L/∂output.
    pub fn backward(&self, params: &[f64], acts: &Activations, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.param_count());
        let offsets = self.offsets();
        let last = offsets.len() - 1;
        let mut delta = d_out.to_vec();
        for l in (0..offsets.len()).rev() {
            let (w, b, n_in, n_out) = offsets[l];
            if l != last {
                let a = &acts.layers[l + 1];
                for (d, y) in delta.iter_mut().zip(a) {
                    *d *= 1.0 - y * y;
                }
            }
            let input = &acts.layers[l];
            for r in 0..n_out {
                grad[b + r] += delta[r];
                let g = &mut grad[w + r * n_in..w + (r + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += delta[r] * xi;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for r in 0..n_out {
                    let row = &params[w + r * n_in..w + (r + 1) * n_in];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += delta[r] * wi;
                    }
                }
                delta = prev;
            }
        }
    }

    fn tensors(&self, prefix: &str, params: &[f64]) -> Vec<Tensor> {
        let mut out = Vec::new();
        for (l, (w, b, n_in, n_out)) in self.offsets().into_iter().enumerate() {
            out.push(Tensor { name: format!("{prefix}.{l}.weight"), shape: vec![n_out, n_in], data: params[w..b].to_vec() });
            out.push(Tensor { name: format!("{prefix}.{l}.bias"), shape: vec![n_out], data: params[b..b + n_out].to_vec() });
        }
        out
    }
}

fn orthogonal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let (n, m) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(n, m, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

/// Diagonal-Gaussian log-density and entropy.
pub fn log_prob_entropy(mean: &[f64], log_std: &[f64], action: &[f64]) -> (f64, f64) {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    let mut logp = 0.0;
    let mut entropy = 0.0;
    for ((m, s), a) in mean.iter().zip(log_std).zip(action) {
        let z = (a - m) / s.exp();
        logp += -0.5 * z * z - s - half_log_2pi;
        entropy += s + 0.5 + half_log_2pi;
    }
    (logp, entropy)
}

#[derive(Debug, Clone)]
pub struct PolicySample {
    /// Raw Gaussian draw, used for log-probabilities.
    pub action: Vec<f64>,
    /// Draw clipped to [−1, 1], sent to the environment.
    pub clipped: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

/// Separate actor and critic MLPs plus a state-independent log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    /// Flat layout: actor weights, log-std, critic weights.
    pub params: Vec<f64>,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![obs_dim];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let actor = Mlp::new(sizes(act_dim));
        let critic = Mlp::new(sizes(1));
        let sqrt2 = 2.0_f64.sqrt();
        let mut params = actor.init(rng, sqrt2, 0.01);
        params.extend(std::iter::repeat_n(0.0, act_dim));
        params.extend(critic.init(rng, sqrt2, 1.0));
        Self { actor, critic, params }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn actor_range(&self) -> std::ops::Range<usize> {
        0..self.actor.param_count()
    }

    pub fn log_std_range(&self) -> std::ops::Range<usize> {
        let a = self.actor.param_count();
        a..a + self.act_dim()
    }

    pub fn critic_range(&self) -> std::ops::Range<usize> {
        let s = self.log_std_range().end;
        s..s + self.critic.param_count()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.log_std_range()]
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        self.actor.forward(&self.params[self.actor_range()], obs)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64, NnError> {
        Ok(self.critic.forward(&self.params[self.critic_range()], obs)?[0])
    }

    pub fn actor_pass(&self, obs: &[f64]) -> Result<Activations, NnError> {
        self.actor.forward_cached(&self.params[self.actor_range()], obs)
    }

    pub fn critic_pass(&self, obs: &[f64]) -> Result<Activations, NnError> {
        self.critic.forward_cached(&self.params[self.critic_range()], obs)
    }

    /// Accumulates gradients of a loss with ∂L/∂mean = `d_mean` into `grad`.
    pub fn actor_backward(&self, pass: &Activations, d_mean: &[f64], grad: &mut [f64]) {
        let r = self.actor_range();
        self.actor.backward(&self.params[r.clone()], pass, d_mean, &mut grad[r]);
    }

    pub fn critic_backward(&self, pass: &Activations, d_value: f64, grad: &mut [f64]) {
        let r = self.critic_range();
        self.critic.backward(&self.params[r.clone()], pass, &[d_value], &mut grad[r]);
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<PolicySample, NnError> {
        let mean = self.mean(obs)?;
        let log_std = self.log_std();
        let action: Vec<f64> = mean
            .iter()
            .zip(log_std)
            .map(|(m, s)| {
                let n: f64 = StandardNormal.sample(rng);
                m + s.exp() * n
            })
            .collect();
        let (log_prob, _) = log_prob_entropy(&mean, log_std, &action);
        let clipped = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        Ok(PolicySample { action, clipped, log_prob, value: self.value(obs)? })
    }

    /// Mean action clipped to [−1, 1].
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.mean(obs)?.into_iter().map(|a| a.clamp(-1.0, 1.0)).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = self.actor.tensors("actor", &self.params[self.actor_range()]);
        tensors.push(Tensor { name: "log_std".into(), shape: vec![self.act_dim()], data: self.log_std().to_vec() });
        tensors.extend(self.critic.tensors("critic", &self.params[self.critic_range()]));
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            actor_sizes: self.actor.sizes().to_vec(),
            critic_sizes: self.critic.sizes().to_vec(),
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, NnError> {
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported format version {}", ckpt.format_version)));
        }
        let actor = Mlp::new(ckpt.actor_sizes.clone());
        let critic = Mlp::new(ckpt.critic_sizes.clone());
        if critic.output_dim() != 1 || critic.input_dim() != actor.input_dim() {
            return Err(NnError::Checkpoint("actor and critic shapes disagree".into()));
        }
        let template = Self { params: Vec::new(), actor: actor.clone(), critic: critic.clone() };
        let mut expected = actor.tensors("actor", &vec![0.0; actor.param_count()]);
        expected.push(Tensor { name: "log_std".into(), shape: vec![actor.output_dim()], data: vec![] });
        expected.extend(critic.tensors("critic", &vec![0.0; critic.param_count()]));
        if expected.len() != ckpt.tensors.len() {
            return Err(NnError::Checkpoint(format!("expected {} tensors, found {}", expected.len(), ckpt.tensors.len())));
        }
        let mut params = Vec::with_capacity(actor.param_count() + actor.output_dim() + critic.param_count());
        for (want, got) in expected.iter().zip(&ckpt.tensors) {
            if want.name != got.name || want.shape != got.shape {
                return Err(NnError::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
            let n: usize = got.shape.iter().product();
            if got.data.len() != n {
                return Err(NnError::ShapeMismatch { expected: n, got: got.data.len() });
            }
            params.extend_from_slice(&got.data);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NnError::Checkpoint("non-finite parameter".into()));
        }
        Ok(Self { params, ..template })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        std::fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_checkpoint(&ckpt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(NnError::ShapeMismatch { expected: self.m.len(), got: params.len().min(grad.len()) });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Rescales `grad` in place to global L2 norm at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::new(vec![3, 5, 2]);
        let out = net.forward(&vec![0.0; net.param_count()], &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn single_hidden_unit_closed_form() {
        let net = Mlp::new(vec![2, 1, 1]);
        // w1 = [0.3, -0.7], b1 = 0.2, w2 = 1.5, b2 = -0.1
        let params = [0.3, -0.7, 0.2, 1.5, -0.1];
        let x = [0.4, 0.9];
        let out = net.forward(&params, &x).unwrap()[0];
        assert_abs_diff_eq!(out, 1.5 * (0.3 * 0.4 - 0.7 * 0.9 + 0.2_f64).tanh() - 0.1, epsilon = 1e-15);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = Mlp::new(vec![3, 4, 1]);
        assert!(matches!(net.forward(&vec![0.0; net.param_count()], &[1.0]), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn orthogonal_init_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = orthogonal(&mut rng, 4, 9);
        let qqt = &q * q.transpose();
        assert!((qqt - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        let q = orthogonal(&mut rng, 9, 4);
        assert!((q.transpose() * &q - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn gaussian_closed_forms() {
        let (logp, ent) = log_prob_entropy(&[0.1; 4], &[0.0; 4], &[0.1; 4]);
        assert_abs_diff_eq!(logp, -2.0 * (2.0 * PI).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(ent, 5.675754132818691, epsilon = 1e-12);
        let far = log_prob_entropy(&[0.0], &[0.0], &[2.0]).0;
        let near = log_prob_entropy(&[0.0], &[0.0], &[1.0]).0;
        assert!(far < near);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut adam = Adam::new(3, 1e-3);
        let mut p = vec![1.0, 2.0, 3.0];
        adam.step(&mut p, &[0.5, -2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8), epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 2.0 + 1e-3 * 2.0 / (2.0 + 1e-8), epsilon = 1e-15);
        assert_eq!(p[2], 3.0);
    }

    #[test]
    fn clipping_preserves_direction() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!(n <= 0.5 + 1e-12);
        assert_abs_diff_eq!(g[0] / g[1], 0.75, epsilon = 1e-15);
    }
}
