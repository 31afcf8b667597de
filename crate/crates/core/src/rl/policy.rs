//! Diagonal Gaussian policy: an MLP mean and a learned, clamped log-std.

use std::f64::consts::PI;

use crate::error::Result;
use crate::numerics::Rng;
use crate::rl::mlp::{Mlp, Tape};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

/// Per-sample quantities needed to differentiate through the policy.
#[derive(Debug, Clone)]
pub struct PolicyEval {
    pub tape: Tape,
    pub log_prob: f64,
    pub entropy: f64,
}

impl GaussianPolicy {
    pub fn new(obs_len: usize, hidden: &[usize], act_len: usize, init_log_std: f64, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![obs_len];
        sizes.extend_from_slice(hidden);
        sizes.push(act_len);
        Ok(Self {
            mean: Mlp::init(sizes, 0.01, rng)?,
            log_std: vec![init_log_std; act_len],
        })
    }

    pub fn action_len(&self) -> usize {
        self.log_std.len()
    }

    /// Parameter count: network parameters followed by the log-stds.
    pub fn num_params(&self) -> usize {
        self.mean.num_params() + self.log_std.len()
    }

    fn clamped(&self, i: usize) -> f64 {
        self.log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX)
    }

    pub fn std(&self) -> Vec<f64> {
        (0..self.log_std.len()).map(|i| self.clamped(i).exp()).collect()
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.mean.forward(obs)
    }

    /// Draws an action; returns it with its log-probability.
    pub fn sample(&self, obs: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
        let mu = self.mean.forward(obs)?;
        let action: Vec<f64> = mu
            .iter()
            .enumerate()
            .map(|(i, m)| m + self.clamped(i).exp() * rng.standard_normal())
            .collect();
        let lp = self.log_prob_given_mean(&mu, &action);
        Ok((action, lp))
    }

    fn log_prob_given_mean(&self, mu: &[f64], action: &[f64]) -> f64 {
        mu.iter()
            .zip(action)
            .enumerate()
            .map(|(i, (m, a))| {
                let ls = self.clamped(i);
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        (0..self.log_std.len())
            .map(|i| 0.5 + 0.5 * (2.0 * PI).ln() + self.clamped(i))
            .sum()
    }

    pub fn evaluate(&self, obs: &[f64], action: &[f64]) -> Result<PolicyEval> {
        let tape = self.mean.forward_tape(obs)?;
        let log_prob = self.log_prob_given_mean(tape.output(), action);
        Ok(PolicyEval {
            tape,
            log_prob,
            entropy: self.entropy(),
        })
    }

    /// Adds `d_logp · ∇log π(a|s) + d_ent · ∇H` to `grad` (network first, then log-stds).
    pub fn accumulate_grad(&self, eval: &PolicyEval, action: &[f64], d_logp: f64, d_ent: f64, grad: &mut [f64]) {
        let n_net = self.mean.num_params();
        let mu = eval.tape.output();
        let mut g_mu = vec![0.0; mu.len()];
        for i in 0..mu.len() {
            let ls = self.clamped(i);
            let var = (2.0 * ls).exp();
            let diff = action[i] - mu[i];
            g_mu[i] = d_logp * diff / var;
            let inside = (LOG_STD_MIN..=LOG_STD_MAX).contains(&self.log_std[i]);
            if inside {
                grad[n_net + i] += d_logp * (diff * diff / var - 1.0) + d_ent;
            }
        }
        if d_logp != 0.0 {
            self.mean.backward(&eval.tape, &g_mu, &mut grad[..n_net]);
        }
    }

    pub fn params_to_vec(&self) -> Vec<f64> {
        let mut v = self.mean.params().to_vec();
        v.extend_from_slice(&self.log_std);
        v
    }

    /// Mutable views of the network parameters and the log-stds.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.mean.params_mut(), &mut self.log_std)
    }
}
