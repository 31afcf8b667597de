//! Clipped-surrogate and plain policy-gradient losses with their gradients.

use crate::error::Result;
use crate::rl::mlp::Mlp;
use crate::rl::policy::GaussianPolicy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surrogate {
    /// `min(r Â, clip(r, 1−ε, 1+ε) Â)`.
    Clipped { epsilon: f64 },
    /// `log π(a|s) Â`.
    LogProb,
}

/// One training sample; advantages are expected to be normalized already.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub obs: &'a [f64],
    pub action: &'a [f64],
    pub old_log_prob: f64,
    pub advantage: f64,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    /// `−mean[surrogate − c1·L^VF + c2·H]`.
    pub total: f64,
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
}

/// Clipped objective of one sample.
pub fn clipped_objective(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage)
}

/// `∂/∂r` of the clipped objective.
fn clipped_slope(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped_active = (advantage > 0.0 && ratio > 1.0 + epsilon) || (advantage < 0.0 && ratio < 1.0 - epsilon);
    if clipped_active {
        0.0
    } else {
        advantage
    }
}

/// Loss value and gradients for the actor (policy layout) and the critic.
pub fn actor_critic_gradients(
    batch: &[Sample<'_>],
    policy: &GaussianPolicy,
    critic: &Mlp,
    surrogate: Surrogate,
    c1: f64,
    c2: f64,
) -> Result<(LossTerms, Vec<f64>, Vec<f64>)> {
    assert!(!batch.is_empty(), "empty batch");
    let n = batch.len() as f64;
    let mut g_actor = vec![0.0; policy.num_params()];
    let mut g_critic = vec![0.0; critic.num_params()];
    let (mut surr, mut vf) = (0.0, 0.0);
    let entropy = policy.entropy();
    for (i, s) in batch.iter().enumerate() {
        let eval = policy.evaluate(s.obs, s.action)?;
        let (obj, d_logp) = match surrogate {
            Surrogate::Clipped { epsilon } => {
                let ratio = (eval.log_prob - s.old_log_prob).exp();
                (
                    clipped_objective(ratio, s.advantage, epsilon),
                    clipped_slope(ratio, s.advantage, epsilon) * ratio,
                )
            }
            Surrogate::LogProb => (eval.log_prob * s.advantage, s.advantage),
        };
        surr += obj;
        // loss = −obj/n − c2·H (entropy gradient added once)
        let d_ent = if i == 0 { -c2 } else { 0.0 };
        policy.accumulate_grad(&eval, s.action, -d_logp / n, d_ent, &mut g_actor);

        let tape = critic.forward_tape(s.obs)?;
        let err = tape.output()[0] - s.target;
        vf += err * err;
        critic.backward(&tape, &[2.0 * c1 * err / n], &mut g_critic);
    }
    surr /= n;
    vf /= n;
    let terms = LossTerms {
        total: -(surr - c1 * vf + c2 * entropy),
        surrogate: surr,
        value: vf,
        entropy,
    };
    Ok((terms, g_actor, g_critic))
}

/// Loss value only.
pub fn actor_critic_loss(
    batch: &[Sample<'_>],
    policy: &GaussianPolicy,
    critic: &Mlp,
    surrogate: Surrogate,
    c1: f64,
    c2: f64,
) -> Result<LossTerms> {
    let n = batch.len() as f64;
    let (mut surr, mut vf) = (0.0, 0.0);
    for s in batch {
        let lp = policy.evaluate(s.obs, s.action)?.log_prob;
        surr += match surrogate {
            Surrogate::Clipped { epsilon } => clipped_objective((lp - s.old_log_prob).exp(), s.advantage, epsilon),
            Surrogate::LogProb => lp * s.advantage,
        };
        let v = critic.forward(s.obs)?[0];
        vf += (v - s.target).powi(2);
    }
    surr /= n;
    vf /= n;
    let entropy = policy.entropy();
    Ok(LossTerms {
        total: -(surr - c1 * vf + c2 * entropy),
        surrogate: surr,
        value: vf,
        entropy,
    })
}
