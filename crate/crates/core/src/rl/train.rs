//! Training loops: multi-agent PPO, single-agent PPO, multi-agent A2C and a
//! random-action baseline, all on the same episodic rollout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::rl::env::{Env, Episode, StepOutcome};
use crate::rl::gae::{gae, lambda_returns, normalize};
use crate::rl::loss::{actor_critic_gradients, LossTerms, Sample, Surrogate};
use crate::rl::mlp::Mlp;
use crate::rl::optim::{clip_grad_norm, Adam};
use crate::rl::policy::GaussianPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub c1: f64,
    pub c2: f64,
    pub learning_rate: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub episodes: usize,
    pub steps: usize,
    pub hidden: Vec<usize>,
    pub max_grad_norm: f64,
    pub init_log_std: f64,
    /// Divide rewards by their running root-mean-square before computing advantages.
    pub scale_rewards: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            epsilon: 0.2,
            c1: 0.5,
            c2: 0.01,
            learning_rate: 3e-4,
            minibatch: 64,
            epochs: 4,
            episodes: 500,
            steps: 10,
            hidden: vec![256, 256],
            max_grad_norm: 0.5,
            init_log_std: 0.0,
            scale_rewards: true,
        }
    }
}

impl HyperParams {
    /// Every violated bound, one message per field.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(0.0..=1.0).contains(&self.gamma) {
            p.push(format!("hp.gamma: must be in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            p.push(format!("hp.lambda: must be in [0, 1], got {}", self.lambda));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            p.push(format!("hp.epsilon: must be in (0, 1), got {}", self.epsilon));
        }
        if !(self.c1 >= 0.0) || !(self.c2 >= 0.0) {
            p.push("hp.c1/hp.c2: must be nonnegative".into());
        }
        if !(self.learning_rate > 0.0) {
            p.push(format!("hp.learning_rate: must be positive, got {}", self.learning_rate));
        }
        if self.minibatch == 0 {
            p.push("hp.minibatch: must be positive".into());
        }
        if self.epochs == 0 {
            p.push("hp.epochs: must be positive".into());
        }
        if self.episodes == 0 {
            p.push("hp.episodes: must be positive".into());
        }
        if self.steps == 0 {
            p.push("hp.steps: must be positive".into());
        }
        if self.hidden.contains(&0) {
            p.push("hp.hidden: layer widths must be positive".into());
        }
        if !(self.max_grad_norm > 0.0) {
            p.push("hp.max_grad_norm: must be positive".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mappo,
    Ppo,
    A2c,
    Random,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mappo => "mappo",
            Algorithm::Ppo => "ppo",
            Algorithm::A2c => "a2c",
            Algorithm::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mappo" => Ok(Algorithm::Mappo),
            "ppo" => Ok(Algorithm::Ppo),
            "a2c" => Ok(Algorithm::A2c),
            "random" => Ok(Algorithm::Random),
            other => Err(Error::Parse(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// One step stored in an agent's memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub terminal: bool,
}

/// Actor, critic and their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl Agent {
    pub fn new(obs_len: usize, act_len: usize, hp: &HyperParams, rng: &mut Rng) -> Result<Self> {
        let policy = GaussianPolicy::new(obs_len, &hp.hidden, act_len, hp.init_log_std, rng)?;
        let mut sizes = vec![obs_len];
        sizes.extend_from_slice(&hp.hidden);
        sizes.push(1);
        let critic = Mlp::init(sizes, 1.0, rng)?;
        Ok(Self::from_parts(policy, critic, hp.learning_rate))
    }

    pub fn from_parts(policy: GaussianPolicy, critic: Mlp, lr: f64) -> Self {
        Self {
            actor_opt: Adam::new(policy.num_params(), lr),
            critic_opt: Adam::new(critic.num_params(), lr),
            policy,
            critic,
        }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(obs)?[0])
    }

    /// Advantages (normalized) and λ-return targets of one rollout.
    pub fn advantages(memory: &[Transition], hp: &HyperParams, reward_scale: f64) -> (Vec<f64>, Vec<f64>) {
        let rewards: Vec<f64> = memory.iter().map(|t| t.reward * reward_scale).collect();
        let mut values: Vec<f64> = memory.iter().map(|t| t.value).collect();
        // the rollout ends on a terminal step, so the bootstrap value is zero
        values.push(if memory.last().is_some_and(|t| t.terminal) { 0.0 } else { *values.last().unwrap_or(&0.0) });
        let adv = gae(&rewards, &values, hp.gamma, hp.lambda);
        let targets = lambda_returns(&adv, &values);
        (normalize(&adv), targets)
    }

    /// Updates on one rollout; `surrogate` selects PPO or A2C.
    pub fn update(
        &mut self,
        memory: &[Transition],
        hp: &HyperParams,
        algo: Algorithm,
        reward_scale: f64,
        rng: &mut Rng,
    ) -> Result<LossTerms> {
        let (adv, targets) = Self::advantages(memory, hp, reward_scale);
        let samples: Vec<Sample<'_>> = memory
            .iter()
            .zip(adv.iter().zip(&targets))
            .map(|(t, (&a, &r))| Sample {
                obs: &t.obs,
                action: &t.action,
                old_log_prob: t.log_prob,
                advantage: a,
                target: r,
            })
            .collect();
        let (surrogate, epochs, minibatch) = match algo {
            Algorithm::A2c => (Surrogate::LogProb, 1, samples.len()),
            _ => (Surrogate::Clipped { epsilon: hp.epsilon }, hp.epochs, hp.minibatch),
        };
        let mut last = None;
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        for _ in 0..epochs {
            shuffle(&mut idx, rng);
            for chunk in idx.chunks(minibatch) {
                let batch: Vec<Sample<'_>> = chunk.iter().map(|&i| samples[i]).collect();
                let (terms, mut ga, mut gc) =
                    actor_critic_gradients(&batch, &self.policy, &self.critic, surrogate, hp.c1, hp.c2)?;
                clip_grad_norm(&mut ga, hp.max_grad_norm);
                clip_grad_norm(&mut gc, hp.max_grad_norm);
                let (net, log_std) = self.policy.params_mut();
                self.actor_opt.step(&mut [net, log_std], &ga);
                self.critic_opt.step(&mut [self.critic.params_mut()], &gc);
                last = Some(terms);
            }
        }
        Ok(last.expect("nonempty memory"))
    }
}

/// Running root-mean-square of every reward seen so far.
#[derive(Debug, Clone, Default)]
struct RunningRms {
    count: f64,
    mean_sq: f64,
}

impl RunningRms {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        self.mean_sq += (x * x - self.mean_sq) / self.count;
    }

    fn scale(&self) -> f64 {
        if self.mean_sq > 0.0 {
            1.0 / self.mean_sq.sqrt()
        } else {
            1.0
        }
    }
}

fn shuffle(idx: &mut [usize], rng: &mut Rng) {
    for i in (1..idx.len()).rev() {
        let j = rng.index(i + 1);
        idx.swap(i, j);
    }
}

/// Trained policies of one run.
#[derive(Debug, Clone, PartialEq)]
pub enum Agents {
    /// One agent for the beams, one for the surfaces.
    Multi { active: Agent, passive: Agent },
    /// One agent acting on the concatenated action.
    Single(Agent),
    /// Untrained random actions.
    Random,
}

impl Agents {
    pub fn new(algo: Algorithm, env: &Env, hp: &HyperParams, rng: &mut Rng) -> Result<Self> {
        let obs = env.obs_len();
        Ok(match algo {
            Algorithm::Mappo | Algorithm::A2c => Agents::Multi {
                active: Agent::new(obs, env.active_len(), hp, rng)?,
                passive: Agent::new(obs, env.passive_len(), hp, rng)?,
            },
            Algorithm::Ppo => Agents::Single(Agent::new(obs, env.active_len() + env.passive_len(), hp, rng)?),
            Algorithm::Random => Agents::Random,
        })
    }

    /// Deterministic (mean) actions: `(active, passive)`.
    pub fn mean_actions(&self, env: &Env, obs: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Agents::Multi { active, passive } => {
                Ok((active.policy.mean_action(obs)?, passive.policy.mean_action(obs)?))
            }
            Agents::Single(agent) => {
                let mut a = agent.policy.mean_action(obs)?;
                let p = a.split_off(env.active_len());
                Ok((a, p))
            }
            Agents::Random => Ok(random_actions(env, rng)),
        }
    }
}

fn random_actions(env: &Env, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let a = (0..env.active_len()).map(|_| rng.standard_normal()).collect();
    let p = (0..env.passive_len()).map(|_| rng.standard_normal()).collect();
    (a, p)
}

/// Per-episode statistics plus the final-step configuration for re-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub mean_reward: f64,
    /// Minimum and sum rate at the last step.
    pub min_rate: f64,
    pub sum_rate: f64,
    pub final_active: Vec<f64>,
    pub final_passive: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub agents: Agents,
    pub trace: Vec<EpisodeStats>,
    /// Number of projected actions checked for feasibility.
    pub actions_checked: usize,
}

/// Stream used to generate episode `ep` of a run with base seed `seed`.
pub fn episode_rng(seed: u64, ep: usize) -> Rng {
    Rng::new(seed).derive(0x100 + ep as u64)
}

const INIT_STREAM: u64 = 1;
const ACTION_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

/// Runs `hp.episodes` episodes of `algo` from `seed`.
pub fn train(env: &Env, algo: Algorithm, hp: &HyperParams, seed: u64) -> Result<TrainOutcome> {
    train_observed(env, algo, hp, seed, &mut |_, _| {})
}

/// [`train`], calling `observer(episode, state)` after every step.
pub fn train_observed(
    env: &Env,
    algo: Algorithm,
    hp: &HyperParams,
    seed: u64,
    observer: &mut dyn FnMut(usize, &Episode),
) -> Result<TrainOutcome> {
    hp.validate()?;
    let base = Rng::new(seed);
    let mut init_rng = base.derive(INIT_STREAM);
    let mut act_rng = base.derive(ACTION_STREAM);
    let mut shuffle_rng = base.derive(SHUFFLE_STREAM);
    let mut agents = Agents::new(algo, env, hp, &mut init_rng)?;
    let mut trace = Vec::with_capacity(hp.episodes);
    let mut actions_checked = 0;
    let mut rms = RunningRms::default();
    let split = env.active_len();
    for ep_idx in 0..hp.episodes {
        let mut ep = env.reset(episode_rng(seed, ep_idx))?;
        let mut mem_a: Vec<Transition> = Vec::with_capacity(hp.steps);
        let mut mem_b: Vec<Transition> = Vec::with_capacity(hp.steps);
        let mut rewards = 0.0;
        let mut last: Option<(StepOutcome, Vec<f64>, Vec<f64>)> = None;
        for n in 0..hp.steps {
            let obs = env.observation(&ep);
            let terminal = n + 1 == hp.steps;
            let (raw_a, raw_p) = match &agents {
                Agents::Multi { active, passive } => {
                    let (a, lpa) = active.policy.sample(&obs, &mut act_rng)?;
                    let (p, lpp) = passive.policy.sample(&obs, &mut act_rng)?;
                    mem_a.push(transition(&obs, &a, lpa, active.value(&obs)?, terminal));
                    mem_b.push(transition(&obs, &p, lpp, passive.value(&obs)?, terminal));
                    (a, p)
                }
                Agents::Single(agent) => {
                    let (mut a, lp) = agent.policy.sample(&obs, &mut act_rng)?;
                    mem_a.push(transition(&obs, &a, lp, agent.value(&obs)?, terminal));
                    let p = a.split_off(split);
                    (a, p)
                }
                Agents::Random => random_actions(env, &mut act_rng),
            };
            let out = env.step(&mut ep, &raw_a, &raw_p)?;
            actions_checked += 1;
            observer(ep_idx, &ep);
            rewards += out.reward;
            rms.push(out.reward);
            for m in [&mut mem_a, &mut mem_b] {
                if let Some(t) = m.last_mut() {
                    t.reward = out.reward;
                }
            }
            last = Some((out, raw_a, raw_p));
        }
        let scale = if hp.scale_rewards { rms.scale() } else { 1.0 };
        match &mut agents {
            Agents::Multi { active, passive } => {
                active.update(&mem_a, hp, algo, scale, &mut shuffle_rng)?;
                passive.update(&mem_b, hp, algo, scale, &mut shuffle_rng)?;
            }
            Agents::Single(agent) => {
                agent.update(&mem_a, hp, algo, scale, &mut shuffle_rng)?;
            }
            Agents::Random => {}
        }
        let (out, raw_a, raw_p) = last.expect("at least one step");
        trace.push(EpisodeStats {
            episode: ep_idx,
            mean_reward: rewards / hp.steps as f64,
            min_rate: out.min_rate,
            sum_rate: out.sum_rate,
            final_active: raw_a,
            final_passive: raw_p,
        });
    }
    Ok(TrainOutcome {
        algorithm: algo,
        seed,
        agents,
        trace,
        actions_checked,
    })
}

fn transition(obs: &[f64], action: &[f64], log_prob: f64, value: f64, terminal: bool) -> Transition {
    Transition {
        obs: obs.to_vec(),
        action: action.to_vec(),
        log_prob,
        reward: 0.0,
        value,
        terminal,
    }
}

/// Replays episode `ep` of a run and evaluates the stored final actions.
pub fn replay_final_step(env: &Env, seed: u64, hp: &HyperParams, stats: &EpisodeStats) -> Result<StepOutcome> {
    let mut ep: Episode = env.reset(episode_rng(seed, stats.episode))?;
    if env.config().per_step_fading {
        // advance the fading stream to the last step
        for _ in 1..hp.steps {
            env.step(&mut ep, &stats.final_active, &stats.final_passive)?;
        }
    }
    env.step(&mut ep, &stats.final_active, &stats.final_passive)
}

/// Runs one episode with deterministic actions and returns the final episode state.
pub fn greedy_episode(env: &Env, agents: &Agents, steps: usize, mut ep: Episode, rng: &mut Rng) -> Result<(Episode, StepOutcome)> {
    let mut last = None;
    for _ in 0..steps {
        let obs = env.observation(&ep);
        let (a, p) = agents.mean_actions(env, &obs, rng)?;
        last = Some(env.step(&mut ep, &a, &p)?);
    }
    Ok((ep, last.ok_or_else(|| Error::Contract("zero steps".into()))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelParams;
    use crate::environment::verification_layout;
    use crate::noma::noise_power;
    use crate::rl::env::{EnvConfig, LayoutSource};

    fn small_env() -> Env {
        Env::new(EnvConfig {
            layout: verification_layout(),
            layout_source: LayoutSource::SeededRandom,
            users: 10,
            clusters: 4,
            channel: ChannelParams::default(),
            sigma2: noise_power(-100.0, 1e7),
            p_max: 0.1,
            r_min: 0.1,
            per_step_fading: false,
        })
        .unwrap()
    }

    fn tiny_hp(episodes: usize) -> HyperParams {
        HyperParams {
            episodes,
            hidden: vec![16, 16],
            ..HyperParams::default()
        }
    }

    #[test]
    fn bookkeeping_one_episode() {
        let env = small_env();
        for algo in [Algorithm::Mappo, Algorithm::Ppo, Algorithm::A2c, Algorithm::Random] {
            let out = train(&env, algo, &tiny_hp(1), 3).unwrap();
            assert_eq!(out.trace.len(), 1);
            assert_eq!(out.actions_checked, 10);
        }
    }

    #[test]
    fn deterministic_trace() {
        let env = small_env();
        for algo in [Algorithm::Mappo, Algorithm::Ppo, Algorithm::A2c] {
            let a = train(&env, algo, &tiny_hp(3), 11).unwrap();
            let b = train(&env, algo, &tiny_hp(3), 11).unwrap();
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.agents, b.agents);
        }
    }

    #[test]
    fn replay_reproduces_logged_rates() {
        let env = small_env();
        let hp = tiny_hp(3);
        let out = train(&env, Algorithm::Mappo, &hp, 5).unwrap();
        for s in &out.trace {
            let r = replay_final_step(&env, 5, &hp, s).unwrap();
            assert_eq!(r.min_rate, s.min_rate);
            assert_eq!(r.sum_rate, s.sum_rate);
        }
    }

    #[test]
    fn terminal_bootstrap_is_zero() {
        let hp = HyperParams {
            gamma: 1.0,
            lambda: 1.0,
            ..HyperParams::default()
        };
        let mem: Vec<Transition> = (0..3)
            .map(|i| Transition {
                obs: vec![],
                action: vec![],
                log_prob: 0.0,
                reward: 1.0,
                value: 0.5,
                terminal: i == 2,
            })
            .collect();
        let (_, targets) = Agent::advantages(&mem, &hp, 1.0);
        assert_eq!(targets, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let hp = HyperParams {
            gamma: -0.1,
            epsilon: 1.5,
            ..HyperParams::default()
        };
        match hp.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
