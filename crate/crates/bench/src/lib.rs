//! Shared fixtures for the benchmarks.

use starnoma_core::harness::ExperimentConfig;
use starnoma_core::numerics::Rng;
use starnoma_core::rl::{Env, Episode, HyperParams};

/// Environment of the default experiment config (10 users, 4 clusters,
/// two 5x2 surfaces, 4 antennas, 20 dBm).
pub fn default_env() -> Env {
    let cfg = ExperimentConfig::default();
    Env::new(cfg.env_config(cfg.system.p_max_dbm, None)).expect("default config is valid")
}

/// A reset episode with one random action applied.
pub fn stepped_episode(env: &Env, seed: u64) -> (Episode, Vec<f64>, Vec<f64>) {
    let mut ep = env.reset(Rng::new(seed)).expect("reset");
    let mut rng = Rng::new(seed).derive(1);
    let a: Vec<f64> = (0..env.active_len()).map(|_| rng.standard_normal()).collect();
    let p: Vec<f64> = (0..env.passive_len()).map(|_| rng.standard_normal()).collect();
    env.step(&mut ep, &a, &p).expect("step");
    (ep, a, p)
}

/// Default hyperparameters shortened to `episodes`.
pub fn short_hp(episodes: usize) -> HyperParams {
    HyperParams {
        episodes,
        ..HyperParams::default()
    }
}
