//! Actor-critic machinery and training loops.

pub mod checkpoint;
pub mod env;
pub mod gae;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod policy;
pub mod train;

pub use env::{Env, EnvConfig, Episode, LayoutSource, StepOutcome};
pub use mlp::Mlp;
pub use policy::GaussianPolicy;
pub use train::{train, train_observed, Agent, Agents, Algorithm, EpisodeStats, HyperParams, TrainOutcome, Transition};
