//! Simulator and optimizer for an indoor downlink where one multi-antenna
//! access point serves single-antenna users through walls made of
//! simultaneously transmitting and reflecting surfaces (STAR-RIS), with users
//! multiplexed by power-domain NOMA.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] – dense complex matrices and seeded random streams.
//! * [`environment`] – room geometry and the binary visibility indicators.
//! * [`channel`] – path loss, Rician fading and the surface operators.
//! * [`noma`] – decoding order, SINR, rates and constraint audits.
//! * [`pairing`] – correlation-based K-means user pairing.
//! * [`rl`] – MLP actor-critic, GAE, PPO/A2C losses and the training loops.
//! * [`harness`] – experiment configuration, sweeps and CSV export.

pub mod channel;
pub mod environment;
pub mod error;
pub mod harness;
pub mod noma;
pub mod numerics;
pub mod pairing;
pub mod rl;

pub use channel::{ChannelRealization, PathLossParams, Side, StarRisState};
pub use environment::{AdjacencyIndicators, Layout};
pub use error::{Error, Result};
pub use noma::{ActiveBeamforming, ClusterAssignment, DecodingOrder, NomaParams};
pub use numerics::{C64, ComplexMatrix, Rng};
