//! Age-of-Information simulation for an aerial reconfigurable intelligent
//! surface (RIS) relay, together with a from-scratch PPO agent that learns
//! UAV altitude control and device scheduling.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`]: geometry, path loss, LoS Rician gains, RIS phase alignment, SNR.
//! * [`env`]: the discrete-time MDP (altitude dynamics, activations, AoI, reward).
//! * [`nn`]: a small tanh MLP with manual backprop, Adam and checkpoints.
//! * [`ppo`]: rollouts, GAE, clipped surrogate and the training loop.
//! * [`baselines`]: random walk, hovering-greedy and an exact DP oracle.
//! * [`harness`]: config files, experiment sweeps, metrics and plot data.
//!
//! Data-parallel loops (episodes, seeds, sweep points, rollout workers) go
//! through [`par`], which uses rayon when the `parallel` feature is enabled
//! and falls back to plain iteration otherwise.

pub mod baselines;
pub mod channel;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod par;
pub mod ppo;
pub mod seeding;
pub mod stats;

pub use error::{Error, Result};
