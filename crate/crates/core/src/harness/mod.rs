//! Config ingestion, policy evaluation and experiment sweeps.

pub mod config;
mod evaluate;
mod experiment;

pub use config::{load_config, parse_config, ConfigFile, ExperimentSpec, LoadedConfig, SweepKind};
pub use evaluate::{eval_episode_seed, evaluate_policy, run_episode, Agent, EpisodeResult, Evaluation};
pub use experiment::*;
