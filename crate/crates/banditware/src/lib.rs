//! Hardware recommendation from observed runtimes.
//!
//! A decaying epsilon-greedy contextual bandit keeps one linear runtime model
//! per hardware option, refits that model online from the arm's own history,
//! and recommends the most resource-frugal option whose estimated runtime
//! stays within a configurable tolerance of the fastest estimate.
//!
//! The surrounding modules supply everything needed to evaluate the policy:
//! [`dataset`] replays recorded runs, [`synth`] generates synthetic workloads
//! (including a tiled matrix-squaring benchmark), [`experiment`] aggregates
//! repeated simulations into convergence reports, and [`cli`] wires it all
//! into a command-line tool.

pub mod bandit;
pub mod cli;
pub mod dataset;
pub mod experiment;
pub mod regression;
pub mod synth;
pub mod types;

pub use bandit::{BanditConfig, BanditState};
pub use types::{FeatureVector, HardwareConfig};
