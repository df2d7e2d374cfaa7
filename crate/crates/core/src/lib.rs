//! Tabular model-based RL with exploration bonuses from a discrete conditional
//! kernelized Stein discrepancy, plus PSRL, variance-IDS and Q-learning
//! baselines and a seeded experiment harness.

pub mod agents;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod mdp;
pub mod posterior;

pub use error::{Error, Result};
