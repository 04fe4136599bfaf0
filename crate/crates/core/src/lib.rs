//! Episodic Memory Actor-Critic (EMAC) for continuous control.
//!
//! The crate bundles everything a run needs: a small dense-network engine,
//! two closed-form environments, the episodic memory table, the prioritized
//! replay buffer, the agent, the overestimation diagnostic and the run
//! harness driving them.

pub mod agent;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod harness;
pub mod memory;
pub mod nn;
pub mod replay;
pub mod seeding;

pub use error::{Error, Result};
