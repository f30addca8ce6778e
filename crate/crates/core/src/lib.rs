//! Deep Q-learning with a locally constrained representation objective.
//!
//! The crate is organised bottom-up: [`numerics`] is a small autodiff core,
//! [`envs`] holds the environments (looked up by name), [`replay`] stores
//! experience with episode-aware windows, [`agent`] is the DQN learner,
//! [`lcr`] is the auxiliary representation update and [`harness`] drives
//! seeded experiments and writes metrics.

pub mod agent;
pub mod envs;
pub mod error;
pub mod harness;
pub mod lcr;
pub mod numerics;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
