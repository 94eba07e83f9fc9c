//! Episode-reward potential-based reward shaping for tabular Q-learning.
//!
//! The shaping potential of a step is built from the agent's own learning
//! history: how the running episode reward compares with the best and worst
//! finished episodes. The crate provides
//!
//! - [`mdp`]: the tabular MDP model, transition records and traces,
//! - [`shaping`]: the potential, the shaping bonus and per-task statistics,
//! - [`learners`]: Q-learning with a backward-flushed replay buffer,
//! - [`envs`]: sparse-reward gridworld benchmarks and task suites,
//! - [`oracle`]: value iteration and checks of the shaping guarantees,
//! - [`harness`]: seeded experiments, learning-curve statistics and the CLI
//!   plumbing.

pub mod envs;
pub mod error;
pub mod harness;
pub mod learners;
pub mod mdp;
pub mod oracle;
pub mod rng;
pub mod shaping;

pub use error::{Error, Result};
