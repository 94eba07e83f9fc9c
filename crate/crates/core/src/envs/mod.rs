//! Sparse-reward gridworlds and multi-task suites.

mod benchmarks;
mod grid;

pub use benchmarks::{benchmark, standard_benchmarks, Benchmark};
pub use grid::{compile_grid, Cell, GridSpec, Move, MAX_PELLETS};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Environment, Step, TabularMdp};
use crate::rng::SeededRng;
use crate::shaping::TaskId;

/// A compiled MDP plus its episode length cap.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicEnv {
    pub name: String,
    pub mdp: TabularMdp,
    pub max_steps: usize,
}

impl EpisodicEnv {
    pub fn new(name: impl Into<String>, mdp: TabularMdp, max_steps: usize) -> Self {
        Self {
            name: name.into(),
            mdp,
            max_steps,
        }
    }

    pub fn from_spec(name: impl Into<String>, spec: &GridSpec) -> Result<Self> {
        Ok(Self::new(
            name,
            compile_grid(spec, spec.gamma)?,
            spec.max_steps,
        ))
    }
}

impl Environment for EpisodicEnv {
    fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    fn start_state(&self) -> usize {
        self.mdp.start_state()
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn step(&self, state: usize, action: usize, rng: &mut SeededRng) -> Result<Step> {
        if state >= self.mdp.n_states() {
            return Err(Error::OutOfRange {
                what: "state",
                index: state,
                limit: self.mdp.n_states(),
            });
        }
        if action >= self.mdp.n_actions() {
            return Err(Error::OutOfRange {
                what: "action",
                index: action,
                limit: self.mdp.n_actions(),
            });
        }
        let o = self.mdp.sample(state, action, rng);
        Ok(Step {
            reward: o.reward,
            next_state: o.next,
            terminal: self.mdp.is_terminal(o.next),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    RoundRobin,
    UniformRandom,
}

/// Tasks learned side by side by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSuite {
    tasks: Vec<(TaskId, EpisodicEnv)>,
    schedule: Schedule,
}

impl TaskSuite {
    pub fn new(tasks: Vec<(TaskId, EpisodicEnv)>, schedule: Schedule) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::InvalidConfig {
                field: "tasks".into(),
                reason: "empty task suite".into(),
            });
        }
        let mut seen = BTreeSet::new();
        if let Some((dup, _)) = tasks.iter().find(|(id, _)| !seen.insert(id.clone())) {
            return Err(Error::InvalidConfig {
                field: "tasks".into(),
                reason: format!("duplicate task `{dup}`"),
            });
        }
        Ok(Self { tasks, schedule })
    }

    pub fn tasks(&self) -> &[(TaskId, EpisodicEnv)] {
        &self.tasks
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    /// Index of the task that plays episode `episode_index`.
    pub fn next_task(&self, episode_index: usize, rng: &mut SeededRng) -> usize {
        match self.schedule {
            Schedule::RoundRobin => episode_index % self.tasks.len(),
            Schedule::UniformRandom => rng.below(self.tasks.len()),
        }
    }
}
