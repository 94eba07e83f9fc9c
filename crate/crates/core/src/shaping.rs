//! Episode-reward potential and the shaping bonus built from it.
//!
//! The potential of a step is zero whenever the environment reward of that
//! step is zero. Otherwise it measures how the current episode reward sits
//! between the best and worst finished episodes:
//!
//! ```text
//! phi = 1 + (R_ep - R_max) / (R_max - R_min)
//! ```
//!
//! The shaping bonus between consecutive steps is `gamma * phi' - phi`,
//! with `gamma` taken from the environment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// How the episode-reward bounds evolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    /// Running max and min, updated independently after every episode.
    Online,
    /// Running max and min with the literal `if / else if` update: an
    /// episode that raises the max cannot also lower the min.
    StrictPaper,
    /// Bounds fixed at construction.
    Known,
}

/// Per-task running episode-reward statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingState {
    pub max_episode_reward: f64,
    pub min_episode_reward: f64,
    pub current_episode_reward: f64,
    pub mode: BoundsMode,
    pub episodes_completed: u64,
}

impl Default for ShapingState {
    fn default() -> Self {
        Self::online()
    }
}

impl ShapingState {
    /// Bounds start at `max = -inf`, `min = +inf`.
    pub fn online() -> Self {
        Self::unbounded(BoundsMode::Online)
    }

    pub fn strict_paper() -> Self {
        Self::unbounded(BoundsMode::StrictPaper)
    }

    pub fn known(upper: f64, lower: f64) -> Result<Self> {
        ensure_finite("known upper bound", upper)?;
        ensure_finite("known lower bound", lower)?;
        if lower > upper {
            return Err(Error::InvalidConfig {
                field: "known_bounds".into(),
                reason: format!("lower {lower} exceeds upper {upper}"),
            });
        }
        Ok(Self {
            max_episode_reward: upper,
            min_episode_reward: lower,
            current_episode_reward: 0.0,
            mode: BoundsMode::Known,
            episodes_completed: 0,
        })
    }

    fn unbounded(mode: BoundsMode) -> Self {
        Self {
            max_episode_reward: f64::NEG_INFINITY,
            min_episode_reward: f64::INFINITY,
            current_episode_reward: 0.0,
            mode,
            episodes_completed: 0,
        }
    }

    pub fn known_bounds(&self) -> bool {
        self.mode == BoundsMode::Known
    }

    /// True when the potential formula is defined: both bounds finite and
    /// distinct.
    pub fn bounds_usable(&self) -> bool {
        let (u, l) = (self.max_episode_reward, self.min_episode_reward);
        u.is_finite() && l.is_finite() && (u - l).is_finite() && u != l
    }

    /// Adds one step's environment reward to the running episode reward.
    pub fn accumulate_step(&mut self, reward: f64) -> Result<()> {
        self.current_episode_reward += ensure_finite("reward", reward)?;
        Ok(())
    }

    /// Folds the finished episode into the bounds and resets the running
    /// episode reward.
    pub fn finish_episode(&mut self) {
        let r = self.current_episode_reward;
        match self.mode {
            BoundsMode::Online => {
                self.max_episode_reward = self.max_episode_reward.max(r);
                self.min_episode_reward = self.min_episode_reward.min(r);
            }
            BoundsMode::StrictPaper => {
                if r > self.max_episode_reward {
                    self.max_episode_reward = r;
                } else if r < self.min_episode_reward {
                    self.min_episode_reward = r;
                }
            }
            BoundsMode::Known => {}
        }
        self.episodes_completed += 1;
        self.current_episode_reward = 0.0;
    }
}

/// Potential of a step whose environment reward is `immediate_reward`.
/// `state.current_episode_reward` must already include that reward.
///
/// Degenerate bounds (equal, or either one infinite) give 0.
pub fn potential(immediate_reward: f64, state: &ShapingState) -> f64 {
    if immediate_reward == 0.0 || !state.bounds_usable() {
        return 0.0;
    }
    let (u, l) = (state.max_episode_reward, state.min_episode_reward);
    let phi = 1.0 + (state.current_episode_reward - u) / (u - l);
    if phi.is_finite() {
        phi
    } else {
        0.0
    }
}

/// `F = gamma * phi_next - phi_s`.
pub fn shaping_bonus(phi_s: f64, phi_next: f64, gamma: f64) -> f64 {
    gamma * phi_next - phi_s
}

/// Identifier of a task in a multi-task agent.
pub type TaskId = String;

/// Independent shaping statistics per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskShapingRegistry {
    template: ShapingState,
    per_task: BTreeMap<TaskId, ShapingState>,
}

impl TaskShapingRegistry {
    /// New tasks start as a copy of `template` (with its episode state
    /// reset).
    pub fn new(template: ShapingState) -> Self {
        let template = ShapingState {
            current_episode_reward: 0.0,
            episodes_completed: 0,
            ..template
        };
        Self {
            template,
            per_task: BTreeMap::new(),
        }
    }

    /// The task's state, registered on first use.
    pub fn state_mut(&mut self, task: &str) -> &mut ShapingState {
        let template = self.template;
        self.per_task.entry(task.to_owned()).or_insert(template)
    }

    pub fn get(&self, task: &str) -> Option<&ShapingState> {
        self.per_task.get(task)
    }

    pub fn tasks(&self) -> impl Iterator<Item = (&TaskId, &ShapingState)> {
        self.per_task.iter()
    }

    pub fn len(&self) -> usize {
        self.per_task.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_task.is_empty()
    }
}

/// Potential of a step on `task`, reading only that task's statistics.
pub fn potential_multitask(
    immediate_reward: f64,
    registry: &mut TaskShapingRegistry,
    task: &str,
) -> f64 {
    potential(immediate_reward, registry.state_mut(task))
}

/// A state-only potential `phi: S -> R`, used to check policy invariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPotential {
    values: Vec<f64>,
}

impl StaticPotential {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            ensure_finite("potential", v)?;
        }
        Ok(Self { values })
    }

    pub fn zeros(n_states: usize) -> Self {
        Self {
            values: vec![0.0; n_states],
        }
    }

    pub fn lookup(&self, s: usize) -> Result<f64> {
        self.values.get(s).copied().ok_or(Error::OutOfRange {
            what: "state",
            index: s,
            limit: self.values.len(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
