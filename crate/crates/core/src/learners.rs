//! Tabular Q-learning, with and without episode-reward shaping.
//!
//! Both learners share one episode loop. Each step is appended to a buffer;
//! the buffer is flushed newest-to-oldest every `update_period` steps and at
//! episode end. With shaping active, a flushed record needs the potential of
//! its successor record, so a non-terminal newest record is held back until
//! that successor exists. Without shaping every bonus is zero and nothing is
//! held back, so `update_period = 1` is plain online Q-learning.

use serde::{Deserialize, Serialize};

use crate::envs::TaskSuite;
use crate::error::{ensure_finite, Error, Result};
use crate::mdp::{BoundsSnapshot, Environment, EpisodeTrace, TransitionRecord};
use crate::rng::{streams, SeededRng};
use crate::shaping::{potential, shaping_bonus, ShapingState, TaskId, TaskShapingRegistry};

/// Dense `|S| x |A|` action values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.n_actions + a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Argmax over actions, ties to the lowest index.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::OutOfRange {
                what: "state",
                index: s,
                limit: self.n_states,
            });
        }
        if a >= self.n_actions {
            return Err(Error::OutOfRange {
                what: "action",
                index: a,
                limit: self.n_actions,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMode {
    None,
    OnlineBounds,
    KnownBounds { upper: f64, lower: f64 },
    StrictPaperBounds,
}

impl ShapingMode {
    pub fn is_active(&self) -> bool {
        !matches!(self, ShapingMode::None)
    }

    /// Fresh statistics for this mode. The unshaped learner still tracks
    /// episode rewards; it just never reads them.
    pub fn initial_state(&self) -> Result<ShapingState> {
        match *self {
            ShapingMode::None | ShapingMode::OnlineBounds => Ok(ShapingState::online()),
            ShapingMode::StrictPaperBounds => Ok(ShapingState::strict_paper()),
            ShapingMode::KnownBounds { upper, lower } => ShapingState::known(upper, lower),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ShapingMode::None => "none",
            ShapingMode::OnlineBounds => "online_bounds",
            ShapingMode::KnownBounds { .. } => "known_bounds",
            ShapingMode::StrictPaperBounds => "strict_paper_bounds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub update_period: usize,
    pub max_steps_per_episode: usize,
    pub episodes: usize,
    pub seed: u64,
    pub shaping_mode: ShapingMode,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 1000,
            update_period: 32,
            max_steps_per_episode: 1000,
            episodes: 2000,
            seed: 0,
            shaping_mode: ShapingMode::OnlineBounds,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::InvalidConfig {
                field: field.into(),
                reason,
            })
        };
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", format!("{} not in (0, 1]", self.alpha));
        }
        for (field, eps) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                return bad(field, format!("{eps} not in [0, 1]"));
            }
        }
        if self.update_period == 0 {
            return bad("update_period", "must be at least 1".into());
        }
        self.shaping_mode.initial_state()?;
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over
    /// `epsilon_decay_episodes`, constant afterwards.
    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.epsilon_decay_episodes == 0 {
            return self.epsilon_end;
        }
        let frac = (episode as f64 / self.epsilon_decay_episodes as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Shaping bookkeeping kept out of the reported learning curves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ShapingDiagnostics {
    pub updates: u64,
    pub nonzero_potential_steps: u64,
    pub shaping_bonus_sum: f64,
    pub shaping_bonus_abs_max: f64,
    pub held_back_records: u64,
}

/// `Q(s,a) += alpha * (r + f + gamma * M - Q(s,a))` with `M = 0` at a
/// terminal successor and `max_a' Q(s', a')` otherwise.
#[allow(clippy::too_many_arguments)]
pub fn q_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    f: f64,
    s_next: usize,
    is_terminal: bool,
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    q.check(s, a)?;
    q.check(s_next, 0)?;
    ensure_finite("reward", r)?;
    ensure_finite("shaping bonus", f)?;
    let bootstrap = if is_terminal {
        0.0
    } else {
        q.max_value(s_next)
    };
    let old = q.get(s, a);
    let new = old + alpha * (r + f + gamma * bootstrap - old);
    q.set(s, a, ensure_finite("q value", new)?);
    Ok(())
}

/// One uniform draw decides exploration; exploring spends one bounded
/// draw on the action.
pub fn epsilon_greedy(q: &QTable, s: usize, epsilon: f64, rng: &mut SeededRng) -> usize {
    if rng.uniform() < epsilon {
        rng.below(q.n_actions())
    } else {
        q.greedy_action(s)
    }
}

/// Applies buffered records newest to oldest and removes them. With
/// shaping active and `hold_newest`, the newest record stays buffered.
fn flush(
    buffer: &mut Vec<TransitionRecord>,
    q: &mut QTable,
    config: &LearnerConfig,
    gamma: f64,
    hold_newest: bool,
    diag: &mut ShapingDiagnostics,
) -> Result<()> {
    let n = buffer.len();
    let ready = if hold_newest { n.saturating_sub(1) } else { n };
    for i in (0..ready).rev() {
        let rec = buffer[i];
        let phi_next = match buffer.get(i + 1) {
            Some(next) => next.phi_s,
            // terminal successor, or an episode cut off by the step cap
            None => 0.0,
        };
        let f = shaping_bonus(rec.phi_s, phi_next, gamma);
        q_update(
            q,
            rec.state,
            rec.action,
            rec.reward,
            f,
            rec.next_state,
            rec.is_terminal,
            config.alpha,
            gamma,
        )?;
        diag.updates += 1;
        diag.shaping_bonus_sum += f;
        diag.shaping_bonus_abs_max = diag.shaping_bonus_abs_max.max(f.abs());
    }
    buffer.drain(..ready);
    diag.held_back_records += buffer.len() as u64;
    Ok(())
}

/// Runs one episode from the start state. Does not fold the episode into
/// the shaping bounds; the caller does that with
/// [`ShapingState::finish_episode`].
pub fn run_episode_pbrs<E: Environment + ?Sized>(
    env: &E,
    q: &mut QTable,
    shaping: &mut ShapingState,
    config: &LearnerConfig,
    episode_index: usize,
    rng: &mut SeededRng,
    diag: &mut ShapingDiagnostics,
) -> Result<EpisodeTrace> {
    let gamma = env.gamma();
    let active = config.shaping_mode.is_active();
    let epsilon = config.epsilon(episode_index);
    let max_steps = env.max_steps().min(config.max_steps_per_episode);
    let bounds = BoundsSnapshot {
        upper: shaping.max_episode_reward,
        lower: shaping.min_episode_reward,
    };
    shaping.current_episode_reward = 0.0;

    let mut records = Vec::new();
    let mut buffer: Vec<TransitionRecord> = Vec::with_capacity(config.update_period + 1);
    let mut since_flush = 0;
    let mut s = env.start_state();

    for _ in 0..max_steps {
        let a = epsilon_greedy(q, s, epsilon, rng);
        let step = env.step(s, a, rng)?;
        shaping.accumulate_step(step.reward)?;
        let phi_s = if active {
            potential(step.reward, shaping)
        } else {
            0.0
        };
        if phi_s != 0.0 {
            diag.nonzero_potential_steps += 1;
        }
        let rec = TransitionRecord {
            state: s,
            action: a,
            reward: step.reward,
            phi_s,
            next_state: step.next_state,
            is_terminal: step.terminal,
        };
        buffer.push(rec);
        records.push(rec);
        s = step.next_state;
        since_flush += 1;

        if step.terminal {
            flush(&mut buffer, q, config, gamma, false, diag)?;
            break;
        }
        if since_flush >= config.update_period {
            flush(&mut buffer, q, config, gamma, active, diag)?;
            since_flush = 0;
        }
    }
    // step cap reached: the newest record never gets a successor
    flush(&mut buffer, q, config, gamma, false, diag)?;

    Ok(EpisodeTrace {
        episode_reward: records.iter().map(|r| r.reward).sum(),
        records,
        episode_index,
        bounds,
    })
}

/// Learner state for one task.
#[derive(Debug, Clone)]
pub struct TaskLearner {
    pub q: QTable,
    pub shaping: ShapingState,
    pub diagnostics: ShapingDiagnostics,
    pub episodes_done: usize,
    rng: SeededRng,
}

impl TaskLearner {
    /// `task_index` selects the training stream, so a task trained inside a
    /// multi-task loop sees exactly the draws it would see alone.
    pub fn new<E: Environment + ?Sized>(
        env: &E,
        config: &LearnerConfig,
        task_index: u64,
    ) -> Result<Self> {
        Ok(Self {
            q: QTable::zeros(env.n_states(), env.n_actions()),
            shaping: config.shaping_mode.initial_state()?,
            diagnostics: ShapingDiagnostics::default(),
            episodes_done: 0,
            rng: SeededRng::stream(config.seed, streams::TRAIN + task_index),
        })
    }

    pub fn train_episode<E: Environment + ?Sized>(
        &mut self,
        env: &E,
        config: &LearnerConfig,
    ) -> Result<EpisodeTrace> {
        let trace = run_episode_pbrs(
            env,
            &mut self.q,
            &mut self.shaping,
            config,
            self.episodes_done,
            &mut self.rng,
            &mut self.diagnostics,
        )?;
        self.shaping.finish_episode();
        self.episodes_done += 1;
        Ok(trace)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    /// Environment reward per episode; shaping never enters it.
    pub per_episode_reward: Vec<f64>,
    pub q: QTable,
    pub shaping: ShapingState,
    pub diagnostics: ShapingDiagnostics,
}

pub fn run_training<E: Environment + ?Sized>(
    env: &E,
    config: &LearnerConfig,
) -> Result<TrainingRun> {
    run_training_with(env, config, |_| {})
}

/// Like [`run_training`], handing every finished episode trace to
/// `observe`.
pub fn run_training_with<E: Environment + ?Sized>(
    env: &E,
    config: &LearnerConfig,
    mut observe: impl FnMut(&EpisodeTrace),
) -> Result<TrainingRun> {
    config.validate()?;
    let mut learner = TaskLearner::new(env, config, 0)?;
    let mut per_episode_reward = Vec::with_capacity(config.episodes);
    for _ in 0..config.episodes {
        let trace = learner.train_episode(env, config)?;
        per_episode_reward.push(trace.episode_reward);
        observe(&trace);
    }
    Ok(TrainingRun {
        per_episode_reward,
        q: learner.q,
        shaping: learner.shaping,
        diagnostics: learner.diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskRun {
    pub per_episode_reward: Vec<f64>,
    pub per_episode_task: Vec<TaskId>,
    pub q: Vec<QTable>,
    pub registry: TaskShapingRegistry,
    pub diagnostics: Vec<ShapingDiagnostics>,
}

/// Trains one learner per task, choosing the task of each episode with the
/// suite's schedule. Tasks share nothing but the loop.
pub fn run_multitask_training(suite: &TaskSuite, config: &LearnerConfig) -> Result<MultiTaskRun> {
    run_multitask_training_per_task(suite, &vec![config.clone(); suite.tasks().len()])
}

/// Like [`run_multitask_training`] with one config per task, e.g. for
/// per-task known bounds. The episode count and the schedule seed come
/// from the first.
pub fn run_multitask_training_per_task(
    suite: &TaskSuite,
    configs: &[LearnerConfig],
) -> Result<MultiTaskRun> {
    if configs.len() != suite.tasks().len() {
        return Err(Error::InvalidConfig {
            field: "configs".into(),
            reason: format!(
                "{} configs for {} tasks",
                configs.len(),
                suite.tasks().len()
            ),
        });
    }
    for c in configs {
        c.validate()?;
    }
    let lead = &configs[0];
    let mut learners = suite
        .tasks()
        .iter()
        .zip(configs)
        .enumerate()
        .map(|(i, ((_, env), cfg))| TaskLearner::new(env, cfg, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut schedule_rng = SeededRng::stream(lead.seed, streams::SCHEDULE);
    let mut per_episode_reward = Vec::with_capacity(lead.episodes);
    let mut per_episode_task = Vec::with_capacity(lead.episodes);

    for episode in 0..lead.episodes {
        let idx = suite.next_task(episode, &mut schedule_rng);
        let (task, env) = &suite.tasks()[idx];
        let trace = learners[idx].train_episode(env, &configs[idx])?;
        per_episode_reward.push(trace.episode_reward);
        per_episode_task.push(task.clone());
    }

    let mut registry = TaskShapingRegistry::new(lead.shaping_mode.initial_state()?);
    for ((task, _), learner) in suite.tasks().iter().zip(&learners) {
        *registry.state_mut(task) = learner.shaping;
    }
    Ok(MultiTaskRun {
        per_episode_reward,
        per_episode_task,
        q: learners.iter().map(|l| l.q.clone()).collect(),
        registry,
        diagnostics: learners.iter().map(|l| l.diagnostics).collect(),
    })
}

/// Greedy rollouts; returns the environment reward of each episode.
pub fn evaluate_policy<E: Environment + ?Sized>(
    env: &E,
    q: &QTable,
    episodes: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.start_state();
        let mut total = 0.0;
        for _ in 0..env.max_steps() {
            let a = epsilon_greedy(q, s, 0.0, rng);
            let step = env.step(s, a, rng)?;
            total += step.reward;
            s = step.next_state;
            if step.terminal {
                break;
            }
        }
        out.push(total);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EpisodicEnv, GridSpec};
    use crate::mdp::Step;
    use approx::assert_abs_diff_eq;

    /// Deterministic chain of `len` cells; action 1 moves right, action 0
    /// stays. Reaching the last cell ends the episode with `goal`.
    struct Chain {
        len: usize,
        goal: f64,
        max_steps: usize,
    }

    impl Environment for Chain {
        fn n_states(&self) -> usize {
            self.len
        }
        fn n_actions(&self) -> usize {
            2
        }
        fn gamma(&self) -> f64 {
            0.9
        }
        fn start_state(&self) -> usize {
            0
        }
        fn max_steps(&self) -> usize {
            self.max_steps
        }
        fn step(&self, state: usize, action: usize, _rng: &mut SeededRng) -> Result<Step> {
            let next = (state + action).min(self.len - 1);
            let terminal = next == self.len - 1;
            Ok(Step {
                reward: if terminal { self.goal } else { 0.0 },
                next_state: next,
                terminal,
            })
        }
    }

    struct Broken;

    impl Environment for Broken {
        fn n_states(&self) -> usize {
            1
        }
        fn n_actions(&self) -> usize {
            1
        }
        fn gamma(&self) -> f64 {
            0.9
        }
        fn start_state(&self) -> usize {
            0
        }
        fn max_steps(&self) -> usize {
            5
        }
        fn step(&self, _: usize, _: usize, _: &mut SeededRng) -> Result<Step> {
            Err(Error::Step("sensor offline".into()))
        }
    }

    #[test]
    fn q_update_examples() {
        let mut q = QTable::zeros(2, 2);
        q_update(&mut q, 0, 1, 1.0, 0.0, 1, false, 0.5, 0.9).unwrap();
        assert_abs_diff_eq!(q.get(0, 1), 0.5, epsilon = 1e-15);

        let before = q.clone();
        q_update(&mut q, 0, 1, 1.0, 0.0, 1, false, 0.0, 0.9).unwrap();
        assert_eq!(q, before);

        let mut q = QTable::zeros(2, 2);
        q_update(&mut q, 0, 0, 1.0, 0.5, 1, false, 0.5, 0.9).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 0.75, epsilon = 1e-15);
        assert_eq!(q.get(0, 1), 0.0);
        assert_eq!(q.get(1, 0), 0.0);
    }

    #[test]
    fn q_update_terminal_ignores_successor() {
        let mut q = QTable::zeros(2, 1);
        q.set(1, 0, 100.0);
        q_update(&mut q, 0, 0, 1.0, 0.0, 1, true, 1.0, 0.9).unwrap();
        assert_eq!(q.get(0, 0), 1.0);
        q_update(&mut q, 0, 0, 1.0, 0.0, 1, false, 1.0, 0.9).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 91.0, epsilon = 1e-12);
    }

    #[test]
    fn q_update_rejects_bad_input() {
        let mut q = QTable::zeros(2, 2);
        assert!(matches!(
            q_update(&mut q, 2, 0, 0.0, 0.0, 0, false, 0.5, 0.9),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            q_update(&mut q, 0, 2, 0.0, 0.0, 0, false, 0.5, 0.9),
            Err(Error::OutOfRange { .. })
        ));
        assert!(q_update(&mut q, 0, 0, f64::NAN, 0.0, 0, false, 0.5, 0.9).is_err());
    }

    #[test]
    fn greedy_ties_go_to_lowest_index() {
        let mut q = QTable::zeros(1, 4);
        assert_eq!(q.greedy_action(0), 0);
        q.set(0, 2, 1.0);
        q.set(0, 3, 1.0);
        assert_eq!(q.greedy_action(0), 2);
    }

    #[test]
    fn epsilon_zero_is_greedy() {
        let mut q = QTable::zeros(1, 3);
        q.set(0, 1, 0.3);
        let mut rng = SeededRng::new(5);
        assert!((0..1000).all(|_| epsilon_greedy(&q, 0, 0.0, &mut rng) == 1));
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let q = QTable::zeros(1, 2);
        let mut rng = SeededRng::new(11);
        let ones = (0..10_000)
            .filter(|_| epsilon_greedy(&q, 0, 1.0, &mut rng) == 1)
            .count();
        let freq = ones as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&freq), "freq {freq}");
    }

    #[test]
    fn epsilon_schedule_is_linear() {
        let cfg = LearnerConfig {
            epsilon_start: 1.0,
            epsilon_end: 0.0,
            epsilon_decay_episodes: 10,
            ..Default::default()
        };
        assert_eq!(cfg.epsilon(0), 1.0);
        assert_abs_diff_eq!(cfg.epsilon(5), 0.5, epsilon = 1e-15);
        assert_eq!(cfg.epsilon(10), 0.0);
        assert_eq!(cfg.epsilon(50), 0.0);
        let instant = LearnerConfig {
            epsilon_decay_episodes: 0,
            epsilon_end: 0.1,
            ..Default::default()
        };
        assert_eq!(instant.epsilon(0), 0.1);
    }

    #[test]
    fn config_validation_names_field() {
        let cfg = LearnerConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(
            matches!(cfg.validate(), Err(Error::InvalidConfig { field, .. }) if field == "alpha")
        );
        let cfg = LearnerConfig {
            update_period: 0,
            ..Default::default()
        };
        assert!(
            matches!(cfg.validate(), Err(Error::InvalidConfig { field, .. }) if field == "update_period")
        );
        let cfg = LearnerConfig {
            epsilon_end: 1.5,
            ..Default::default()
        };
        assert!(
            matches!(cfg.validate(), Err(Error::InvalidConfig { field, .. }) if field == "epsilon_end")
        );
    }

    #[test]
    fn single_step_terminal_episode() {
        let env = Chain {
            len: 2,
            goal: 1.0,
            max_steps: 10,
        };
        let cfg = LearnerConfig {
            epsilon_start: 0.0,
            epsilon_end: 0.0,
            shaping_mode: ShapingMode::OnlineBounds,
            ..Default::default()
        };
        let mut q = QTable::zeros(2, 2);
        // prefer moving right
        q.set(0, 1, 1e-9);
        let mut shaping = ShapingState::online();
        let mut diag = ShapingDiagnostics::default();
        let trace = run_episode_pbrs(
            &env,
            &mut q,
            &mut shaping,
            &cfg,
            0,
            &mut SeededRng::new(0),
            &mut diag,
        )
        .unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].phi_s, 0.0);
        assert!(trace.records[0].is_terminal);
        assert_abs_diff_eq!(
            q.get(0, 1),
            1e-9 + cfg.alpha * (1.0 - 1e-9),
            epsilon = 1e-15
        );
        assert_eq!(diag.shaping_bonus_sum, 0.0);
        assert_eq!(diag.updates, 1);
    }

    #[test]
    fn bounds_stay_degenerate_until_two_distinct_scores() {
        // a chain walked right gives the same score every episode
        let env = Chain {
            len: 4,
            goal: 3.0,
            max_steps: 10,
        };
        let cfg = LearnerConfig {
            epsilon_start: 0.0,
            epsilon_end: 0.0,
            ..Default::default()
        };
        let mut learner = TaskLearner::new(&env, &cfg, 0).unwrap();
        for s in 0..3 {
            learner.q.set(s, 1, 1e-9);
        }
        let first = learner.train_episode(&env, &cfg).unwrap();
        assert_eq!(first.episode_reward, 3.0);
        assert_eq!(
            (
                learner.shaping.max_episode_reward,
                learner.shaping.min_episode_reward
            ),
            (3.0, 3.0)
        );
        let second = learner.train_episode(&env, &cfg).unwrap();
        assert_eq!(
            second.bounds,
            BoundsSnapshot {
                upper: 3.0,
                lower: 3.0
            }
        );
        assert!(second.records.iter().all(|r| r.phi_s == 0.0));
    }

    #[test]
    fn potentials_follow_bounds_once_scores_differ() {
        let env = Chain {
            len: 3,
            goal: 1.0,
            max_steps: 10,
        };
        let cfg = LearnerConfig {
            epsilon_start: 0.0,
            epsilon_end: 0.0,
            ..Default::default()
        };
        let mut learner = TaskLearner::new(&env, &cfg, 0).unwrap();
        // bounds from two earlier episodes scoring 2 and 0
        learner.shaping = ShapingState {
            max_episode_reward: 2.0,
            min_episode_reward: 0.0,
            ..ShapingState::online()
        };
        for s in 0..2 {
            learner.q.set(s, 1, 1e-9);
        }
        let trace = learner.train_episode(&env, &cfg).unwrap();
        let last = trace.records.last().unwrap();
        // 1 + (1 - 2) / 2
        assert_abs_diff_eq!(last.phi_s, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn step_failure_propagates() {
        let cfg = LearnerConfig::default();
        let err = run_training(&Broken, &LearnerConfig { episodes: 1, ..cfg }).unwrap_err();
        assert!(matches!(err, Error::Step(_)));
    }

    #[test]
    fn zero_episodes_is_empty() {
        let env = Chain {
            len: 3,
            goal: 1.0,
            max_steps: 10,
        };
        let run = run_training(
            &env,
            &LearnerConfig {
                episodes: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(run.per_episode_reward.is_empty());
        assert_eq!(run.q, QTable::zeros(3, 2));
    }

    #[test]
    fn every_record_is_applied_once() {
        let spec = GridSpec::parse_map(
            "step_reward = 0\nmax_steps = 60\ngoal_reward = 1\ngamma = 0.9\n\nSo.x\n.o.G\n",
        )
        .unwrap();
        let env = EpisodicEnv::from_spec("t", &spec).unwrap();
        for period in [1, 3, 7, 32] {
            let cfg = LearnerConfig {
                episodes: 40,
                update_period: period,
                seed: 3,
                ..Default::default()
            };
            let mut steps = 0u64;
            let run = run_training_with(&env, &cfg, |t| steps += t.records.len() as u64).unwrap();
            assert_eq!(run.diagnostics.updates, steps, "period {period}");
        }
    }

    #[test]
    fn greedy_evaluation_follows_tie_break() {
        // action 0 is "up": blocked on the top row, so a zero table stays put
        let spec = GridSpec::parse_map(
            "step_reward = 0\nmax_steps = 7\ngoal_reward = 1\ngamma = 0.9\n\nSG\n",
        )
        .unwrap();
        let env = EpisodicEnv::from_spec("t", &spec).unwrap();
        let q = QTable::zeros(env.n_states(), env.n_actions());
        let rewards = evaluate_policy(&env, &q, 3, &mut SeededRng::new(0)).unwrap();
        assert_eq!(rewards, vec![0.0; 3]);

        let mut q = q;
        q.set(env.start_state(), crate::envs::Move::Right as usize, 0.1);
        let rewards = evaluate_policy(&env, &q, 3, &mut SeededRng::new(0)).unwrap();
        assert_eq!(rewards, vec![1.0; 3]);
    }
}
