//! Tabular MDP model, transition records and episode traces.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::SeededRng;

const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// One possible result of taking an action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub next: usize,
    pub probability: f64,
    pub reward: f64,
}

/// A finite MDP `(S, A, T, gamma, R)` with a terminal set and a start state.
///
/// Transitions are stored sparsely: for each `(s, a)` the list of outcomes
/// with nonzero probability. `R` is indexed by `(s, a, s')`; a reward that
/// only depends on `(s, a)` simply repeats across outcomes.
///
/// Terminal rows are rewritten at construction into reward-free self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    outcomes: Vec<Vec<Outcome>>,
    gamma: f64,
    terminals: BTreeSet<usize>,
    start_state: usize,
}

impl TabularMdp {
    /// Builds and validates a model. `outcomes` is row-major over
    /// `(state, action)`. Zero-probability outcomes are dropped and duplicate
    /// successors are merged (probabilities summed); merging requires equal
    /// rewards.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        outcomes: Vec<Vec<Outcome>>,
        gamma: f64,
        terminals: BTreeSet<usize>,
        start_state: usize,
    ) -> Result<Self> {
        let invalid = |field, reason: String| Error::InvalidMdp { field, reason };
        if n_states == 0 || n_actions == 0 {
            return Err(invalid(
                "n_states",
                "state and action sets must be non-empty".into(),
            ));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid("gamma", format!("{gamma} not in [0, 1)")));
        }
        if start_state >= n_states {
            return Err(invalid(
                "start_state",
                format!("{start_state} >= {n_states}"),
            ));
        }
        if let Some(&t) = terminals.iter().find(|&&t| t >= n_states) {
            return Err(invalid("terminals", format!("{t} >= {n_states}")));
        }
        if outcomes.len() != n_states * n_actions {
            return Err(invalid(
                "transition",
                format!("{} rows, expected {}", outcomes.len(), n_states * n_actions),
            ));
        }

        let mut rows = Vec::with_capacity(outcomes.len());
        for (idx, row) in outcomes.into_iter().enumerate() {
            let (s, a) = (idx / n_actions, idx % n_actions);
            if terminals.contains(&s) {
                rows.push(vec![Outcome {
                    next: s,
                    probability: 1.0,
                    reward: 0.0,
                }]);
                continue;
            }
            let mut merged: Vec<Outcome> = Vec::with_capacity(row.len());
            let mut total = 0.0;
            for o in row {
                if !(0.0..=1.0).contains(&o.probability) {
                    return Err(invalid(
                        "transition",
                        format!("T({s},{a},{}) = {} outside [0, 1]", o.next, o.probability),
                    ));
                }
                if o.next >= n_states {
                    return Err(invalid(
                        "transition",
                        format!("successor {} >= {n_states}", o.next),
                    ));
                }
                if !o.reward.is_finite() {
                    return Err(invalid(
                        "reward",
                        format!("R({s},{a},{}) = {}", o.next, o.reward),
                    ));
                }
                total += o.probability;
                if o.probability == 0.0 {
                    continue;
                }
                match merged.iter_mut().find(|m| m.next == o.next) {
                    Some(m) if m.reward == o.reward => m.probability += o.probability,
                    Some(_) => {
                        return Err(invalid(
                            "reward",
                            format!(
                                "conflicting rewards for duplicate successor ({s},{a},{})",
                                o.next
                            ),
                        ))
                    }
                    None => merged.push(o),
                }
            }
            if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(invalid(
                    "transition",
                    format!("row ({s},{a}) sums to {total}"),
                ));
            }
            rows.push(merged);
        }

        Ok(Self {
            n_states,
            n_actions,
            outcomes: rows,
            gamma,
            terminals,
            start_state,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn start_state(&self) -> usize {
        self.start_state
    }

    pub fn terminals(&self) -> &BTreeSet<usize> {
        &self.terminals
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminals.contains(&s)
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.outcomes[s * self.n_actions + a]
    }

    /// All rows, row-major over `(state, action)`.
    pub fn rows(&self) -> &[Vec<Outcome>] {
        &self.outcomes
    }

    /// `T(s, a, s')`.
    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.outcomes(s, a)
            .iter()
            .find(|o| o.next == next)
            .map_or(0.0, |o| o.probability)
    }

    /// `R(s, a, s')`; zero for unreachable successors.
    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.outcomes(s, a)
            .iter()
            .find(|o| o.next == next)
            .map_or(0.0, |o| o.reward)
    }

    pub fn is_deterministic(&self) -> bool {
        self.outcomes.iter().all(|row| row.len() == 1)
    }

    /// Same model with every reward replaced by `f(s, a, outcome)`.
    /// Transition probabilities, gamma and terminals are kept bit-for-bit.
    pub fn map_rewards(&self, mut f: impl FnMut(usize, usize, &Outcome) -> f64) -> Result<Self> {
        let mut out = self.clone();
        for (idx, row) in out.outcomes.iter_mut().enumerate() {
            let (s, a) = (idx / self.n_actions, idx % self.n_actions);
            if self.terminals.contains(&s) {
                continue;
            }
            for o in row.iter_mut() {
                o.reward = ensure_finite("reward", f(s, a, o))?;
            }
        }
        Ok(out)
    }

    /// Samples a successor. Deterministic rows consume no randomness;
    /// stochastic rows consume exactly one uniform draw.
    pub fn sample(&self, s: usize, a: usize, rng: &mut SeededRng) -> Outcome {
        let row = self.outcomes(s, a);
        if row.len() == 1 {
            return row[0];
        }
        let u = rng.uniform();
        let mut acc = 0.0;
        for o in row {
            acc += o.probability;
            if u < acc {
                return *o;
            }
        }
        // rounding left a sliver above the cumulative sum
        *row.last().expect("validated rows are non-empty")
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
}

/// An episodic environment over integer states and actions.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn gamma(&self) -> f64;
    fn start_state(&self) -> usize;
    /// Episode length cap.
    fn max_steps(&self) -> usize;
    fn step(&self, state: usize, action: usize, rng: &mut SeededRng) -> Result<Step>;
}

/// One buffered step `(s, a, r, phi_s, s', terminal)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub phi_s: f64,
    pub next_state: usize,
    pub is_terminal: bool,
}

/// Episode-reward bounds in force while an episode ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsSnapshot {
    pub upper: f64,
    pub lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub records: Vec<TransitionRecord>,
    /// Sum of environment rewards, unshaped.
    pub episode_reward: f64,
    pub episode_index: usize,
    pub bounds: BoundsSnapshot,
}

impl EpisodeTrace {
    /// Running episode reward after each record.
    pub fn cumulative_rewards(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r.reward;
                Some(*acc)
            })
            .collect()
    }
}

/// `sum_k gamma^k r_{k+1}`, summed front to back.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64> {
    ensure_finite("gamma", gamma)?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidMdp {
            field: "gamma",
            reason: format!("{gamma} not in [0, 1)"),
        });
    }
    let mut total = 0.0;
    let mut discount = 1.0;
    for &r in rewards {
        total += discount * ensure_finite("reward", r)?;
        discount *= gamma;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn det(next: usize, reward: f64) -> Vec<Outcome> {
        vec![Outcome {
            next,
            probability: 1.0,
            reward,
        }]
    }

    fn chain() -> TabularMdp {
        // 0 -> 1 -> 2(terminal), one action
        TabularMdp::new(
            3,
            1,
            vec![det(1, 0.0), det(2, 1.0), det(0, 5.0)],
            0.9,
            [2].into(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.0).unwrap(), 1.0);
        assert_eq!(discounted_return(&[], 0.9).unwrap(), 0.0);
        assert_abs_diff_eq!(
            discounted_return(&[1.0, 1.0, 1.0], 0.5).unwrap(),
            1.75,
            epsilon = 1e-12
        );
    }

    #[test]
    fn discounted_return_rejects_non_finite() {
        assert!(matches!(
            discounted_return(&[1.0, f64::NAN], 0.5),
            Err(Error::NonFinite { .. })
        ));
        assert!(discounted_return(&[1.0], 1.0).is_err());
    }

    #[test]
    fn terminal_rows_become_self_loops() {
        let mdp = chain();
        assert_eq!(
            mdp.outcomes(2, 0),
            &[Outcome {
                next: 2,
                probability: 1.0,
                reward: 0.0
            }]
        );
        assert_eq!(mdp.reward(1, 0, 2), 1.0);
        assert_eq!(mdp.transition(0, 0, 2), 0.0);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad = vec![
            vec![Outcome {
                next: 1,
                probability: 0.5,
                reward: 0.0,
            }],
            det(1, 0.0),
        ];
        let err = TabularMdp::new(2, 1, bad, 0.9, BTreeSet::new(), 0).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidMdp {
                field: "transition",
                ..
            }
        ));

        let err = TabularMdp::new(
            2,
            1,
            vec![det(1, 0.0), det(0, 0.0)],
            1.0,
            BTreeSet::new(),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidMdp { field: "gamma", .. }));

        let err =
            TabularMdp::new(2, 1, vec![det(1, 0.0), det(0, 0.0)], 0.5, [5].into(), 0).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidMdp {
                field: "terminals",
                ..
            }
        ));

        let err = TabularMdp::new(
            2,
            1,
            vec![det(1, 0.0), det(0, 0.0)],
            0.5,
            BTreeSet::new(),
            2,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidMdp {
                field: "start_state",
                ..
            }
        ));
    }

    #[test]
    fn merges_duplicate_successors() {
        let row = vec![
            Outcome {
                next: 1,
                probability: 0.25,
                reward: 1.0,
            },
            Outcome {
                next: 1,
                probability: 0.75,
                reward: 1.0,
            },
        ];
        let mdp = TabularMdp::new(2, 1, vec![row, det(0, 0.0)], 0.5, BTreeSet::new(), 0).unwrap();
        assert_eq!(mdp.outcomes(0, 0).len(), 1);
        assert!(mdp.is_deterministic());
    }

    #[test]
    fn cumulative_rewards_track_episode_reward() {
        let rec = |reward| TransitionRecord {
            state: 0,
            action: 0,
            reward,
            phi_s: 0.0,
            next_state: 0,
            is_terminal: false,
        };
        let trace = EpisodeTrace {
            records: vec![rec(1.0), rec(0.0), rec(-2.0)],
            episode_reward: -1.0,
            episode_index: 0,
            bounds: BoundsSnapshot {
                upper: f64::NEG_INFINITY,
                lower: f64::INFINITY,
            },
        };
        assert_eq!(trace.cumulative_rewards(), vec![1.0, 1.0, -1.0]);
    }

    fn stochastic_mdp() -> impl Strategy<Value = TabularMdp> {
        (2usize..6, 1usize..4).prop_flat_map(|(n, m)| {
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), n * m).prop_map(
                move |weights| {
                    let rows = weights
                        .into_iter()
                        .map(|w| {
                            let total: f64 = w.iter().sum::<f64>() + 1e-3;
                            let mut row: Vec<Outcome> = w
                                .iter()
                                .enumerate()
                                .map(|(next, x)| Outcome {
                                    next,
                                    probability: x / total,
                                    reward: 0.0,
                                })
                                .collect();
                            row[0].probability += 1e-3 / total;
                            row
                        })
                        .collect();
                    TabularMdp::new(n, m, rows, 0.9, BTreeSet::new(), 0).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn discounted_return_is_linear(
            rewards in prop::collection::vec(-10.0f64..10.0, 0..50),
            scale in -5.0f64..5.0,
            gamma in 0.0f64..0.999,
        ) {
            let scaled: Vec<f64> = rewards.iter().map(|r| r * scale).collect();
            let lhs = discounted_return(&scaled, gamma).unwrap();
            let rhs = scale * discounted_return(&rewards, gamma).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn sampled_successors_have_positive_probability(mdp in stochastic_mdp(), seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            for s in 0..mdp.n_states() {
                for a in 0..mdp.n_actions() {
                    let o = mdp.sample(s, a, &mut rng);
                    prop_assert!(mdp.transition(s, a, o.next) > 0.0);
                }
            }
        }
    }
}
