use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub values: Vec<f64>,
    /// Row-major over `(state, action)`.
    pub q_values: Vec<f64>,
    pub greedy_policy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    n_actions: usize,
}

impl ExactSolution {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q_values[s * self.n_actions + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q_values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Actions within `gap` of the best action value in `s`.
    pub fn near_optimal_actions(&self, s: usize, gap: f64) -> Vec<usize> {
        let row = self.q_row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..row.len()).filter(|&a| row[a] >= best - gap).collect()
    }
}

fn backup(mdp: &TabularMdp, values: &[f64], s: usize, a: usize) -> f64 {
    mdp.outcomes(s, a)
        .iter()
        .map(|o| o.probability * (o.reward + mdp.gamma() * values[o.next]))
        .sum()
}

/// Synchronous Bellman-optimality iteration from `V = 0` until the
/// sup-norm change is at most `tolerance`. Terminal values stay 0.
pub fn value_iteration(
    mdp: &TabularMdp,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ExactSolution> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::InvalidConfig {
            field: "tolerance".into(),
            reason: format!("{tolerance} must be positive"),
        });
    }
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    while iterations < max_iterations {
        iterations += 1;
        residual = 0.0;
        for s in 0..n {
            next[s] = if mdp.is_terminal(s) {
                0.0
            } else {
                (0..m)
                    .map(|a| backup(mdp, &values, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            residual = f64::max(residual, (next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if residual <= tolerance {
            break;
        }
    }
    if residual > tolerance {
        return Err(Error::NotConverged {
            iterations,
            residual,
        });
    }

    let mut q_values = Vec::with_capacity(n * m);
    let mut greedy_policy = Vec::with_capacity(n);
    for s in 0..n {
        let row: Vec<f64> = (0..m).map(|a| backup(mdp, &values, s, a)).collect();
        let mut best = 0;
        for a in 1..m {
            if row[a] > row[best] {
                best = a;
            }
        }
        greedy_policy.push(best);
        q_values.extend(row);
    }
    Ok(ExactSolution {
        values,
        q_values,
        greedy_policy,
        iterations,
        residual,
        n_actions: m,
    })
}

/// Expected undiscounted episode reward of `policy` from the start state,
/// over at most `max_steps` steps.
pub fn expected_episode_reward(mdp: &TabularMdp, policy: &[usize], max_steps: usize) -> f64 {
    let mut dist = vec![0.0; mdp.n_states()];
    dist[mdp.start_state()] = 1.0;
    let mut total = 0.0;
    for _ in 0..max_steps {
        let mut next = vec![0.0; mdp.n_states()];
        let mut live = false;
        for (s, &p) in dist.iter().enumerate() {
            if p == 0.0 || mdp.is_terminal(s) {
                continue;
            }
            live = true;
            for o in mdp.outcomes(s, policy[s]) {
                total += p * o.probability * o.reward;
                next[o.next] += p * o.probability;
            }
        }
        if !live {
            break;
        }
        dist = next;
    }
    total
}

/// Episode reward earned by the exact optimal policy within the step cap.
pub fn optimal_episode_reward(mdp: &TabularMdp, max_steps: usize) -> Result<f64> {
    let solution = value_iteration(mdp, 1e-10, 1_000_000)?;
    Ok(expected_episode_reward(
        mdp,
        &solution.greedy_policy,
        max_steps,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Outcome;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeSet;

    fn det(next: usize, reward: f64) -> Vec<Outcome> {
        vec![Outcome {
            next,
            probability: 1.0,
            reward,
        }]
    }

    #[test]
    fn one_step_problem() {
        let mdp =
            TabularMdp::new(2, 1, vec![det(1, 1.0), det(1, 0.0)], 0.9, [1].into(), 0).unwrap();
        let sol = value_iteration(&mdp, 1e-12, 100).unwrap();
        assert_abs_diff_eq!(sol.values[0], 1.0, epsilon = 1e-12);
        assert_eq!(sol.values[1], 0.0);
    }

    #[test]
    fn three_state_chain() {
        // 0 -> 1 -> 2 -> 3(terminal), reward 1 on the final move
        let rows = vec![det(1, 0.0), det(2, 0.0), det(3, 1.0), det(3, 0.0)];
        let mdp = TabularMdp::new(4, 1, rows, 0.5, [3].into(), 0).unwrap();
        let sol = value_iteration(&mdp, 1e-12, 100).unwrap();
        assert_abs_diff_eq!(sol.values[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.values[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.values[2], 1.0, epsilon = 1e-12);
        assert_eq!(sol.values[3], 0.0);
    }

    #[test]
    fn myopic_limit() {
        let rows = vec![
            vec![
                Outcome {
                    next: 0,
                    probability: 0.5,
                    reward: 2.0,
                },
                Outcome {
                    next: 1,
                    probability: 0.5,
                    reward: 0.0,
                },
            ],
            det(1, 0.7),
            det(0, -1.0),
            det(0, 0.1),
        ];
        let mdp = TabularMdp::new(2, 2, rows, 0.0, BTreeSet::new(), 0).unwrap();
        let sol = value_iteration(&mdp, 1e-12, 10).unwrap();
        assert_abs_diff_eq!(sol.values[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.values[1], 0.1, epsilon = 1e-15);
        assert_eq!(sol.greedy_policy, vec![0, 1]);
    }

    #[test]
    fn reports_non_convergence() {
        let mdp = TabularMdp::new(1, 1, vec![det(0, 1.0)], 0.99, BTreeSet::new(), 0).unwrap();
        match value_iteration(&mdp, 1e-12, 5) {
            Err(Error::NotConverged {
                iterations: 5,
                residual,
            }) => assert!(residual > 0.0),
            other => panic!("{other:?}"),
        }
        assert!(value_iteration(&mdp, 0.0, 5).is_err());
    }

    #[test]
    fn reward_shift_moves_values_by_geometric_sum() {
        let rows = vec![det(1, 0.3), det(0, -0.2), det(0, 0.5), det(1, 0.0)];
        let mdp = TabularMdp::new(2, 2, rows, 0.8, BTreeSet::new(), 0).unwrap();
        let shifted = mdp.map_rewards(|_, _, o| o.reward + 2.0).unwrap();
        let a = value_iteration(&mdp, 1e-12, 10_000).unwrap();
        let b = value_iteration(&shifted, 1e-12, 10_000).unwrap();
        for s in 0..2 {
            assert_abs_diff_eq!(b.values[s] - a.values[s], 2.0 / (1.0 - 0.8), epsilon = 1e-6);
        }
    }

    #[test]
    fn expected_reward_of_a_path() {
        let rows = vec![det(1, 0.5), det(2, 1.0), det(2, 0.0)];
        let mdp = TabularMdp::new(3, 1, rows, 0.9, [2].into(), 0).unwrap();
        assert_eq!(expected_episode_reward(&mdp, &[0, 0, 0], 10), 1.5);
        assert_eq!(expected_episode_reward(&mdp, &[0, 0, 0], 1), 0.5);
    }
}
