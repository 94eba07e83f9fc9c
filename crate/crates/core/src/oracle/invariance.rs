use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Outcome, TabularMdp};
use crate::rng::SeededRng;
use crate::shaping::StaticPotential;

use super::solver::value_iteration;

const SOLVER_TOLERANCE: f64 = 1e-12;
const SOLVER_MAX_ITERATIONS: usize = 1_000_000;

/// Adds `gamma * phi(s') - phi(s)` to every reward, with the MDP's own
/// discount.
pub fn shape_mdp_static(mdp: &TabularMdp, phi: &StaticPotential) -> Result<TabularMdp> {
    shape_mdp_with_discount(mdp, phi, mdp.gamma())
}

/// Like [`shape_mdp_static`] but with an arbitrary shaping discount. Any
/// value other than the MDP's gamma breaks the potential structure; this
/// exists to show the checker notices.
pub fn shape_mdp_with_discount(
    mdp: &TabularMdp,
    phi: &StaticPotential,
    shaping_gamma: f64,
) -> Result<TabularMdp> {
    if phi.len() != mdp.n_states() {
        return Err(Error::InvalidMdp {
            field: "potential",
            reason: format!("{} values for {} states", phi.len(), mdp.n_states()),
        });
    }
    for &t in mdp.terminals() {
        let value = phi.lookup(t)?;
        if value != 0.0 {
            return Err(Error::TerminalPotential { state: t, value });
        }
    }
    let values = phi.values();
    mdp.map_rewards(|s, _, o: &Outcome| o.reward + shaping_gamma * values[o.next] - values[s])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub pass: bool,
    /// Non-terminal states whose near-optimal action sets differ.
    pub mismatched_states: Vec<usize>,
    /// `max |Q'(s,a) - Q(s,a) + phi(s)|`.
    pub max_q_gap: f64,
    pub tolerance: f64,
}

/// Solves the MDP with and without static shaping and compares the sets
/// of `tolerance`-optimal actions state by state.
pub fn check_policy_invariance(
    mdp: &TabularMdp,
    phi: &StaticPotential,
    tolerance: f64,
) -> Result<InvarianceReport> {
    let shaped = shape_mdp_static(mdp, phi)?;
    compare_optimal_actions(mdp, &shaped, phi, tolerance)
}

/// Core of [`check_policy_invariance`], for an arbitrary second MDP.
pub fn compare_optimal_actions(
    original: &TabularMdp,
    shaped: &TabularMdp,
    phi: &StaticPotential,
    tolerance: f64,
) -> Result<InvarianceReport> {
    let base = value_iteration(original, SOLVER_TOLERANCE, SOLVER_MAX_ITERATIONS)?;
    let alt = value_iteration(shaped, SOLVER_TOLERANCE, SOLVER_MAX_ITERATIONS)?;
    let mut mismatched_states = Vec::new();
    let mut max_q_gap: f64 = 0.0;
    for s in 0..original.n_states() {
        for a in 0..original.n_actions() {
            max_q_gap = max_q_gap.max((alt.q(s, a) - base.q(s, a) + phi.values()[s]).abs());
        }
        if !original.is_terminal(s)
            && base.near_optimal_actions(s, tolerance) != alt.near_optimal_actions(s, tolerance)
        {
            mismatched_states.push(s);
        }
    }
    Ok(InvarianceReport {
        pass: mismatched_states.is_empty() && max_q_gap <= tolerance,
        mismatched_states,
        max_q_gap,
        tolerance,
    })
}

/// A random MDP with 2..=`max_states` states and 2..=`max_actions`
/// actions. Each row normalizes uniform weights (a few zeroed out),
/// rewards are uniform in `[-1, 1]`, gamma uniform in `[0, 0.95]`, and
/// every non-start state is terminal with probability 0.2.
pub fn random_mdp(rng: &mut SeededRng, max_states: usize, max_actions: usize) -> TabularMdp {
    let n = 2 + rng.below(max_states.max(2) - 1);
    let m = 2 + rng.below(max_actions.max(2) - 1);
    let gamma = 0.95 * rng.uniform();
    let terminals = (1..n).filter(|_| rng.uniform() < 0.2).collect();
    let rows = (0..n * m)
        .map(|_| {
            let mut weights: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.uniform() < 0.3 {
                        0.0
                    } else {
                        rng.uniform()
                    }
                })
                .collect();
            if weights.iter().all(|&w| w == 0.0) {
                weights[rng.below(n)] = 1.0;
            }
            let total: f64 = weights.iter().sum();
            weights
                .iter()
                .enumerate()
                .map(|(next, w)| Outcome {
                    next,
                    probability: w / total,
                    reward: 2.0 * rng.uniform() - 1.0,
                })
                .collect()
        })
        .collect();
    TabularMdp::new(n, m, rows, gamma, terminals, 0).expect("generated rows are normalized")
}

/// Uniform potentials in `[-scale, scale]`, zero on terminals.
pub fn random_potential(mdp: &TabularMdp, rng: &mut SeededRng, scale: f64) -> StaticPotential {
    let values = (0..mdp.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                0.0
            } else {
                scale * (2.0 * rng.uniform() - 1.0)
            }
        })
        .collect();
    StaticPotential::new(values).expect("finite by construction")
}
