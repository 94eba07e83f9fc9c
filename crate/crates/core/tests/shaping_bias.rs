//! How the reward-step potential interacts with greedy action selection.
//!
//! The potential is attached to the step that earns a reward, so the bonus
//! subtracts it from that step and hands `gamma` times it to the step
//! before. A greedy learner then prefers stalling next to a reward over
//! collecting it.

use std::collections::BTreeSet;

use pbrs::envs::EpisodicEnv;
use pbrs::learners::{evaluate_policy, run_training, LearnerConfig, ShapingMode};
use pbrs::mdp::{Outcome, TabularMdp};
use pbrs::oracle::optimal_episode_reward;
use pbrs::rng::SeededRng;

/// One decision state: action 0 waits (reward 0), action 1 ends the
/// episode with reward 1.
fn wait_or_collect() -> EpisodicEnv {
    let rows = vec![
        vec![Outcome {
            next: 0,
            probability: 1.0,
            reward: 0.0,
        }],
        vec![Outcome {
            next: 1,
            probability: 1.0,
            reward: 1.0,
        }],
        vec![Outcome {
            next: 1,
            probability: 1.0,
            reward: 0.0,
        }],
        vec![Outcome {
            next: 1,
            probability: 1.0,
            reward: 0.0,
        }],
    ];
    let mdp = TabularMdp::new(2, 2, rows, 0.9, BTreeSet::from([1]), 0).unwrap();
    EpisodicEnv::new("wait-or-collect", mdp, 20)
}

fn config(mode: ShapingMode) -> LearnerConfig {
    LearnerConfig {
        alpha: 0.5,
        epsilon_start: 0.3,
        epsilon_end: 0.3,
        epsilon_decay_episodes: 0,
        update_period: 1,
        max_steps_per_episode: 20,
        episodes: 500,
        seed: 9,
        shaping_mode: mode,
    }
}

#[test]
fn collecting_step_converges_to_reward_minus_potential() {
    let env = wait_or_collect();
    assert_eq!(optimal_episode_reward(&env.mdp, 20).unwrap(), 1.0);

    let plain = run_training(&env, &config(ShapingMode::None)).unwrap();
    assert!((plain.q.get(0, 1) - 1.0).abs() < 1e-9);
    assert_eq!(
        evaluate_policy(&env, &plain.q, 5, &mut SeededRng::new(0)).unwrap(),
        vec![1.0; 5]
    );

    // every episode earns exactly the upper bound, so the collecting step has
    // potential 1 and its shaped target is 1 - 1 = 0
    let shaped = run_training(
        &env,
        &config(ShapingMode::KnownBounds {
            upper: 1.0,
            lower: 0.0,
        }),
    )
    .unwrap();
    assert!(shaped.q.get(0, 1).abs() < 1e-9, "{:?}", shaped.q.row(0));
    // waiting right before collecting is paid gamma * 1
    assert!(shaped.q.get(0, 0) > 0.1, "{:?}", shaped.q.row(0));
    assert_eq!(
        evaluate_policy(&env, &shaped.q, 5, &mut SeededRng::new(0)).unwrap(),
        vec![0.0; 5]
    );
}
