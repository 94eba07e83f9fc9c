//! Exact solutions and checks of the shaping guarantees.

mod claims;
mod invariance;
mod solver;

pub use claims::{
    check_algebraic_identity, check_sign_properties, classify, random_identity_samples,
    IdentitySample, OutOfScope, SignClass, SignReport, SignViolation, SIGN_TOLERANCE,
};
pub use invariance::{
    check_policy_invariance, compare_optimal_actions, random_mdp, random_potential,
    shape_mdp_static, shape_mdp_with_discount, InvarianceReport,
};
pub use solver::{expected_episode_reward, optimal_episode_reward, value_iteration, ExactSolution};
