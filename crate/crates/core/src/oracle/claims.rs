//! Checks for the sign and closed-form properties of the episode-reward
//! shaping bonus.
//!
//! For two consecutive steps that both earn a nonzero reward, with episode
//! rewards `R` then `R'` and bounds `[L, U]`, the bonus expands to
//!
//! ```text
//! F = (gamma * R' - R + L * (1 - gamma)) / (U - L)
//! ```
//!
//! Writing `D = gamma * R' - R` and `T = -L * (1 - gamma)`, the classes are:
//!
//! | class      | premise                     | claim  |
//! |------------|-----------------------------|--------|
//! | `equal`    | `R' = R`, `R >= L`          | F <= 0 |
//! | `rising`   | `D >= 0`                    | F > 0  |
//! | `shallow`  | `D < 0`, `D > T`            | F > 0  |
//! | `steep`    | `D < 0`, `D <= T`           | F <= 0 |
//!
//! `rising` only follows when `L >= 0` and not both `D` and `L` are zero;
//! other `rising` pairs are logged as out of scope rather than asserted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mdp::EpisodeTrace;
use crate::rng::SeededRng;
use crate::shaping::{potential, shaping_bonus, BoundsMode, ShapingState};

pub const SIGN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignClass {
    /// Episode reward unchanged between the steps.
    Equal,
    Rising,
    Shallow,
    Steep,
}

impl SignClass {
    /// Whether the class claims a strictly positive bonus.
    pub fn claims_positive(self) -> bool {
        matches!(self, SignClass::Rising | SignClass::Shallow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfScope {
    /// `R' = R` but `R < L`.
    EqualBelowLower,
    /// `D >= 0` with `L < 0`, or `D = L = 0`.
    RisingNegativeLower,
}

/// Premise class of a pair, or why it is out of scope.
pub fn classify(
    episode_reward: f64,
    next_episode_reward: f64,
    lower: f64,
    gamma: f64,
) -> Result<SignClass, OutOfScope> {
    if next_episode_reward == episode_reward {
        return if episode_reward >= lower {
            Ok(SignClass::Equal)
        } else {
            Err(OutOfScope::EqualBelowLower)
        };
    }
    let d = gamma * next_episode_reward - episode_reward;
    if d >= 0.0 {
        return if lower >= 0.0 && (d > 0.0 || lower > 0.0) {
            Ok(SignClass::Rising)
        } else {
            Err(OutOfScope::RisingNegativeLower)
        };
    }
    if d > -lower * (1.0 - gamma) {
        Ok(SignClass::Shallow)
    } else {
        Ok(SignClass::Steep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignViolation {
    pub episode_index: usize,
    pub step: usize,
    pub class: SignClass,
    pub bonus: f64,
    pub episode_reward: f64,
    pub next_episode_reward: f64,
    pub upper: f64,
    pub lower: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub gamma: f64,
    pub steps: usize,
    pub pairs: usize,
    /// Pairs where at least one step earned zero reward.
    pub zero_branch_pairs: usize,
    /// Nonzero-reward pairs under unusable bounds.
    pub degenerate_pairs: usize,
    /// Largest `|F|` seen on a degenerate pair; the zero rule makes it 0.
    pub degenerate_max_abs_bonus: f64,
    pub in_scope: BTreeMap<SignClass, usize>,
    pub out_of_scope: BTreeMap<OutOfScope, usize>,
    /// Recorded potentials that differ from a recomputation.
    pub potential_mismatches: usize,
    pub violations: Vec<SignViolation>,
}

impl SignReport {
    pub fn in_scope_total(&self) -> usize {
        self.in_scope.values().sum()
    }

    pub fn nonzero_pairs(&self) -> usize {
        self.pairs - self.zero_branch_pairs
    }

    pub fn pass(&self) -> bool {
        self.violations.is_empty()
            && self.potential_mismatches == 0
            && self.degenerate_max_abs_bonus == 0.0
    }
}

/// Classifies every consecutive step pair within each episode and checks
/// the claimed sign of the bonus, within [`SIGN_TOLERANCE`].
pub fn check_sign_properties(traces: &[EpisodeTrace], gamma: f64) -> SignReport {
    let mut report = SignReport {
        gamma,
        ..Default::default()
    };
    for trace in traces {
        let cumulative = trace.cumulative_rewards();
        let (upper, lower) = (trace.bounds.upper, trace.bounds.lower);
        let stats = ShapingState {
            max_episode_reward: upper,
            min_episode_reward: lower,
            current_episode_reward: 0.0,
            mode: BoundsMode::Known,
            episodes_completed: 0,
        };
        report.steps += trace.records.len();
        for (i, rec) in trace.records.iter().enumerate() {
            let recomputed = potential(
                rec.reward,
                &ShapingState {
                    current_episode_reward: cumulative[i],
                    ..stats
                },
            );
            // the unshaped learner records zero potentials throughout
            if rec.phi_s != 0.0 && rec.phi_s.to_bits() != recomputed.to_bits() {
                report.potential_mismatches += 1;
            }
        }
        for (i, pair) in trace.records.windows(2).enumerate() {
            report.pairs += 1;
            if pair[0].reward == 0.0 || pair[1].reward == 0.0 {
                report.zero_branch_pairs += 1;
                continue;
            }
            let bonus = shaping_bonus(pair[0].phi_s, pair[1].phi_s, gamma);
            if !stats.bounds_usable() {
                report.degenerate_pairs += 1;
                report.degenerate_max_abs_bonus = report.degenerate_max_abs_bonus.max(bonus.abs());
                continue;
            }
            let (r, r_next) = (cumulative[i], cumulative[i + 1]);
            match classify(r, r_next, lower, gamma) {
                Err(why) => *report.out_of_scope.entry(why).or_default() += 1,
                Ok(class) => {
                    *report.in_scope.entry(class).or_default() += 1;
                    let holds = if class.claims_positive() {
                        bonus > -SIGN_TOLERANCE
                    } else {
                        bonus <= SIGN_TOLERANCE
                    };
                    if !holds {
                        report.violations.push(SignViolation {
                            episode_index: trace.episode_index,
                            step: i,
                            class,
                            bonus,
                            episode_reward: r,
                            next_episode_reward: r_next,
                            upper,
                            lower,
                        });
                    }
                }
            }
        }
    }
    report
}

/// One point for the closed-form check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentitySample {
    pub episode_reward: f64,
    pub next_episode_reward: f64,
    pub upper: f64,
    pub lower: f64,
    pub gamma: f64,
}

fn closed_form(s: &IdentitySample) -> f64 {
    (s.gamma * s.next_episode_reward - s.episode_reward + s.lower * (1.0 - s.gamma))
        / (s.upper - s.lower)
}

fn via_potentials(s: &IdentitySample) -> f64 {
    let stats = ShapingState::known(s.upper, s.lower).expect("sample has ordered finite bounds");
    // any nonzero immediate reward selects the formula branch
    let phi = potential(
        1.0,
        &ShapingState {
            current_episode_reward: s.episode_reward,
            ..stats
        },
    );
    let phi_next = potential(
        1.0,
        &ShapingState {
            current_episode_reward: s.next_episode_reward,
            ..stats
        },
    );
    shaping_bonus(phi, phi_next, s.gamma)
}

/// Largest absolute gap between the bonus computed from potentials and the
/// closed form.
pub fn check_algebraic_identity(samples: &[IdentitySample]) -> f64 {
    samples
        .iter()
        .map(|s| (via_potentials(s) - closed_form(s)).abs())
        .fold(0.0, f64::max)
}

/// Bounds in `[-50, 50]` at least 1 apart, episode rewards within 10 of
/// the bounds, gamma in `[0, 1]`.
pub fn random_identity_samples(rng: &mut SeededRng, n: usize) -> Vec<IdentitySample> {
    (0..n)
        .map(|_| {
            let lower = -50.0 + 99.0 * rng.uniform();
            let upper = lower + 1.0 + (49.0 - lower.max(-49.0)) * rng.uniform();
            let span = upper - lower + 20.0;
            IdentitySample {
                episode_reward: lower - 10.0 + span * rng.uniform(),
                next_episode_reward: lower - 10.0 + span * rng.uniform(),
                upper,
                lower,
                gamma: rng.uniform(),
            }
        })
        .collect()
}
