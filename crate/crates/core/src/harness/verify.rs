use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::envs::{benchmark, EpisodicEnv};
use crate::error::Result;
use crate::learners::{LearnerConfig, ShapingMode, TaskLearner};
use crate::mdp::{EpisodeTrace, Outcome, TabularMdp};
use crate::oracle::{
    check_algebraic_identity, check_sign_properties, compare_optimal_actions,
    random_identity_samples, random_mdp, random_potential, shape_mdp_with_discount,
};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub master_seed: u64,
    /// Number of random MDPs in the invariance sweep.
    pub sweep_size: usize,
    pub identity_samples: usize,
    /// Minimum number of learner steps traced for the sign checks.
    pub sign_steps: usize,
    /// Added to each MDP's discount when shaping. Nonzero values inject a
    /// fault the invariance check must catch.
    pub shaping_gamma_offset: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            master_seed: 0,
            sweep_size: 100,
            identity_samples: 10_000,
            sign_steps: 10_000,
            shaping_gamma_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub claim: String,
    pub pass: bool,
    pub seconds: f64,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub options: VerifyOptions,
    pub claims: Vec<ClaimReport>,
}

impl VerifyReport {
    pub fn claim(&self, name: &str) -> Option<&ClaimReport> {
        self.claims.iter().find(|c| c.claim == name)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.claims
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.claim.as_str())
            .collect()
    }
}

const INVARIANCE_TOLERANCE: f64 = 1e-6;
const IDENTITY_TOLERANCE: f64 = 1e-9;

fn timed(
    claim: &str,
    f: impl FnOnce() -> Result<(bool, serde_json::Value)>,
) -> Result<ClaimReport> {
    let started = Instant::now();
    let (pass, details) = f()?;
    Ok(ClaimReport {
        claim: claim.into(),
        pass,
        seconds: started.elapsed().as_secs_f64(),
        details,
    })
}

/// Static potentials on random MDPs leave the near-optimal action sets
/// unchanged and shift Q by exactly the potential.
pub fn invariance_sweep(options: &VerifyOptions) -> Result<ClaimReport> {
    timed("static_invariance", || {
        let mut rng = SeededRng::stream(options.master_seed, 0);
        let mut failures = Vec::new();
        let mut max_q_gap: f64 = 0.0;
        for case in 0..options.sweep_size {
            let mdp = random_mdp(&mut rng, 10, 4);
            let phi = random_potential(&mdp, &mut rng, 5.0);
            let shaped =
                shape_mdp_with_discount(&mdp, &phi, mdp.gamma() + options.shaping_gamma_offset)?;
            let report = compare_optimal_actions(&mdp, &shaped, &phi, INVARIANCE_TOLERANCE)?;
            max_q_gap = max_q_gap.max(report.max_q_gap);
            if !report.pass {
                failures.push(case);
            }
        }
        Ok((
            failures.is_empty(),
            json!({
                "cases": options.sweep_size,
                "passed": options.sweep_size - failures.len(),
                "failing_cases": failures,
                "max_q_gap": max_q_gap,
                "tolerance": INVARIANCE_TOLERANCE,
            }),
        ))
    })
}

/// The bonus from potentials equals its closed form.
pub fn identity_sweep(options: &VerifyOptions) -> Result<ClaimReport> {
    timed("algebraic_identity", || {
        let samples = random_identity_samples(
            &mut SeededRng::stream(options.master_seed, 1),
            options.identity_samples,
        );
        let max_deviation = check_algebraic_identity(&samples);
        Ok((
            max_deviation <= IDENTITY_TOLERANCE,
            json!({ "samples": samples.len(), "max_deviation": max_deviation, "tolerance": IDENTITY_TOLERANCE }),
        ))
    })
}

/// Episode traces of a learner until at least `min_steps` steps are seen.
pub fn collect_traces(
    env: &EpisodicEnv,
    config: &LearnerConfig,
    min_steps: usize,
) -> Result<Vec<EpisodeTrace>> {
    let mut learner = TaskLearner::new(env, config, 0)?;
    let mut traces = Vec::new();
    let mut steps = 0;
    while steps < min_steps {
        let trace = learner.train_episode(env, config)?;
        steps += trace.records.len();
        traces.push(trace);
    }
    Ok(traces)
}

/// Sign classes of consecutive shaped steps on `pellet-collector` with
/// online bounds.
pub fn sign_check(options: &VerifyOptions) -> Result<ClaimReport> {
    timed("sign_properties", || {
        let b = benchmark("pellet-collector")?;
        let env = EpisodicEnv::from_spec(b.name, &b.spec)?;
        let config = LearnerConfig {
            seed: options.master_seed,
            epsilon_decay_episodes: 200,
            shaping_mode: ShapingMode::OnlineBounds,
            ..LearnerConfig::default()
        };
        let traces = collect_traces(&env, &config, options.sign_steps)?;
        let report = check_sign_properties(&traces, env.mdp.gamma());
        let details = json!({
            "environment": b.name,
            "episodes": traces.len(),
            "steps": report.steps,
            "pairs": report.pairs,
            "zero_branch_pairs": report.zero_branch_pairs,
            "degenerate_pairs": report.degenerate_pairs,
            "in_scope": report.in_scope,
            "out_of_scope": report.out_of_scope,
            "potential_mismatches": report.potential_mismatches,
            "violations": report.violations,
        });
        Ok((report.pass(), details))
    })
}

/// One-action chain of `len` steps, each paying `reward`.
fn paying_chain(len: usize, reward: f64) -> Result<EpisodicEnv> {
    let rows = (0..=len)
        .map(|s| {
            vec![Outcome {
                next: (s + 1).min(len),
                probability: 1.0,
                reward,
            }]
        })
        .collect();
    let mdp = TabularMdp::new(len + 1, 1, rows, 0.9, BTreeSet::from([len]), 0)?;
    Ok(EpisodicEnv::new("paying-chain", mdp, len))
}

/// Strict bounds with strictly rising episode rewards: the minimum is never
/// set, so every nonzero pair sits on degenerate bounds and must get a
/// zero bonus.
pub fn strict_degenerate_check(_options: &VerifyOptions) -> Result<ClaimReport> {
    timed("strict_bounds_degenerate", || {
        let config = LearnerConfig {
            shaping_mode: ShapingMode::StrictPaperBounds,
            update_period: 2,
            ..LearnerConfig::default()
        };
        let envs = (1..=20)
            .map(|k| paying_chain(4, k as f64))
            .collect::<Result<Vec<_>>>()?;
        let mut learner = TaskLearner::new(&envs[0], &config, 0)?;
        let mut traces = Vec::new();
        for env in &envs {
            traces.push(learner.train_episode(env, &config)?);
        }
        let report = check_sign_properties(&traces, 0.9);
        let nonzero = report.nonzero_pairs();
        let share = if nonzero == 0 {
            0.0
        } else {
            report.degenerate_pairs as f64 / nonzero as f64
        };
        let min_never_set = learner.shaping.min_episode_reward == f64::INFINITY;
        Ok((
            report.pass() && nonzero > 0 && share == 1.0 && min_never_set,
            json!({
                "episodes": traces.len(),
                "nonzero_pairs": nonzero,
                "degenerate_pairs": report.degenerate_pairs,
                "degenerate_share": share,
                "degenerate_max_abs_bonus": report.degenerate_max_abs_bonus,
                "final_max": learner.shaping.max_episode_reward,
                "min_never_set": min_never_set,
            }),
        ))
    })
}

/// All checks; the report passes iff each claim does.
pub fn verify(options: &VerifyOptions) -> Result<VerifyReport> {
    let claims = vec![
        invariance_sweep(options)?,
        identity_sweep(options)?,
        sign_check(options)?,
        strict_degenerate_check(options)?,
    ];
    Ok(VerifyReport {
        pass: claims.iter().all(|c| c.pass),
        options: options.clone(),
        claims,
    })
}
