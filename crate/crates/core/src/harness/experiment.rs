use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{EpisodicEnv, TaskSuite};
use crate::error::{file_error, Error, Result};
use crate::learners::{
    evaluate_policy, run_multitask_training_per_task, run_training, QTable, ShapingDiagnostics,
};
use crate::oracle::optimal_episode_reward;
use crate::rng::{streams, SeededRng, RNG_ALGORITHM};
use crate::shaping::TaskId;

use super::config::{ArmConfig, Group, ResolvedConfig};
use super::stats::{
    auc, bootstrap_mean_ci, episodes_to_threshold, mean, median_episodes, paired_difference,
    trailing_mean, DifferenceStats, Interval,
};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVES_FILE: &str = "curves.csv";

/// Outcome of one seeded run of one arm on one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_digest: String,
    pub group: String,
    pub arm: String,
    pub seed_index: usize,
    pub seed: u64,
    pub per_episode_reward: Vec<f64>,
    /// Task of each episode; `None` for single-environment runs.
    pub per_episode_task: Option<Vec<TaskId>>,
    pub wall_time: f64,
    /// Greedy evaluation rewards per task.
    pub final_policy_eval: BTreeMap<TaskId, Vec<f64>>,
    pub error: Option<String>,
}

impl RunResult {
    /// Episode rewards of one task, in training order.
    pub fn task_curve(&self, task: &str) -> Vec<f64> {
        match &self.per_episode_task {
            None => self.per_episode_reward.clone(),
            Some(tasks) => self
                .per_episode_reward
                .iter()
                .zip(tasks)
                .filter(|(_, t)| *t == task)
                .map(|(&r, _)| r)
                .collect(),
        }
    }
}

/// Sidecar metadata of a run: everything in [`RunResult`] except the curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_digest: String,
    pub group: String,
    pub arm: String,
    pub seed_index: usize,
    pub seed: u64,
    pub episodes: usize,
    pub multi_task: bool,
    pub rng: String,
    pub wall_time: f64,
    pub final_policy_eval: BTreeMap<TaskId, Vec<f64>>,
    pub error: Option<String>,
}

/// Shaping bookkeeping per task, kept apart from the learning curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub config_digest: String,
    pub shaping: BTreeMap<TaskId, ShapingDiagnostics>,
}

fn run_dir(out: &Path, group: &str, arm: &str) -> PathBuf {
    out.join("runs").join(group).join(arm)
}

fn run_stem(seed_index: usize) -> String {
    format!("seed_{seed_index:03}")
}

struct Trained {
    per_episode_reward: Vec<f64>,
    per_episode_task: Option<Vec<TaskId>>,
    q: Vec<QTable>,
    diagnostics: Vec<ShapingDiagnostics>,
}

fn train(
    config: &ResolvedConfig,
    group: &Group,
    envs: &[EpisodicEnv],
    arm: &ArmConfig,
    seed: u64,
) -> Result<Trained> {
    if let Some(schedule) = group.multi_task {
        let configs = group
            .tasks
            .iter()
            .map(|t| config.learner_config(arm, t, seed))
            .collect::<Result<Vec<_>>>()?;
        let suite = TaskSuite::new(
            group
                .tasks
                .iter()
                .map(|t| t.name.clone())
                .zip(envs.iter().cloned())
                .collect(),
            schedule,
        )?;
        let run = run_multitask_training_per_task(&suite, &configs)?;
        Ok(Trained {
            per_episode_reward: run.per_episode_reward,
            per_episode_task: Some(run.per_episode_task),
            q: run.q,
            diagnostics: run.diagnostics,
        })
    } else {
        let cfg = config.learner_config(arm, &group.tasks[0], seed)?;
        let run = run_training(&envs[0], &cfg)?;
        Ok(Trained {
            per_episode_reward: run.per_episode_reward,
            per_episode_task: None,
            q: vec![run.q],
            diagnostics: vec![run.diagnostics],
        })
    }
}

/// Trains, then evaluates each task's greedy policy on its own stream.
fn execute(
    config: &ResolvedConfig,
    digest: &str,
    group: &Group,
    envs: &[EpisodicEnv],
    arm: &ArmConfig,
    seed_index: usize,
    seed: u64,
) -> (RunResult, BTreeMap<TaskId, ShapingDiagnostics>) {
    let started = Instant::now();
    let mut result = RunResult {
        config_digest: digest.to_owned(),
        group: group.name.clone(),
        arm: arm.name.clone(),
        seed_index,
        seed,
        per_episode_reward: Vec::new(),
        per_episode_task: None,
        wall_time: 0.0,
        final_policy_eval: BTreeMap::new(),
        error: None,
    };
    let mut diagnostics = BTreeMap::new();
    let outcome = train(config, group, envs, arm, seed).and_then(|trained| {
        for (i, (task, env)) in group.tasks.iter().zip(envs).enumerate() {
            let mut rng = SeededRng::stream(seed, streams::EVAL + i as u64);
            let rewards = evaluate_policy(env, &trained.q[i], config.eval_episodes, &mut rng)?;
            result.final_policy_eval.insert(task.name.clone(), rewards);
            diagnostics.insert(task.name.clone(), trained.diagnostics[i]);
        }
        result.per_episode_reward = trained.per_episode_reward;
        result.per_episode_task = trained.per_episode_task;
        Ok(())
    });
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
    }
    result.wall_time = started.elapsed().as_secs_f64();
    (result, diagnostics)
}

fn write_curve(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(["episode", "task", "reward"])?;
    for (i, r) in result.per_episode_reward.iter().enumerate() {
        let task = result
            .per_episode_task
            .as_ref()
            .map_or(result.group.as_str(), |t| t[i].as_str());
        w.write_record([i.to_string(), task.to_owned(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(file_error(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(
        &fs::read_to_string(path).map_err(file_error(path))?,
    )?)
}

fn persist(
    out: &Path,
    result: &RunResult,
    diagnostics: &BTreeMap<TaskId, ShapingDiagnostics>,
) -> Result<()> {
    let dir = run_dir(out, &result.group, &result.arm);
    fs::create_dir_all(&dir).map_err(file_error(&dir))?;
    let stem = run_stem(result.seed_index);
    write_curve(&dir.join(format!("{stem}.csv")), result)?;
    let meta = RunMetadata {
        config_digest: result.config_digest.clone(),
        group: result.group.clone(),
        arm: result.arm.clone(),
        seed_index: result.seed_index,
        seed: result.seed,
        episodes: result.per_episode_reward.len(),
        multi_task: result.per_episode_task.is_some(),
        rng: RNG_ALGORITHM.into(),
        wall_time: result.wall_time,
        final_policy_eval: result.final_policy_eval.clone(),
        error: result.error.clone(),
    };
    write_json(&dir.join(format!("{stem}.json")), &meta)?;
    let diag = RunDiagnostics {
        config_digest: result.config_digest.clone(),
        shaping: diagnostics.clone(),
    };
    write_json(&dir.join(format!("{stem}.diag.json")), &diag)
}

/// Runs every (group, arm, seed) combination, in parallel, and writes the
/// results under `out` in a fixed order. A failing run is recorded in its
/// metadata and does not stop the others.
pub fn run_experiment(config: &ResolvedConfig, out: &Path) -> Result<Vec<RunResult>> {
    config.validate()?;
    let digest = config.digest();
    fs::create_dir_all(out).map_err(file_error(out))?;
    let resolved_path = out.join(RESOLVED_CONFIG_FILE);
    fs::write(
        &resolved_path,
        format!("# config_digest = \"{digest}\"\n{}", config.to_toml()?),
    )
    .map_err(file_error(&resolved_path))?;

    let groups = config.groups();
    let envs = groups
        .iter()
        .map(|g| {
            g.tasks
                .iter()
                .map(|t| t.build())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (gi, group) in groups.iter().enumerate() {
        for arm in &config.arms {
            for si in 0..config.seeds {
                jobs.push((gi, group, arm, si, config.run_seed(gi, si)));
            }
        }
    }
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(gi, group, arm, si, seed)| {
            execute(config, &digest, group, &envs[gi], arm, si, seed)
        })
        .collect();
    for (result, diagnostics) in &outcomes {
        persist(out, result, diagnostics)?;
    }
    Ok(outcomes.into_iter().map(|(r, _)| r).collect())
}

fn read_curve(path: &Path) -> Result<(Vec<f64>, Vec<TaskId>)> {
    let mut rewards = Vec::new();
    let mut tasks = Vec::new();
    let mut reader = csv::Reader::from_path(path)?;
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let bad = |reason: String| Error::InvalidConfig {
            field: format!("{}:{}", path.display(), i + 2),
            reason,
        };
        let episode: usize = row
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|e| bad(format!("episode: {e}")))?;
        if episode != i {
            return Err(bad(format!("episode {episode} out of order")));
        }
        tasks.push(row.get(1).unwrap_or("").to_owned());
        rewards.push(
            row.get(2)
                .unwrap_or("")
                .parse()
                .map_err(|e| bad(format!("reward: {e}")))?,
        );
    }
    Ok((rewards, tasks))
}

/// Reads the resolved config and every run of a result directory. Fails if
/// any run carries a different config digest.
pub fn load_results(dir: &Path) -> Result<(ResolvedConfig, Vec<RunResult>)> {
    let path = dir.join(RESOLVED_CONFIG_FILE);
    let config = ResolvedConfig::from_toml(&fs::read_to_string(&path).map_err(file_error(&path))?)?;
    let digest = config.digest();
    let mut results = Vec::new();
    for group in config.groups() {
        for arm in &config.arms {
            let rdir = run_dir(dir, &group.name, &arm.name);
            for si in 0..config.seeds {
                let stem = run_stem(si);
                let meta: RunMetadata = read_json(&rdir.join(format!("{stem}.json")))?;
                if meta.config_digest != digest {
                    return Err(Error::DigestMismatch(digest, meta.config_digest));
                }
                let diag: RunDiagnostics = read_json(&rdir.join(format!("{stem}.diag.json")))?;
                if diag.config_digest != digest {
                    return Err(Error::DigestMismatch(digest, diag.config_digest));
                }
                let (per_episode_reward, tasks) = read_curve(&rdir.join(format!("{stem}.csv")))?;
                results.push(RunResult {
                    config_digest: meta.config_digest,
                    group: meta.group,
                    arm: meta.arm,
                    seed_index: meta.seed_index,
                    seed: meta.seed,
                    per_episode_reward,
                    per_episode_task: meta.multi_task.then_some(tasks),
                    wall_time: meta.wall_time,
                    final_policy_eval: meta.final_policy_eval,
                    error: meta.error,
                });
            }
        }
    }
    Ok((config, results))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub n_seeds: usize,
    pub failed_runs: usize,
    pub auc_mean: f64,
    pub auc_ci: Option<Interval>,
    /// `None` when the median run never reached the threshold.
    pub median_episodes_to_threshold: Option<f64>,
    pub runs_reaching_threshold: usize,
    pub final_policy_mean: f64,
}

/// `candidate - baseline` on per-seed AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmComparison {
    pub baseline: String,
    pub candidate: String,
    pub auc_difference: Option<DifferenceStats>,
}

/// Statistics of every arm on one task of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub group: String,
    pub task: String,
    pub optimal_episode_reward: f64,
    pub threshold: f64,
    pub arms: Vec<ArmSummary>,
    pub comparisons: Vec<ArmComparison>,
}

impl TaskSummary {
    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == name)
    }

    pub fn comparison(&self, candidate: &str) -> Option<&ArmComparison> {
        self.comparisons.iter().find(|c| c.candidate == candidate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub config_digest: String,
    pub master_seed: u64,
    pub bootstrap_resamples: usize,
    pub threshold_fraction: f64,
    pub threshold_window: usize,
    pub tasks: Vec<TaskSummary>,
}

impl ComparisonSummary {
    pub fn task(&self, group: &str, task: &str) -> Option<&TaskSummary> {
        self.tasks
            .iter()
            .find(|t| t.group == group && t.task == task)
    }
}

/// Per-task statistics of every arm. The first arm is the baseline every
/// other arm is compared against. Bootstrap draws come from the master
/// seed.
pub fn summarize(config: &ResolvedConfig, results: &[RunResult]) -> Result<ComparisonSummary> {
    let digest = config.digest();
    if let Some(r) = results.iter().find(|r| r.config_digest != digest) {
        return Err(Error::DigestMismatch(digest, r.config_digest.clone()));
    }
    let mut rng = SeededRng::stream(config.master_seed, streams::BOOTSTRAP);
    let mut tasks = Vec::new();
    for group in config.groups() {
        for task in &group.tasks {
            let env = task.build()?;
            let optimal = optimal_episode_reward(&env.mdp, env.max_steps)?;
            let threshold = config.threshold_fraction * optimal;
            let mut arms = Vec::new();
            let mut aucs: Vec<Vec<f64>> = Vec::new();
            for arm in &config.arms {
                let mut runs: Vec<&RunResult> = results
                    .iter()
                    .filter(|r| r.group == group.name && r.arm == arm.name)
                    .collect();
                runs.sort_by_key(|r| r.seed_index);
                let ok: Vec<&RunResult> =
                    runs.iter().copied().filter(|r| r.error.is_none()).collect();
                let curves: Vec<Vec<f64>> = ok.iter().map(|r| r.task_curve(&task.name)).collect();
                let arm_aucs: Vec<f64> = curves.iter().map(|c| auc(c)).collect();
                let ett: Vec<Option<usize>> = curves
                    .iter()
                    .map(|c| episodes_to_threshold(c, threshold, config.threshold_window))
                    .collect();
                let evals: Vec<f64> = ok
                    .iter()
                    .filter_map(|r| r.final_policy_eval.get(&task.name))
                    .map(|v| mean(v))
                    .collect();
                arms.push(ArmSummary {
                    arm: arm.name.clone(),
                    n_seeds: ok.len(),
                    failed_runs: runs.len() - ok.len(),
                    auc_mean: mean(&arm_aucs),
                    auc_ci: bootstrap_mean_ci(&arm_aucs, config.bootstrap_resamples, &mut rng),
                    median_episodes_to_threshold: median_episodes(&ett),
                    runs_reaching_threshold: ett.iter().filter(|e| e.is_some()).count(),
                    final_policy_mean: mean(&evals),
                });
                aucs.push(if ok.len() == runs.len() {
                    arm_aucs
                } else {
                    Vec::new()
                });
            }
            let comparisons = (1..config.arms.len())
                .map(|i| ArmComparison {
                    baseline: config.arms[0].name.clone(),
                    candidate: config.arms[i].name.clone(),
                    auc_difference: paired_difference(
                        &aucs[0],
                        &aucs[i],
                        config.bootstrap_resamples,
                        &mut rng,
                    ),
                })
                .collect();
            tasks.push(TaskSummary {
                group: group.name.clone(),
                task: task.name.clone(),
                optimal_episode_reward: optimal,
                threshold,
                arms,
                comparisons,
            });
        }
    }
    Ok(ComparisonSummary {
        config_digest: digest,
        master_seed: config.master_seed,
        bootstrap_resamples: config.bootstrap_resamples,
        threshold_fraction: config.threshold_fraction,
        threshold_window: config.threshold_window,
        tasks,
    })
}

/// Loads a result directory, summarizes it and writes `summary.json`.
pub fn summarize_dir(dir: &Path) -> Result<ComparisonSummary> {
    let (config, results) = load_results(dir)?;
    let summary = summarize(&config, &results)?;
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Mean learning curve per (group, task, arm) with a trailing mean of
/// `window` episodes, written as `curves.csv`. Raw run files are left
/// untouched.
pub fn write_mean_curves(dir: &Path, window: usize) -> Result<PathBuf> {
    let (config, results) = load_results(dir)?;
    let path = dir.join(CURVES_FILE);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)?;
    w.write_record([
        "group",
        "task",
        "arm",
        "episode",
        "mean_reward",
        "trailing_mean",
    ])?;
    for group in config.groups() {
        for task in &group.tasks {
            for arm in &config.arms {
                let curves: Vec<Vec<f64>> = results
                    .iter()
                    .filter(|r| r.group == group.name && r.arm == arm.name && r.error.is_none())
                    .map(|r| r.task_curve(&task.name))
                    .collect();
                let len = curves.iter().map(Vec::len).min().unwrap_or(0);
                let avg: Vec<f64> = (0..len)
                    .map(|e| curves.iter().map(|c| c[e]).sum::<f64>() / curves.len() as f64)
                    .collect();
                for (e, (m, s)) in avg.iter().zip(trailing_mean(&avg, window)).enumerate() {
                    w.write_record([
                        &group.name,
                        &task.name,
                        &arm.name,
                        &e.to_string(),
                        &m.to_string(),
                        &s.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(path)
}
