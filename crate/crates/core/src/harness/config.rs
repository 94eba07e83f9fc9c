use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{benchmark, EpisodicEnv, GridSpec, Schedule};
use crate::error::{file_error, Error, Result};
use crate::learners::{LearnerConfig, ShapingMode};

/// Group name used for the multi-task suite in result paths.
pub const MULTI_TASK_GROUP: &str = "multi-task";

fn default_eval_episodes() -> usize {
    100
}
fn default_threshold_fraction() -> f64 {
    0.9
}
fn default_threshold_window() -> usize {
    100
}
fn default_bootstrap_resamples() -> usize {
    1000
}
fn default_name() -> String {
    "experiment".into()
}

/// Learner settings shared by every arm. The per-run seed and the shaping
/// mode come from the experiment layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub update_period: usize,
    pub max_steps_per_episode: usize,
    pub episodes: usize,
}

impl Default for LearnerSection {
    fn default() -> Self {
        let d = LearnerConfig::default();
        Self {
            alpha: d.alpha,
            epsilon_start: d.epsilon_start,
            epsilon_end: d.epsilon_end,
            epsilon_decay_episodes: d.epsilon_decay_episodes,
            update_period: d.update_period,
            max_steps_per_episode: d.max_steps_per_episode,
            episodes: d.episodes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmShaping {
    None,
    OnlineBounds,
    KnownBounds,
    StrictPaperBounds,
}

/// One learner variant. Optional fields override the shared learner
/// section; known bounds default to the environment's analytic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    pub shaping: ArmShaping,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiTaskSection {
    pub tasks: Vec<String>,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
}

fn default_schedule() -> Schedule {
    Schedule::RoundRobin
}

/// The experiment file as written by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub master_seed: u64,
    pub seeds: usize,
    /// Benchmark names or paths to map files (relative to the config file).
    #[serde(default)]
    pub environments: Vec<String>,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_threshold_fraction")]
    pub threshold_fraction: f64,
    #[serde(default = "default_threshold_window")]
    pub threshold_window: usize,
    #[serde(default = "default_bootstrap_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub learner: LearnerSection,
    pub arms: Vec<ArmConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_task: Option<MultiTaskSection>,
}

/// An environment with its map text inlined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedEnvironment {
    pub name: String,
    pub map: String,
}

impl ResolvedEnvironment {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::parse_map(&self.map)
    }

    pub fn build(&self) -> Result<EpisodicEnv> {
        EpisodicEnv::from_spec(self.name.clone(), &self.spec()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedMultiTask {
    pub schedule: Schedule,
    pub tasks: Vec<ResolvedEnvironment>,
}

/// Everything a run depends on. Its digest identifies a result set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub name: String,
    pub master_seed: u64,
    pub seeds: usize,
    pub eval_episodes: usize,
    pub threshold_fraction: f64,
    pub threshold_window: usize,
    pub bootstrap_resamples: usize,
    pub learner: LearnerSection,
    pub arms: Vec<ArmConfig>,
    pub environments: Vec<ResolvedEnvironment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_task: Option<ResolvedMultiTask>,
}

/// A named group of runs: one environment, or the multi-task suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub name: String,
    pub tasks: Vec<ResolvedEnvironment>,
    pub multi_task: Option<Schedule>,
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
}

fn safe_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn resolve_environment(reference: &str, base: &Path) -> Result<ResolvedEnvironment> {
    if let Ok(b) = benchmark(reference) {
        return Ok(ResolvedEnvironment {
            name: b.name.into(),
            map: b.spec.to_map_text(),
        });
    }
    let path = base.join(reference);
    if !path.is_file() {
        return Err(Error::UnknownBenchmark(reference.into()));
    }
    let text = std::fs::read_to_string(&path).map_err(file_error(&path))?;
    let spec = GridSpec::parse_map(&text)?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(reference)
        .to_owned();
    Ok(ResolvedEnvironment {
        name,
        map: spec.to_map_text(),
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(file_error(path))?)
    }

    /// Inlines every environment and validates the result. Map paths are
    /// resolved against `base`.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedConfig> {
        let environments = self
            .environments
            .iter()
            .map(|e| resolve_environment(e, base))
            .collect::<Result<Vec<_>>>()?;
        let multi_task = match &self.multi_task {
            None => None,
            Some(mt) => Some(ResolvedMultiTask {
                schedule: mt.schedule,
                tasks: mt
                    .tasks
                    .iter()
                    .map(|t| resolve_environment(t, base))
                    .collect::<Result<Vec<_>>>()?,
            }),
        };
        let resolved = ResolvedConfig {
            name: self.name.clone(),
            master_seed: self.master_seed,
            seeds: self.seeds,
            eval_episodes: self.eval_episodes,
            threshold_fraction: self.threshold_fraction,
            threshold_window: self.threshold_window,
            bootstrap_resamples: self.bootstrap_resamples,
            learner: self.learner.clone(),
            arms: self.arms.clone(),
            environments,
            multi_task,
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<()> {
        if !safe_name(&self.name) {
            return Err(invalid(
                "name",
                format!("`{}` is not a plain file name", self.name),
            ));
        }
        if self.seeds == 0 {
            return Err(invalid("seeds", "must be at least 1"));
        }
        if !(self.threshold_fraction.is_finite()) {
            return Err(invalid("threshold_fraction", "must be finite"));
        }
        if self.threshold_window == 0 {
            return Err(invalid("threshold_window", "must be at least 1"));
        }
        if self.arms.is_empty() {
            return Err(invalid("arms", "at least one arm is required"));
        }
        if self.environments.is_empty() && self.multi_task.is_none() {
            return Err(invalid(
                "environments",
                "no environments and no multi_task section",
            ));
        }
        let mut names = BTreeSet::new();
        for (i, arm) in self.arms.iter().enumerate() {
            let field = |f: &str| format!("arms[{i}].{f}");
            if !safe_name(&arm.name) {
                return Err(invalid(
                    field("name"),
                    format!("`{}` is not a plain file name", arm.name),
                ));
            }
            if !names.insert(arm.name.as_str()) {
                return Err(invalid(
                    field("name"),
                    format!("duplicate arm `{}`", arm.name),
                ));
            }
            if arm.shaping != ArmShaping::KnownBounds
                && (arm.upper.is_some() || arm.lower.is_some())
            {
                return Err(invalid(
                    field("upper"),
                    "bounds only apply to known_bounds arms",
                ));
            }
            if let (Some(u), Some(l)) = (arm.upper, arm.lower) {
                if !(u.is_finite() && l.is_finite() && u > l) {
                    return Err(invalid(
                        field("upper"),
                        format!("need finite upper > lower, got {u} and {l}"),
                    ));
                }
            }
            for group in self.groups() {
                for task in &group.tasks {
                    self.learner_config(arm, task, 0).map_err(|e| match e {
                        Error::InvalidConfig { field: f, reason } => {
                            invalid(format!("arms[{i}] {f}"), reason)
                        }
                        other => other,
                    })?;
                }
            }
        }
        let mut env_names = BTreeSet::new();
        for (i, env) in self.environments.iter().enumerate() {
            if !safe_name(&env.name) || env.name == MULTI_TASK_GROUP {
                return Err(invalid(
                    format!("environments[{i}]"),
                    format!("`{}` is not usable as a name", env.name),
                ));
            }
            if !env_names.insert(env.name.as_str()) {
                return Err(invalid(
                    format!("environments[{i}]"),
                    format!("duplicate environment `{}`", env.name),
                ));
            }
            env.spec()?.validate()?;
        }
        if let Some(mt) = &self.multi_task {
            if mt.tasks.len() < 2 {
                return Err(invalid(
                    "multi_task.tasks",
                    "at least two tasks are required",
                ));
            }
            let mut seen = BTreeSet::new();
            for (i, t) in mt.tasks.iter().enumerate() {
                if !seen.insert(t.name.as_str()) {
                    return Err(invalid(
                        format!("multi_task.tasks[{i}]"),
                        format!("duplicate task `{}`", t.name),
                    ));
                }
                t.spec()?.validate()?;
            }
        }
        Ok(())
    }

    /// Environment groups in run order: each environment, then the
    /// multi-task suite if present.
    pub fn groups(&self) -> Vec<Group> {
        let mut groups: Vec<Group> = self
            .environments
            .iter()
            .map(|e| Group {
                name: e.name.clone(),
                tasks: vec![e.clone()],
                multi_task: None,
            })
            .collect();
        if let Some(mt) = &self.multi_task {
            groups.push(Group {
                name: MULTI_TASK_GROUP.into(),
                tasks: mt.tasks.clone(),
                multi_task: Some(mt.schedule),
            });
        }
        groups
    }

    /// The learner configuration of one arm on one task.
    pub fn learner_config(
        &self,
        arm: &ArmConfig,
        task: &ResolvedEnvironment,
        seed: u64,
    ) -> Result<LearnerConfig> {
        let l = &self.learner;
        let shaping_mode = match arm.shaping {
            ArmShaping::None => ShapingMode::None,
            ArmShaping::OnlineBounds => ShapingMode::OnlineBounds,
            ArmShaping::StrictPaperBounds => ShapingMode::StrictPaperBounds,
            ArmShaping::KnownBounds => {
                let (lower, upper) = task.spec()?.episode_reward_bounds();
                ShapingMode::KnownBounds {
                    upper: arm.upper.unwrap_or(upper),
                    lower: arm.lower.unwrap_or(lower),
                }
            }
        };
        let config = LearnerConfig {
            alpha: l.alpha,
            epsilon_start: l.epsilon_start,
            epsilon_end: l.epsilon_end,
            epsilon_decay_episodes: l.epsilon_decay_episodes,
            update_period: arm.update_period.unwrap_or(l.update_period),
            max_steps_per_episode: l.max_steps_per_episode,
            episodes: l.episodes,
            seed,
            shaping_mode,
        };
        config.validate()?;
        Ok(config)
    }

    /// Compact JSON with fields in declaration order.
    pub fn canonical_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serializes")
    }

    /// Lowercase hex SHA-256 of [`Self::canonical_json`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Seed of run `seed_index` in group `group_index`. Arms share seeds,
    /// so every arm faces the same random streams.
    pub fn run_seed(&self, group_index: usize, seed_index: usize) -> u64 {
        let mut h = Sha256::new();
        h.update(self.master_seed.to_le_bytes());
        h.update((group_index as u64).to_le_bytes());
        h.update((seed_index as u64).to_le_bytes());
        let bytes = h.finalize();
        u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
        master_seed = 7
        seeds = 2
        environments = ["corridor-risk"]

        [learner]
        alpha = 0.5
        epsilon_start = 1.0
        epsilon_end = 0.05
        epsilon_decay_episodes = 10
        update_period = 4
        max_steps_per_episode = 60
        episodes = 20

        [[arms]]
        name = "none"
        shaping = "none"

        [[arms]]
        name = "known"
        shaping = "known_bounds"
    "#;

    fn basic() -> ResolvedConfig {
        ExperimentConfig::parse(BASIC)
            .unwrap()
            .resolve(Path::new("."))
            .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = basic();
        assert_eq!(c.eval_episodes, 100);
        assert_eq!(c.threshold_window, 100);
        assert_eq!(c.bootstrap_resamples, 1000);
        assert_eq!(c.name, "experiment");
    }

    #[test]
    fn toml_round_trip_keeps_digest() {
        let c = basic();
        let back = ResolvedConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        assert_eq!(c.digest().len(), 64);
        assert!(c
            .digest()
            .chars()
            .all(|ch| ch.is_ascii_hexdigit() && !ch.is_ascii_uppercase()));
    }

    #[test]
    fn digest_tracks_every_setting() {
        let a = basic();
        let mut b = a.clone();
        b.learner.alpha = 0.25;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn known_bounds_default_to_analytic_range() {
        let c = basic();
        let cfg = c.learner_config(&c.arms[1], &c.environments[0], 3).unwrap();
        let (lower, upper) = c.environments[0].spec().unwrap().episode_reward_bounds();
        assert_eq!(cfg.shaping_mode, ShapingMode::KnownBounds { upper, lower });
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn run_seeds_are_stable_and_distinct() {
        let c = basic();
        assert_eq!(c.run_seed(0, 0), c.run_seed(0, 0));
        assert_ne!(c.run_seed(0, 0), c.run_seed(0, 1));
        assert_ne!(c.run_seed(0, 0), c.run_seed(1, 0));
    }

    fn field_of(text: &str) -> String {
        match ExperimentConfig::parse(text).and_then(|c| c.resolve(Path::new("."))) {
            Err(Error::InvalidConfig { field, .. }) => field,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_fields_are_named() {
        assert_eq!(field_of(&BASIC.replace("seeds = 2", "seeds = 0")), "seeds");
        assert!(field_of(&BASIC.replace("alpha = 0.5", "alpha = 1.5")).contains("alpha"));
        assert!(
            field_of(&BASIC.replace("update_period = 4", "update_period = 0"))
                .contains("update_period")
        );
        assert_eq!(
            field_of(&BASIC.replace("name = \"known\"", "name = \"none\"")),
            "arms[1].name"
        );
        assert_eq!(
            field_of(&BASIC.replace(
                "shaping = \"known_bounds\"",
                "shaping = \"none\"\nupper = 1"
            )),
            "arms[1].upper"
        );
    }

    #[test]
    fn unknown_keys_and_environments_are_rejected() {
        assert!(matches!(
            ExperimentConfig::parse(&format!("{BASIC}\nbogus = 1")),
            Err(Error::ConfigParse(_))
        ));
        let missing = BASIC.replace("corridor-risk", "no-such-map");
        let err = ExperimentConfig::parse(&missing)
            .unwrap()
            .resolve(Path::new("."))
            .unwrap_err();
        assert!(matches!(err, Error::UnknownBenchmark(ref n) if n == "no-such-map"));
    }

    #[test]
    fn map_files_resolve_relative_to_base() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("tiny.map"),
            "step_reward = 0\nmax_steps = 5\ngoal_reward = 1\ngamma = 0.9\n\nSG\n",
        )
        .unwrap();
        let text = BASIC.replace("\"corridor-risk\"", "\"tiny.map\"");
        let c = ExperimentConfig::parse(&text)
            .unwrap()
            .resolve(dir.path())
            .unwrap();
        assert_eq!(c.environments[0].name, "tiny");
        assert_eq!(c.environments[0].build().unwrap().mdp.n_states(), 2);
    }

    #[test]
    fn multi_task_group_follows_environments() {
        let text = format!("{BASIC}\n[multi_task]\ntasks = [\"corridor-risk\", \"sparse-goal\"]\n");
        let c = ExperimentConfig::parse(&text)
            .unwrap()
            .resolve(Path::new("."))
            .unwrap();
        let groups = c.groups();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[1].name, MULTI_TASK_GROUP);
        assert_eq!(groups[1].multi_task, Some(Schedule::RoundRobin));
        let one = format!("{BASIC}\n[multi_task]\ntasks = [\"corridor-risk\"]\n");
        assert_eq!(field_of(&one), "multi_task.tasks");
    }
}
