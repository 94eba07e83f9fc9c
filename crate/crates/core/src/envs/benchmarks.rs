use crate::error::{Error, Result};

use super::grid::GridSpec;

/// A frozen benchmark map.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub name: &'static str,
    pub description: &'static str,
    pub spec: GridSpec,
    /// Documented `|S|` of the compiled MDP.
    pub n_states: usize,
    /// `(min, max)` episode reward over all policies.
    pub reward_bounds: (f64, f64),
}

// 9x9, one +1 at the goal and nothing else. 81 states.
const SPARSE_GOAL: &str = "\
step_reward = 0
max_steps = 200
goal_reward = 1
gamma = 0.99

S........
.........
..####...
.....#...
.....#...
..#..#...
..#......
..#......
........G
";

// 7x7, six pellets, two hazards, goal worth 2. 49 * 2^6 = 3136 states.
const PELLET_COLLECTOR: &str = "\
step_reward = 0
max_steps = 100
goal_reward = 2
gamma = 0.99

S..o...
.#.o.#.
.......
ox..x..
o......
.#...#.
..o..oG
";

// 1x12, one pellet behind a hazard, one hazard before the goal.
// 12 * 2 = 24 states.
const CORRIDOR_RISK: &str = "\
step_reward = 0
max_steps = 60
goal_reward = 3
gamma = 0.99

o.x.S....x.G
";

const TABLE: [(&str, &str, &str, usize); 3] = [
    (
        "sparse-goal",
        "9x9 maze, single +1 on reaching the goal",
        SPARSE_GOAL,
        81,
    ),
    (
        "pellet-collector",
        "7x7 room, six +1 pellets, two -1 hazards, +2 goal",
        PELLET_COLLECTOR,
        3136,
    ),
    (
        "corridor-risk",
        "1x12 corridor, hazards guard a pellet and the goal",
        CORRIDOR_RISK,
        24,
    ),
];

pub fn standard_benchmarks() -> Vec<Benchmark> {
    TABLE
        .iter()
        .map(|&(name, description, text, n_states)| {
            let spec = GridSpec::parse_map(text).expect("frozen benchmark maps are valid");
            Benchmark {
                name,
                description,
                reward_bounds: spec.episode_reward_bounds(),
                spec,
                n_states,
            }
        })
        .collect()
}

pub fn benchmark(name: &str) -> Result<Benchmark> {
    standard_benchmarks()
        .into_iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::UnknownBenchmark(name.to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{compile_grid, EpisodicEnv};
    use crate::learners::{evaluate_policy, QTable};
    use crate::mdp::Environment;
    use crate::rng::SeededRng;

    #[test]
    fn documented_state_counts() {
        for b in standard_benchmarks() {
            let mdp = compile_grid(&b.spec, b.spec.gamma).unwrap();
            assert_eq!(mdp.n_states(), b.n_states, "{}", b.name);
            assert_eq!(b.spec.n_states(), b.n_states, "{}", b.name);
            assert!(mdp.is_deterministic());
        }
    }

    #[test]
    fn required_benchmarks_exist() {
        let pc = benchmark("pellet-collector").unwrap().spec;
        assert_eq!(
            (pc.width, pc.height, pc.pellets.len(), pc.hazards.len()),
            (7, 7, 6, 2)
        );
        assert!(pc.goal.is_some());
        let sg = benchmark("sparse-goal").unwrap().spec;
        assert_eq!(
            (sg.width, sg.height, sg.pellets.len(), sg.hazards.len()),
            (9, 9, 0, 0)
        );
        assert_eq!(sg.goal_reward, 1.0);
        let cr = benchmark("corridor-risk").unwrap().spec;
        assert_eq!((cr.width, cr.height), (12, 1));
        assert!(!cr.hazards.is_empty());
        assert!(matches!(benchmark("pong"), Err(Error::UnknownBenchmark(_))));
    }

    #[test]
    fn sparse_goal_pays_once() {
        let b = benchmark("sparse-goal").unwrap();
        let mdp = compile_grid(&b.spec, b.spec.gamma).unwrap();
        let nonzero: Vec<_> = mdp
            .rows()
            .iter()
            .flatten()
            .filter(|o| o.reward != 0.0)
            .collect();
        assert!(!nonzero.is_empty());
        assert!(nonzero
            .iter()
            .all(|o| o.reward == 1.0 && mdp.is_terminal(o.next)));
    }

    #[test]
    fn random_policies_stay_within_bounds() {
        for b in standard_benchmarks() {
            let env = EpisodicEnv::from_spec(b.name, &b.spec).unwrap();
            let mut rng = SeededRng::new(17);
            let (lo, hi) = b.reward_bounds;
            for episode in 0..200 {
                // random tables give arbitrary deterministic policies
                let mut q = QTable::zeros(env.n_states(), env.n_actions());
                for s in 0..env.n_states() {
                    q.set(s, rng.below(4), 1.0 + episode as f64);
                }
                let r = evaluate_policy(&env, &q, 1, &mut rng).unwrap()[0];
                assert!(
                    (lo..=hi).contains(&r),
                    "{}: {r} outside [{lo}, {hi}]",
                    b.name
                );
            }
        }
    }
}
