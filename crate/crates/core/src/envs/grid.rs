use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Outcome, TabularMdp};

pub const MAX_PELLETS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Move {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    fn apply(self, cell: Cell, width: usize, height: usize) -> Option<Cell> {
        let Cell { row, col } = cell;
        match self {
            Move::Up => row.checked_sub(1).map(|r| Cell::new(r, col)),
            Move::Down => (row + 1 < height).then(|| Cell::new(row + 1, col)),
            Move::Left => col.checked_sub(1).map(|c| Cell::new(row, c)),
            Move::Right => (col + 1 < width).then(|| Cell::new(row, col + 1)),
        }
    }
}

/// A deterministic gridworld with consumable pellets.
///
/// Pellets are worth +1 the first time their cell is entered, hazards -1
/// every time, and entering the goal ends the episode with `goal_reward`.
/// `step_reward` is added to every move, blocked or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub walls: BTreeSet<Cell>,
    pub start: Cell,
    pub goal: Option<Cell>,
    pub goal_reward: f64,
    /// Bit `i` of the pellet mask tracks the `i`-th pellet in row-major
    /// order.
    pub pellets: BTreeSet<Cell>,
    pub hazards: BTreeSet<Cell>,
    pub step_reward: f64,
    pub max_steps: usize,
    pub gamma: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(Error::InvalidGrid { field, reason });
        if self.width == 0 || self.height == 0 {
            return bad("width", format!("{}x{} grid", self.width, self.height));
        }
        let in_bounds = |c: &Cell| c.row < self.height && c.col < self.width;
        let sets: [(&'static str, &BTreeSet<Cell>); 3] = [
            ("walls", &self.walls),
            ("pellets", &self.pellets),
            ("hazards", &self.hazards),
        ];
        for (field, set) in sets {
            if let Some(c) = set.iter().find(|c| !in_bounds(c)) {
                return bad(field, format!("cell {c:?} out of bounds"));
            }
        }
        if !in_bounds(&self.start) {
            return bad("start", format!("cell {:?} out of bounds", self.start));
        }
        if self.walls.contains(&self.start) {
            return bad("start", "start is a wall".into());
        }
        if self.pellets.contains(&self.start) || self.goal == Some(self.start) {
            return bad("start", "start overlaps a pellet or the goal".into());
        }
        if let Some(goal) = self.goal {
            if !in_bounds(&goal) {
                return bad("goal", format!("cell {goal:?} out of bounds"));
            }
            if self.walls.contains(&goal)
                || self.pellets.contains(&goal)
                || self.hazards.contains(&goal)
            {
                return bad("goal", "goal overlaps another special cell".into());
            }
        }
        if let Some(c) = self
            .pellets
            .iter()
            .find(|c| self.walls.contains(c) || self.hazards.contains(c))
        {
            return bad("pellets", format!("cell {c:?} overlaps a wall or hazard"));
        }
        if let Some(c) = self.hazards.iter().find(|c| self.walls.contains(c)) {
            return bad("hazards", format!("cell {c:?} overlaps a wall"));
        }
        if self.pellets.len() > MAX_PELLETS {
            return bad(
                "pellets",
                format!("{} pellets, at most {MAX_PELLETS}", self.pellets.len()),
            );
        }
        for (field, v) in [
            ("step_reward", self.step_reward),
            ("goal_reward", self.goal_reward),
        ] {
            if !v.is_finite() {
                return bad(field, format!("{v}"));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", format!("{} not in [0, 1)", self.gamma));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    /// `cells * 2^pellets`.
    pub fn n_states(&self) -> usize {
        self.n_cells() << self.pellets.len()
    }

    /// State index of `cell` with the pellets in `consumed` eaten.
    pub fn state_index(&self, cell: Cell, consumed: u32) -> usize {
        consumed as usize * self.n_cells() + cell.row * self.width + cell.col
    }

    pub fn start_state(&self) -> usize {
        self.state_index(self.start, 0)
    }

    /// Analytic episode-reward range over all policies: every pellet plus
    /// the goal at best; a hazard entered on every step at worst.
    pub fn episode_reward_bounds(&self) -> (f64, f64) {
        let steps = self.max_steps as f64;
        let goal_hi = if self.goal.is_some() {
            self.goal_reward.max(0.0)
        } else {
            0.0
        };
        let goal_lo = if self.goal.is_some() {
            self.goal_reward.min(0.0)
        } else {
            0.0
        };
        let hazard = if self.hazards.is_empty() { 0.0 } else { 1.0 };
        let lower = goal_lo + steps * (self.step_reward.min(0.0) - hazard);
        let upper = self.pellets.len() as f64 + goal_hi + steps * self.step_reward.max(0.0);
        (lower, upper)
    }

    /// Parses the plain-text map format: `key = value` header lines, a blank
    /// line, then one row of cells per line.
    ///
    /// Cells: `#` wall, `.` empty, `S` start, `G` goal, `o` pellet,
    /// `x` hazard. Header keys: `step_reward`, `max_steps`, `goal_reward`,
    /// `gamma`.
    pub fn parse_map(text: &str) -> Result<Self> {
        let err = |line: usize, reason: String| Error::MapParse { line, reason };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        let mut step_reward = None;
        let mut max_steps = None;
        let mut goal_reward = None;
        let mut gamma = None;
        for (no, line) in lines.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                break;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(no, format!("expected `key = value`, got `{line}`")))?;
            let value = value.trim();
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|e| err(no, format!("{key}: {e}")))
            };
            match key.trim() {
                "step_reward" => step_reward = Some(float()?),
                "goal_reward" => goal_reward = Some(float()?),
                "gamma" => gamma = Some(float()?),
                "max_steps" => {
                    max_steps = Some(
                        value
                            .parse::<usize>()
                            .map_err(|e| err(no, format!("max_steps: {e}")))?,
                    )
                }
                other => return Err(err(no, format!("unknown header key `{other}`"))),
            }
        }

        let mut walls = BTreeSet::new();
        let mut pellets = BTreeSet::new();
        let mut hazards = BTreeSet::new();
        let mut start = None;
        let mut goal = None;
        let mut width = None;
        let mut height = 0;
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let row: Vec<char> = line.chars().collect();
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(err(no, format!("row width {} != {w}", row.len())))
                }
                _ => {}
            }
            for (col, ch) in row.into_iter().enumerate() {
                let cell = Cell::new(height, col);
                match ch {
                    '.' => {}
                    '#' => {
                        walls.insert(cell);
                    }
                    'o' => {
                        pellets.insert(cell);
                    }
                    'x' => {
                        hazards.insert(cell);
                    }
                    'S' if start.is_none() => start = Some(cell),
                    'G' if goal.is_none() => goal = Some(cell),
                    'S' | 'G' => return Err(err(no, format!("duplicate `{ch}`"))),
                    other => return Err(err(no, format!("unknown cell `{other}`"))),
                }
            }
            height += 1;
        }

        let missing = |key: &str| err(0, format!("missing header key `{key}`"));
        let spec = GridSpec {
            width: width.ok_or_else(|| err(0, "map has no rows".into()))?,
            height,
            walls,
            start: start.ok_or_else(|| err(0, "map has no start `S`".into()))?,
            goal,
            goal_reward: goal_reward.ok_or_else(|| missing("goal_reward"))?,
            pellets,
            hazards,
            step_reward: step_reward.ok_or_else(|| missing("step_reward"))?,
            max_steps: max_steps.ok_or_else(|| missing("max_steps"))?,
            gamma: gamma.ok_or_else(|| missing("gamma"))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_map_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "step_reward = {}", self.step_reward);
        let _ = writeln!(out, "max_steps = {}", self.max_steps);
        let _ = writeln!(out, "goal_reward = {}", self.goal_reward);
        let _ = writeln!(out, "gamma = {}", self.gamma);
        out.push('\n');
        for row in 0..self.height {
            for col in 0..self.width {
                let c = Cell::new(row, col);
                let ch = if c == self.start {
                    'S'
                } else if Some(c) == self.goal {
                    'G'
                } else if self.walls.contains(&c) {
                    '#'
                } else if self.pellets.contains(&c) {
                    'o'
                } else if self.hazards.contains(&c) {
                    'x'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Enumerates `(cell, consumed-pellet mask)` states and the four moves.
/// Blocked moves stay put and earn only `step_reward`. Goal states are
/// terminal for every mask.
pub fn compile_grid(spec: &GridSpec, gamma: f64) -> Result<TabularMdp> {
    spec.validate()?;
    let n_cells = spec.n_cells();
    let pellet_bit = |c: &Cell| spec.pellets.iter().position(|p| p == c);
    let masks = 1u32 << spec.pellets.len();

    let mut rows = Vec::with_capacity(spec.n_states() * Move::ALL.len());
    let mut terminals = BTreeSet::new();
    for mask in 0..masks {
        for idx in 0..n_cells {
            let here = Cell::new(idx / spec.width, idx % spec.width);
            let s = spec.state_index(here, mask);
            if spec.goal == Some(here) {
                terminals.insert(s);
            }
            for mv in Move::ALL {
                let outcome = if spec.walls.contains(&here) {
                    // unreachable
                    Outcome {
                        next: s,
                        probability: 1.0,
                        reward: 0.0,
                    }
                } else {
                    match mv
                        .apply(here, spec.width, spec.height)
                        .filter(|c| !spec.walls.contains(c))
                    {
                        None => Outcome {
                            next: s,
                            probability: 1.0,
                            reward: spec.step_reward,
                        },
                        Some(to) => {
                            let mut reward = spec.step_reward;
                            let mut next_mask = mask;
                            if let Some(bit) = pellet_bit(&to) {
                                if mask & (1 << bit) == 0 {
                                    reward += 1.0;
                                    next_mask |= 1 << bit;
                                }
                            }
                            if spec.hazards.contains(&to) {
                                reward -= 1.0;
                            }
                            if spec.goal == Some(to) {
                                reward += spec.goal_reward;
                            }
                            Outcome {
                                next: spec.state_index(to, next_mask),
                                probability: 1.0,
                                reward,
                            }
                        }
                    }
                };
                rows.push(vec![outcome]);
            }
        }
    }
    TabularMdp::new(
        spec.n_states(),
        Move::ALL.len(),
        rows,
        gamma,
        terminals,
        spec.start_state(),
    )
}
