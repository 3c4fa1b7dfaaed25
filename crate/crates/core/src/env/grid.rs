//! Gridworld maps and the gridworld environment.
//!
//! Map files are plain ASCII, one character per cell, one row per line:
//!
//! ```text
//! #   wall
//! .   floor
//! S   start cell (exactly one)
//! G   goal cell (any number, possibly none)
//! ```
//!
//! Rows must all have the same width. Every open cell has to be reachable
//! from the start by 4-neighbour moves.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng as _;

use crate::env::{EnvState, StepOutcome, EPISODE_CAP, OVERWRITE_PROB};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Grid actions, in action-index order.
pub const ACTIONS: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];
pub const ACTION_NAMES: [&str; 4] = ["up", "right", "down", "left"];

pub const WALL_PIXEL: f64 = 0.0;
pub const FLOOR_PIXEL: f64 = 0.5;
pub const AGENT_PIXEL: f64 = 1.0;

/// A parsed map: blocked cells, start and goals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    pub name: String,
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    pub start: (usize, usize),
    pub goals: Vec<(usize, usize)>,
}

impl GridMap {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::config(format!("map '{name}' is empty")));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = Vec::with_capacity(width * height);
        let mut start = None;
        let mut goals = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::config(format!(
                    "map '{name}': row {r} has width {} but row 0 has width {width}",
                    row.chars().count()
                )));
            }
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'S' => {
                        if start.replace((r, c)).is_some() {
                            return Err(Error::config(format!("map '{name}' has more than one start")));
                        }
                        walls.push(false);
                    }
                    'G' => {
                        goals.push((r, c));
                        walls.push(false);
                    }
                    other => {
                        return Err(Error::config(format!(
                            "map '{name}': unexpected character {other:?} at row {r}, column {c}"
                        )))
                    }
                }
            }
        }
        let start = start.ok_or_else(|| Error::config(format!("map '{name}' has no start cell")))?;
        let map = GridMap { name: name.to_string(), width, height, walls, start, goals };
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("map");
        Self::parse(name, &text)
    }

    fn validate(&self) -> Result<()> {
        if self.is_wall(self.start) {
            return Err(Error::config(format!("map '{}': start is a wall", self.name)));
        }
        let reach = self.reachable_from(self.start);
        for r in 0..self.height {
            for c in 0..self.width {
                if !self.is_wall((r, c)) && !reach[r * self.width + c] {
                    return Err(Error::config(format!(
                        "map '{}': open cell ({r}, {c}) is not reachable from the start",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_wall(&self, (r, c): (usize, usize)) -> bool {
        self.walls[r * self.width + c]
    }

    pub fn is_goal(&self, cell: (usize, usize)) -> bool {
        self.goals.contains(&cell)
    }

    pub fn open_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| (r, c))).filter(|&cell| !self.is_wall(cell))
    }

    /// Deterministic move: stepping into a wall or off the map is a no-op.
    pub fn next_cell(&self, (r, c): (usize, usize), action: usize) -> (usize, usize) {
        let (dr, dc) = ACTIONS[action];
        let nr = r as isize + dr;
        let nc = c as isize + dc;
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            return (r, c);
        }
        let next = (nr as usize, nc as usize);
        if self.is_wall(next) {
            (r, c)
        } else {
            next
        }
    }

    fn reachable_from(&self, from: (usize, usize)) -> Vec<bool> {
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::from([from]);
        seen[from.0 * self.width + from.1] = true;
        while let Some(cell) = queue.pop_front() {
            for a in 0..ACTIONS.len() {
                let next = self.next_cell(cell, a);
                let k = next.0 * self.width + next.1;
                if !seen[k] {
                    seen[k] = true;
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    /// Replace the goal set, checking every new goal is an open cell.
    pub fn with_goals(mut self, goals: Vec<(usize, usize)>) -> Result<Self> {
        for &g in &goals {
            if g.0 >= self.height || g.1 >= self.width || self.is_wall(g) {
                return Err(Error::config(format!("map '{}': goal {g:?} is not an open cell", self.name)));
            }
        }
        self.goals = goals;
        Ok(self)
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let ch = if (r, c) == self.start {
                    'S'
                } else if self.is_goal((r, c)) {
                    'G'
                } else if self.is_wall((r, c)) {
                    '#'
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

/// A gridworld with stochastic action overwrite and a step cap.
///
/// Tabular ids are assigned once, in row-major order over the open cells of
/// the initial map, and stay fixed across layout switches.
#[derive(Debug, Clone)]
pub struct GridWorld {
    map: GridMap,
    cell_to_id: Vec<Option<usize>>,
    id_to_cell: Vec<(usize, usize)>,
    obs_cache: Vec<Option<Arc<[f64]>>>,
    pos: (usize, usize),
    steps: usize,
    ended: bool,
    pub overwrite_prob: f64,
    pub episode_cap: usize,
}

impl GridWorld {
    pub fn new(map: GridMap) -> Self {
        let mut cell_to_id = vec![None; map.width * map.height];
        let mut id_to_cell = Vec::new();
        for cell in map.open_cells() {
            cell_to_id[cell.0 * map.width + cell.1] = Some(id_to_cell.len());
            id_to_cell.push(cell);
        }
        let n = id_to_cell.len();
        let pos = map.start;
        GridWorld {
            map,
            cell_to_id,
            id_to_cell,
            obs_cache: vec![None; n],
            pos,
            steps: 0,
            ended: true,
            overwrite_prob: OVERWRITE_PROB,
            episode_cap: EPISODE_CAP,
        }
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn num_ids(&self) -> usize {
        self.id_to_cell.len()
    }

    pub fn id_of(&self, cell: (usize, usize)) -> Option<usize> {
        self.cell_to_id.get(cell.0 * self.map.width + cell.1).copied().flatten()
    }

    pub fn cell_of(&self, id: usize) -> (usize, usize) {
        self.id_to_cell[id]
    }

    pub fn feature_dim(&self) -> usize {
        self.map.width * self.map.height
    }

    pub fn start_id(&self) -> usize {
        self.id_of(self.map.start).expect("start is an open cell")
    }

    pub fn position(&self) -> usize {
        self.id_of(self.pos).expect("agent stands on an open cell")
    }

    pub fn steps_in_episode(&self) -> usize {
        self.steps
    }

    pub fn state(&mut self, id: usize) -> EnvState {
        if self.obs_cache[id].is_none() {
            let cell = self.id_to_cell[id];
            let mut px = Vec::with_capacity(self.feature_dim());
            for r in 0..self.map.height {
                for c in 0..self.map.width {
                    px.push(if (r, c) == cell {
                        AGENT_PIXEL
                    } else if self.map.is_wall((r, c)) {
                        WALL_PIXEL
                    } else {
                        FLOOR_PIXEL
                    });
                }
            }
            self.obs_cache[id] = Some(px.into());
        }
        EnvState { tabular_id: id, features: self.obs_cache[id].clone().unwrap() }
    }

    pub fn reset(&mut self) -> EnvState {
        self.pos = self.map.start;
        self.steps = 0;
        self.ended = false;
        let id = self.position();
        self.state(id)
    }

    /// Next id under the deterministic skeleton (no overwrite noise).
    pub fn skeleton_next(&self, id: usize, action: usize) -> usize {
        let next = self.map.next_cell(self.id_to_cell[id], action);
        self.id_of(next).expect("moves stay on open cells")
    }

    pub fn step(&mut self, action: usize, rng: &mut Rng) -> Result<StepOutcome> {
        if self.ended {
            return Err(Error::usage("step called on an ended episode; call reset first"));
        }
        if action >= ACTIONS.len() {
            return Err(Error::usage(format!("action {action} out of range 0..{}", ACTIONS.len())));
        }
        let overwritten = rng.gen::<f64>() < self.overwrite_prob;
        let executed = if overwritten { rng.gen_range(0..ACTIONS.len()) } else { action };
        self.pos = self.map.next_cell(self.pos, executed);
        self.steps += 1;
        let reached_goal = self.map.is_goal(self.pos);
        let truncated = !reached_goal && self.steps >= self.episode_cap;
        self.ended = reached_goal || truncated;
        let id = self.position();
        Ok(StepOutcome {
            next_state: self.state(id),
            reward: if reached_goal { 1.0 } else { 0.0 },
            episode_end: reached_goal,
            truncated,
            executed_action: executed,
            overwritten,
        })
    }

    /// Ids reachable from the current start in the current layout, ascending.
    pub fn reachable_ids(&self) -> Vec<usize> {
        let reach = self.map.reachable_from(self.map.start);
        (0..self.num_ids())
            .filter(|&id| {
                let (r, c) = self.id_to_cell[id];
                !self.map.is_wall((r, c)) && reach[r * self.map.width + c]
            })
            .collect()
    }

    /// Swap in a new layout. The new map must have the same shape and may only
    /// open cells that were open initially (ids stay stable).
    pub fn replace_map(&mut self, next: GridMap) -> Result<()> {
        if next.width != self.map.width || next.height != self.map.height {
            return Err(Error::config(format!(
                "switch map '{}' is {}x{} but the environment is {}x{}",
                next.name, next.width, next.height, self.map.width, self.map.height
            )));
        }
        for cell in next.open_cells() {
            if self.id_of(cell).is_none() {
                return Err(Error::config(format!(
                    "switch map '{}' opens cell {cell:?}, which is a wall in the initial layout",
                    next.name
                )));
            }
        }
        if next.goals.is_empty() {
            return Err(Error::config(format!("switch map '{}' has no goal", next.name)));
        }
        self.map = next;
        for slot in &mut self.obs_cache {
            *slot = None;
        }
        if self.map.is_wall(self.pos) {
            self.pos = self.map.start;
        }
        Ok(())
    }
}
