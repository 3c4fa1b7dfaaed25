//! Environments: gridworlds built from map files and a depth-limited 2×2
//! Rubik's cube. All share the same dynamics contract: with probability
//! [`OVERWRITE_PROB`] the chosen action is replaced by a uniformly drawn
//! one, reaching a goal pays +1 and ends the episode, and episodes are cut
//! after [`EPISODE_CAP`] steps.

pub mod cube;
pub mod grid;

use std::path::Path;
use std::sync::Arc;

pub use cube::CubeWorld;
pub use grid::{GridMap, GridWorld};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const EPISODE_CAP: usize = 100;
pub const OVERWRITE_PROB: f64 = 0.15;

/// Cube ball radius used by tabular experiments.
pub const CUBE_DEPTH_TABULAR: usize = 3;
/// Cube ball radius used with function approximation.
pub const CUBE_DEPTH_DEEP: usize = 5;

pub const ENV_NAMES: [&str; 5] =
    ["nine_rooms", "maze", "rubiks2x2", "nine_rooms_goal_switch", "nine_rooms_topology_switch"];

/// Default global step at which the non-stationary variants switch.
pub const DEFAULT_SWITCH_STEP: u64 = 500_000;

pub mod maps {
    pub const NINE_ROOMS: &str = include_str!("../../maps/nine_rooms.txt");
    pub const MAZE: &str = include_str!("../../maps/maze.txt");
    pub const NINE_ROOMS_GOAL_SWITCH_AFTER: &str = include_str!("../../maps/nine_rooms_goal_switch_after.txt");
    pub const NINE_ROOMS_TOPOLOGY_SWITCH_AFTER: &str = include_str!("../../maps/nine_rooms_topology_switch_after.txt");

    /// Built-in map text by name.
    pub fn builtin(name: &str) -> Option<&'static str> {
        Some(match name {
            "nine_rooms" => NINE_ROOMS,
            "maze" => MAZE,
            "nine_rooms_goal_switch_after" => NINE_ROOMS_GOAL_SWITCH_AFTER,
            "nine_rooms_topology_switch_after" => NINE_ROOMS_TOPOLOGY_SWITCH_AFTER,
            _ => return None,
        })
    }
}

/// A state as seen by learners: its tabular index and its observation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub tabular_id: usize,
    pub features: Arc<[f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    /// Goal reached; the episode is over and nothing bootstraps past it.
    pub episode_end: bool,
    /// Step cap hit without reaching a goal.
    pub truncated: bool,
    pub executed_action: usize,
    pub overwritten: bool,
}

impl StepOutcome {
    pub fn finished(&self) -> bool {
        self.episode_end || self.truncated
    }
}

/// Switch the task of a gridworld at a fixed global step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonStationarySchedule {
    pub switch_step: u64,
    pub after: GridMap,
}

impl NonStationarySchedule {
    pub fn new(switch_step: u64, after: GridMap) -> Result<Self> {
        if after.goals.is_empty() {
            return Err(Error::config(format!("switch map '{}' has no goal", after.name)));
        }
        Ok(NonStationarySchedule { switch_step, after })
    }
}

#[derive(Debug, Clone)]
pub enum Environment {
    Grid(GridWorld),
    Cube(CubeWorld),
}

/// Build a named environment. `rubiks2x2` uses the tabular ball radius; see
/// [`make_cube`] for other radii.
pub fn make_env(name: &str) -> Result<Environment> {
    let grid =
        |text: &str| -> Result<Environment> { Ok(Environment::Grid(GridWorld::new(GridMap::parse(name, text)?))) };
    match name {
        "nine_rooms" | "nine_rooms_goal_switch" | "nine_rooms_topology_switch" => grid(maps::NINE_ROOMS),
        "maze" => grid(maps::MAZE),
        "rubiks2x2" => make_cube(CUBE_DEPTH_TABULAR),
        other => {
            if let Some(path) = other.strip_prefix("file:") {
                return Ok(Environment::Grid(GridWorld::new(GridMap::load(Path::new(path))?)));
            }
            Err(Error::config(format!(
                "unknown environment '{other}' (expected one of {}, or file:<map path>)",
                ENV_NAMES.join(", ")
            )))
        }
    }
}

pub fn make_cube(depth: usize) -> Result<Environment> {
    Ok(Environment::Cube(CubeWorld::new(depth)?))
}

/// The switch attached to the named non-stationary variants.
pub fn default_schedule(name: &str) -> Result<Option<NonStationarySchedule>> {
    let after = match name {
        "nine_rooms_goal_switch" => maps::NINE_ROOMS_GOAL_SWITCH_AFTER,
        "nine_rooms_topology_switch" => maps::NINE_ROOMS_TOPOLOGY_SWITCH_AFTER,
        _ => return Ok(None),
    };
    let map = GridMap::parse(&format!("{name}_after"), after)?;
    Ok(Some(NonStationarySchedule::new(DEFAULT_SWITCH_STEP, map)?))
}

impl Environment {
    pub fn name(&self) -> String {
        match self {
            Environment::Grid(g) => g.map().name.clone(),
            Environment::Cube(c) => format!("rubiks2x2_depth{}", c.depth()),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Environment::Grid(_) => grid::ACTIONS.len(),
            Environment::Cube(_) => cube::NUM_MOVES,
        }
    }

    /// Size of the tabular id space.
    pub fn num_ids(&self) -> usize {
        match self {
            Environment::Grid(g) => g.num_ids(),
            Environment::Cube(c) => c.num_ids(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Environment::Grid(g) => g.feature_dim(),
            Environment::Cube(c) => c.feature_dim(),
        }
    }

    pub fn start_id(&self) -> usize {
        match self {
            Environment::Grid(g) => g.start_id(),
            Environment::Cube(c) => c.start_id(),
        }
    }

    pub fn position(&self) -> usize {
        match self {
            Environment::Grid(g) => g.position(),
            Environment::Cube(c) => c.position(),
        }
    }

    pub fn state(&mut self, id: usize) -> EnvState {
        match self {
            Environment::Grid(g) => g.state(id),
            Environment::Cube(c) => c.state(id),
        }
    }

    pub fn reset(&mut self) -> EnvState {
        match self {
            Environment::Grid(g) => g.reset(),
            Environment::Cube(c) => c.reset(),
        }
    }

    pub fn step(&mut self, action: usize, rng: &mut Rng) -> Result<StepOutcome> {
        match self {
            Environment::Grid(g) => g.step(action, rng),
            Environment::Cube(c) => c.step(action, rng),
        }
    }

    pub fn skeleton_next(&self, id: usize, action: usize) -> usize {
        match self {
            Environment::Grid(g) => g.skeleton_next(id, action),
            Environment::Cube(c) => c.skeleton_next(id, action),
        }
    }

    pub fn set_overwrite_prob(&mut self, p: f64) {
        match self {
            Environment::Grid(g) => g.overwrite_prob = p,
            Environment::Cube(c) => c.overwrite_prob = p,
        }
    }

    /// Reachable state ids in ascending order.
    pub fn reachable_ids(&self) -> Vec<usize> {
        match self {
            Environment::Grid(g) => g.reachable_ids(),
            Environment::Cube(c) => (0..c.num_ids()).collect(),
        }
    }

    /// All reachable states in tabular id order.
    pub fn enumerate_states(&mut self) -> Vec<EnvState> {
        self.reachable_ids().into_iter().map(|id| self.state(id)).collect()
    }

    /// Grid coordinates `(row, col)` of a state, when the environment is a grid.
    pub fn coordinates(&self, id: usize) -> Option<(usize, usize)> {
        match self {
            Environment::Grid(g) => Some(g.cell_of(id)),
            Environment::Cube(_) => None,
        }
    }

    pub fn as_grid(&self) -> Option<&GridWorld> {
        match self {
            Environment::Grid(g) => Some(g),
            Environment::Cube(_) => None,
        }
    }

    /// Apply `schedule` if `global_step` is its switch step. Returns whether
    /// the layout changed. The agent gets no signal; the new start takes
    /// effect at the next reset.
    pub fn apply_switch(&mut self, schedule: &NonStationarySchedule, global_step: u64) -> Result<bool> {
        if global_step != schedule.switch_step {
            return Ok(false);
        }
        match self {
            Environment::Grid(g) => {
                g.replace_map(schedule.after.clone())?;
                Ok(true)
            }
            Environment::Cube(_) => Err(Error::Unsupported("layout switches apply to gridworlds only".into())),
        }
    }
}
