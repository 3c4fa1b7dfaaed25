//! 2×2×2 Rubik's cube restricted to a ball around the solved state.
//!
//! The corner at (-1,-1,-1) is held fixed and only the U, R and F faces
//! turn (clockwise, counter-clockwise, half turn): nine actions. States more
//! than `depth` moves from solved are cut away; a move that would leave the
//! ball is a no-op, like bumping into a wall.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng as _;

use crate::env::{EnvState, StepOutcome, EPISODE_CAP, OVERWRITE_PROB};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const STICKERS: usize = 24;
pub const COLORS: usize = 6;
pub const NUM_MOVES: usize = 9;
pub const MOVE_NAMES: [&str; NUM_MOVES] = ["U", "U'", "U2", "R", "R'", "R2", "F", "F'", "F2"];

pub type Stickers = [u8; STICKERS];

type Vec3 = [i8; 3];

#[derive(Clone, Copy)]
struct Sticker {
    pos: Vec3,
    normal: Vec3,
}

fn face_of(normal: Vec3) -> u8 {
    match normal {
        [0, 1, 0] => 0,
        [0, -1, 0] => 1,
        [0, 0, 1] => 2,
        [0, 0, -1] => 3,
        [1, 0, 0] => 4,
        [-1, 0, 0] => 5,
        _ => unreachable!("normals are unit axis vectors"),
    }
}

/// Quarter turn by +90° (right-hand rule) about `axis`.
fn rotate(v: Vec3, axis: usize) -> Vec3 {
    let [x, y, z] = v;
    match axis {
        0 => [x, -z, y],
        1 => [z, y, -x],
        _ => [-y, x, z],
    }
}

fn sticker_layout() -> Vec<Sticker> {
    let mut out = Vec::with_capacity(STICKERS);
    for x in [-1i8, 1] {
        for y in [-1i8, 1] {
            for z in [-1i8, 1] {
                let pos = [x, y, z];
                for axis in 0..3 {
                    let mut normal = [0i8; 3];
                    normal[axis] = pos[axis];
                    out.push(Sticker { pos, normal });
                }
            }
        }
    }
    out.sort_by_key(|s| (face_of(s.normal), s.pos));
    out
}

/// Sticker permutations for the nine moves: `perm[m][i]` is where the
/// sticker in slot `i` ends up after move `m`.
fn move_permutations() -> [[usize; STICKERS]; NUM_MOVES] {
    let layout = sticker_layout();
    let index = |pos: Vec3, normal: Vec3| {
        layout.iter().position(|s| s.pos == pos && s.normal == normal).expect("rotations map stickers onto stickers")
    };
    // U, R, F turn the layers at +y, +x, +z.
    let faces = [1usize, 0, 2];
    let mut perms = [[0usize; STICKERS]; NUM_MOVES];
    for (f, &axis) in faces.iter().enumerate() {
        // clockwise seen from outside = three positive quarter turns
        for (kind, quarters) in [3usize, 1, 2].into_iter().enumerate() {
            let perm = &mut perms[3 * f + kind];
            for (i, s) in layout.iter().enumerate() {
                if s.pos[axis] != 1 {
                    perm[i] = i;
                    continue;
                }
                let (mut p, mut n) = (s.pos, s.normal);
                for _ in 0..quarters {
                    p = rotate(p, axis);
                    n = rotate(n, axis);
                }
                perm[i] = index(p, n);
            }
        }
    }
    perms
}

pub fn solved() -> Stickers {
    let layout = sticker_layout();
    let mut s = [0u8; STICKERS];
    for (i, st) in layout.iter().enumerate() {
        s[i] = face_of(st.normal);
    }
    s
}

/// Index of the move undoing `m`.
pub fn inverse_move(m: usize) -> usize {
    match m % 3 {
        0 => m + 1,
        1 => m - 1,
        _ => m,
    }
}

#[derive(Debug, Clone)]
pub struct CubeWorld {
    depth: usize,
    states: Vec<Stickers>,
    distance: Vec<usize>,
    transitions: Vec<[usize; NUM_MOVES]>,
    obs_cache: Vec<Option<Arc<[f64]>>>,
    start: usize,
    current: usize,
    steps: usize,
    ended: bool,
    pub overwrite_prob: f64,
    pub episode_cap: usize,
}

impl CubeWorld {
    /// All states within `depth` moves of solved, breadth-first.
    pub fn new(depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::config("cube depth must be at least 1"));
        }
        let perms = move_permutations();
        let apply = |s: &Stickers, m: usize| {
            let mut out = [0u8; STICKERS];
            for (i, &c) in s.iter().enumerate() {
                out[perms[m][i]] = c;
            }
            out
        };
        let mut states = vec![solved()];
        let mut distance = vec![0usize];
        let mut index: HashMap<Stickers, usize> = HashMap::from([(solved(), 0)]);
        let mut frontier = 0..1;
        for d in 1..=depth {
            let begin = states.len();
            for id in frontier.clone() {
                for m in 0..NUM_MOVES {
                    let next = apply(&states[id], m);
                    if let std::collections::hash_map::Entry::Vacant(e) = index.entry(next) {
                        e.insert(states.len());
                        states.push(next);
                        distance.push(d);
                    }
                }
            }
            frontier = begin..states.len();
        }
        let transitions = states
            .iter()
            .enumerate()
            .map(|(id, s)| {
                let mut row = [id; NUM_MOVES];
                for (m, slot) in row.iter_mut().enumerate() {
                    if let Some(&next) = index.get(&apply(s, m)) {
                        *slot = next;
                    }
                }
                row
            })
            .collect();
        let start = distance.iter().position(|&d| d == depth).expect("every depth layer is non-empty");
        let n = states.len();
        Ok(CubeWorld {
            depth,
            states,
            distance,
            transitions,
            obs_cache: vec![None; n],
            start,
            current: start,
            steps: 0,
            ended: true,
            overwrite_prob: OVERWRITE_PROB,
            episode_cap: EPISODE_CAP,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_ids(&self) -> usize {
        self.states.len()
    }

    pub fn stickers(&self, id: usize) -> &Stickers {
        &self.states[id]
    }

    /// Moves from solved to state `id`.
    pub fn distance(&self, id: usize) -> usize {
        self.distance[id]
    }

    pub fn start_id(&self) -> usize {
        self.start
    }

    pub fn position(&self) -> usize {
        self.current
    }

    pub fn feature_dim(&self) -> usize {
        STICKERS * COLORS
    }

    pub fn skeleton_next(&self, id: usize, action: usize) -> usize {
        self.transitions[id][action]
    }

    pub fn state(&mut self, id: usize) -> EnvState {
        if self.obs_cache[id].is_none() {
            let mut one_hot = vec![0.0; STICKERS * COLORS];
            for (i, &c) in self.states[id].iter().enumerate() {
                one_hot[i * COLORS + c as usize] = 1.0;
            }
            self.obs_cache[id] = Some(one_hot.into());
        }
        EnvState { tabular_id: id, features: self.obs_cache[id].clone().unwrap() }
    }

    pub fn reset(&mut self) -> EnvState {
        self.current = self.start;
        self.steps = 0;
        self.ended = false;
        self.state(self.start)
    }

    pub fn step(&mut self, action: usize, rng: &mut Rng) -> Result<StepOutcome> {
        if self.ended {
            return Err(Error::usage("step called on an ended episode; call reset first"));
        }
        if action >= NUM_MOVES {
            return Err(Error::usage(format!("action {action} out of range 0..{NUM_MOVES}")));
        }
        let overwritten = rng.gen::<f64>() < self.overwrite_prob;
        let executed = if overwritten { rng.gen_range(0..NUM_MOVES) } else { action };
        self.current = self.transitions[self.current][executed];
        self.steps += 1;
        let solved = self.current == 0;
        let truncated = !solved && self.steps >= self.episode_cap;
        self.ended = solved || truncated;
        Ok(StepOutcome {
            next_state: self.state(self.current),
            reward: if solved { 1.0 } else { 0.0 },
            episode_end: solved,
            truncated,
            executed_action: executed,
            overwritten,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_are_bijections_and_fix_the_back_corner() {
        let perms = move_permutations();
        let layout = sticker_layout();
        for perm in &perms {
            let mut seen = [false; STICKERS];
            for &j in perm {
                assert!(!seen[j]);
                seen[j] = true;
            }
            for (i, s) in layout.iter().enumerate() {
                if s.pos == [-1, -1, -1] {
                    assert_eq!(perm[i], i);
                }
            }
        }
    }

    #[test]
    fn quarter_turn_has_order_four() {
        let cube = CubeWorld::new(4).unwrap();
        for m in [0, 3, 6] {
            let mut id = 0;
            let mut ids = vec![];
            for _ in 0..4 {
                id = cube.skeleton_next(id, m);
                ids.push(id);
            }
            assert_eq!(id, 0);
            assert!(ids[..3].iter().all(|&i| i != 0));
        }
    }

    #[test]
    fn half_turn_is_two_quarters() {
        let cube = CubeWorld::new(3).unwrap();
        for f in 0..3 {
            let twice = cube.skeleton_next(cube.skeleton_next(0, 3 * f), 3 * f);
            assert_eq!(twice, cube.skeleton_next(0, 3 * f + 2));
        }
    }

    #[test]
    fn start_sits_on_the_outer_layer() {
        for depth in [1, 3] {
            let cube = CubeWorld::new(depth).unwrap();
            assert_eq!(cube.distance(cube.start_id()), depth);
        }
    }

    #[test]
    fn one_hot_features() {
        let mut cube = CubeWorld::new(1).unwrap();
        let s = cube.reset();
        assert_eq!(s.features.len(), 144);
        assert_eq!(s.features.iter().sum::<f64>(), 24.0);
    }
}
