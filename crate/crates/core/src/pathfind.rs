//! Iteration-bounded A* for agents carrying blocks.
//!
//! Search states are (cell, quarter-turn orientation). An agent moves its
//! whole footprint one cell (cost 1 over known-free cells, 2 when any
//! destination cell is unknown) or rotates it in place (cost 1). The search
//! gives up after `max_iter` expansions.

use alloc::collections::{BTreeSet, BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use arrayvec::ArrayVec;
use hashbrown::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::beliefs::GroupMap;
use crate::geom::{Coord, Dir, Turn};
use crate::world::Action;

/// Expansion cap used when nothing else is configured.
pub const DEFAULT_MAX_ITER: u32 = 2500;

/// Cost model of a grid: `None` is impassable.
pub trait Passability {
    fn cost(&self, c: Coord) -> Option<u32>;
}

/// Planning view of a group map. Cells in `ignore` (the planner's own
/// footprint) never block; cells in `blocked` always do.
pub struct BeliefView<'a> {
    pub map: &'a GroupMap,
    pub ignore: &'a BTreeSet<Coord>,
    pub blocked: &'a BTreeSet<Coord>,
}

impl Passability for BeliefView<'_> {
    fn cost(&self, c: Coord) -> Option<u32> {
        if self.blocked.contains(&c) {
            return None;
        }
        let info = match self.map.cell(c) {
            None => return Some(2),
            Some(info) => info,
        };
        if info.terrain == crate::beliefs::KnownTerrain::Obstacle {
            return None;
        }
        if !self.ignore.contains(&c) && self.map.fresh_occupant(c).is_some() {
            return None;
        }
        Some(1)
    }
}

/// Dense boolean grid, mostly for tests and oracles. Outside is blocked.
#[derive(Clone, Debug)]
pub struct GridView {
    pub width: i32,
    pub height: i32,
    pub blocked: Vec<bool>,
}

impl GridView {
    pub fn open(width: i32, height: i32) -> Self {
        GridView {
            width,
            height,
            blocked: vec![false; (width * height) as usize],
        }
    }

    pub fn in_bounds(&self, c: Coord) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    pub fn set_blocked(&mut self, c: Coord, b: bool) {
        let i = (c.y * self.width + c.x) as usize;
        self.blocked[i] = b;
    }

    pub fn is_blocked(&self, c: Coord) -> bool {
        !self.in_bounds(c) || self.blocked[(c.y * self.width + c.x) as usize]
    }
}

impl Passability for GridView {
    fn cost(&self, c: Coord) -> Option<u32> {
        if self.is_blocked(c) {
            None
        } else {
            Some(1)
        }
    }
}

/// Cells occupied by an agent and its attached blocks, relative to the agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    offsets: Vec<Coord>,
}

impl Footprint {
    pub fn single() -> Self {
        Footprint {
            offsets: vec![Coord::ORIGIN],
        }
    }

    /// Agent cell plus the given block offsets.
    pub fn with_blocks(blocks: impl IntoIterator<Item = Coord>) -> Self {
        let mut offsets: Vec<Coord> = blocks.into_iter().filter(|c| *c != Coord::ORIGIN).collect();
        offsets.push(Coord::ORIGIN);
        offsets.sort();
        offsets.dedup();
        Footprint { offsets }
    }

    pub fn offsets(&self) -> &[Coord] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn rotated(&self, quarters: u8) -> Vec<Coord> {
        self.offsets.iter().map(|o| o.rotated(quarters)).collect()
    }

    pub fn cells_at(&self, pos: Coord, quarters: u8) -> Vec<Coord> {
        self.offsets.iter().map(|o| pos + o.rotated(quarters)).collect()
    }

    /// A footprint that looks the same after a quarter turn.
    pub fn is_rotation_symmetric(&self) -> bool {
        let mut turned = self.rotated(1);
        turned.sort();
        turned == self.offsets
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoPath {
    CapExceeded,
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathResult {
    pub outcome: Result<Vec<Action>, NoPath>,
    pub iterations: u32,
    /// Total step cost of the found path (0 when none).
    pub cost: u32,
    /// Final (cell, orientation) of the found path.
    pub end: Option<(Coord, u8)>,
}

impl PathResult {
    pub fn actions(&self) -> Option<&[Action]> {
        self.outcome.as_deref().ok()
    }

    pub fn path_len(&self) -> Option<usize> {
        self.actions().map(|a| a.len())
    }
}

/// Goal description: `cells` drive the heuristic (Manhattan to the nearest),
/// `accept` decides whether a state is a goal.
pub struct GoalSpec<'a> {
    pub cells: &'a [Coord],
    pub accept: &'a dyn Fn(Coord, u8) -> bool,
}

fn heuristic(cells: &[Coord], c: Coord) -> u32 {
    cells.iter().map(|g| g.distance(c)).min().unwrap_or(0)
}

/// Cost of standing with `fp` at `pos`/`rot`, or `None` when illegal.
fn placement_cost(map: &dyn Passability, fp: &Footprint, pos: Coord, rot: u8) -> Option<u32> {
    let mut worst = 0;
    for o in &fp.offsets {
        worst = worst.max(map.cost(pos + o.rotated(rot))?);
    }
    Some(worst)
}

type State = (Coord, u8);

/// At most four moves and two rotations; kept on the stack.
type Successors = ArrayVec<(State, Action, u32), 6>;

fn successors(map: &dyn Passability, fp: &Footprint, state: State, rotations: bool) -> Successors {
    let (pos, rot) = state;
    let mut out = Successors::new();
    for dir in Dir::ALL {
        let next = pos + dir.delta();
        if let Some(c) = placement_cost(map, fp, next, rot) {
            out.push(((next, rot), Action::Move { dir }, c));
        }
    }
    if rotations {
        for turn in [Turn::Cw, Turn::Ccw] {
            let r = (rot + turn.quarters()) % 4;
            if placement_cost(map, fp, pos, r).is_some() {
                out.push(((pos, r), Action::Rotate { turn }, 1));
            }
        }
    }
    out
}

fn rebuild(came: &HashMap<State, (State, Action)>, mut s: State) -> Vec<Action> {
    let mut actions = Vec::new();
    while let Some((prev, a)) = came.get(&s) {
        actions.push(a.clone());
        s = *prev;
    }
    actions.reverse();
    actions
}

/// A* from (`start`, `start_rot`) until `goal.accept` holds.
///
/// Open-list ties break on lowest f, then lowest h, then the state itself.
/// Rotations are only searched when the footprint is not rotation-symmetric.
pub fn a_star(
    map: &dyn Passability,
    start: Coord,
    start_rot: u8,
    goal: &GoalSpec<'_>,
    fp: &Footprint,
    max_iter: u32,
) -> PathResult {
    let rotations = !fp.is_rotation_symmetric();
    let mut open = BinaryHeap::new();
    let mut best_g: HashMap<State, u32> = HashMap::new();
    let mut came: HashMap<State, (State, Action)> = HashMap::new();
    let mut closed: HashSet<State> = HashSet::new();
    let start_state = (start, start_rot % 4);
    let h0 = heuristic(goal.cells, start);
    open.push(Reverse((h0, h0, start_state)));
    best_g.insert(start_state, 0);
    let mut iterations = 0u32;

    while let Some(Reverse((_, _, state))) = open.pop() {
        if !closed.insert(state) {
            continue;
        }
        let g = best_g[&state];
        if (goal.accept)(state.0, state.1) {
            return PathResult {
                outcome: Ok(rebuild(&came, state)),
                iterations,
                cost: g,
                end: Some(state),
            };
        }
        if iterations >= max_iter {
            return PathResult {
                outcome: Err(NoPath::CapExceeded),
                iterations,
                cost: 0,
                end: None,
            };
        }
        iterations += 1;
        for (next, action, step_cost) in successors(map, fp, state, rotations) {
            if closed.contains(&next) {
                continue;
            }
            let ng = g + step_cost;
            if best_g.get(&next).is_none_or(|&old| ng < old) {
                best_g.insert(next, ng);
                came.insert(next, (state, action));
                let h = heuristic(goal.cells, next.0);
                open.push(Reverse((ng + h, h, next)));
            }
        }
    }
    PathResult {
        outcome: Err(NoPath::Exhausted),
        iterations,
        cost: 0,
        end: None,
    }
}

/// Shortest action sequence (moves and rotations, unit cost) that leaves
/// every footprint cell outside `danger`.
pub fn escape_path(
    map: &dyn Passability,
    start: Coord,
    fp: &Footprint,
    danger: &BTreeSet<Coord>,
    max_iter: u32,
) -> PathResult {
    let safe = |s: State| fp.cells_at(s.0, s.1).iter().all(|c| !danger.contains(c));
    let rotations = !fp.is_rotation_symmetric();
    let start_state = (start, 0u8);
    let mut queue = VecDeque::from([start_state]);
    let mut came: HashMap<State, (State, Action)> = HashMap::new();
    let mut seen: HashSet<State> = HashSet::from([start_state]);
    let mut iterations = 0;
    while let Some(state) = queue.pop_front() {
        if safe(state) {
            let actions = rebuild(&came, state);
            let cost = actions.len() as u32;
            return PathResult {
                outcome: Ok(actions),
                iterations,
                cost,
                end: Some(state),
            };
        }
        if iterations >= max_iter {
            return PathResult {
                outcome: Err(NoPath::CapExceeded),
                iterations,
                cost: 0,
                end: None,
            };
        }
        iterations += 1;
        for (next, action, _) in successors(map, fp, state, rotations) {
            if seen.insert(next) {
                came.insert(next, (state, action));
                queue.push_back(next);
            }
        }
    }
    PathResult {
        outcome: Err(NoPath::Exhausted),
        iterations,
        cost: 0,
        end: None,
    }
}

/// Replays move/rotate actions, checking every intermediate placement.
/// Returns the final state, or `None` at the first illegal placement.
pub fn replay(map: &dyn Passability, start: Coord, rot: u8, fp: &Footprint, actions: &[Action]) -> Option<(Coord, u8)> {
    let (mut pos, mut rot) = (start, rot % 4);
    for a in actions {
        match a {
            Action::Move { dir } => pos += dir.delta(),
            Action::Rotate { turn } => rot = (rot + turn.quarters()) % 4,
            _ => return None,
        }
        placement_cost(map, fp, pos, rot)?;
    }
    Some((pos, rot))
}
