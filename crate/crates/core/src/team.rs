//! What every team engine shares: per-team knowledge (group maps kept in
//! sync with the agents' own actions), the engine interface used by the
//! runner, and a random baseline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beliefs::{GroupId, GroupMap, KnownTerrain};
use crate::budget::Budget;
use crate::geom::{Coord, Dir, Turn};
use crate::pathfind::{a_star, escape_path, Footprint, GoalSpec, Passability};
use crate::reservation::Verdict;
use crate::rng::SimRng;
use crate::sync::{MergeInfo, SyncRegistry};
use crate::world::{Action, ActionResult, AgentId, BlockType, FailReason, Percept};

/// Trace records an engine emits for the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "trace", rename_all = "snake_case")]
pub enum TraceRecord {
    Merge {
        step: u32,
        #[serde(flatten)]
        info: MergeInfo,
    },
    Reservation {
        step: u32,
        agent: AgentId,
        group: GroupId,
        action: Action,
        #[serde(flatten)]
        verdict: Verdict,
    },
    Plans {
        step: u32,
        agent: AgentId,
        options: Vec<(String, usize)>,
        selected: Option<String>,
    },
    Scenario {
        step: u32,
        agent: AgentId,
        detail: String,
    },
}

/// A team's decision procedure, driven once per step by the runner.
pub trait TeamEngine {
    fn name(&self) -> &'static str;

    /// Chooses one action for each agent whose percept is given.
    fn decide(&mut self, percepts: &BTreeMap<AgentId, Percept>, budget: &mut dyn Budget) -> BTreeMap<AgentId, Action>;

    /// Shared beliefs, for engines that keep them.
    fn knowledge(&self) -> Option<&Knowledge> {
        None
    }

    /// Trace records produced since the last call.
    fn drain_trace(&mut self) -> Vec<TraceRecord> {
        Vec::new()
    }
}

/// One agent's situation in its group frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentView {
    pub id: AgentId,
    pub group: GroupId,
    pub pos: Coord,
    pub energy: u32,
    /// Blocks in the agent's component, relative to the agent.
    pub blocks: Vec<(Coord, BlockType)>,
    /// Other agents attached to the same component.
    pub partners: Vec<AgentId>,
    /// Whether an attached friend could not be identified.
    pub unknown_partner: bool,
    /// Blocks the agent linked itself, relative to it.
    pub links: BTreeSet<Coord>,
    /// Every attached cell (blocks and agents), relative to the agent.
    pub attached: Vec<Coord>,
}

impl AgentView {
    /// Every cell of the agent's component, in the group frame.
    pub fn footprint(&self) -> BTreeSet<Coord> {
        let mut s: BTreeSet<Coord> = self.attached.iter().map(|o| self.pos + *o).collect();
        s.insert(self.pos);
        s
    }

    /// Lowest agent id in the component; the key for reservation claims.
    pub fn claimant(&self) -> AgentId {
        self.partners.iter().copied().chain([self.id]).min().unwrap()
    }

    pub fn is_alone(&self) -> bool {
        self.partners.is_empty() && !self.unknown_partner
    }
}

/// Path planning over a group map for members of that group.
pub struct Planner<'a> {
    pub map: &'a GroupMap,
    /// Cells under pending clear events.
    pub hazards: BTreeSet<Coord>,
    /// Cells of every member's component, keyed to its claimant.
    pub occupied: BTreeMap<Coord, AgentId>,
    pub max_iter: u32,
    grid: CostGrid,
}

#[derive(Clone, Copy, Default, PartialEq, Eq)]
enum Terrain {
    #[default]
    Unknown,
    Free,
    Obstacle,
    /// Passable, but something was seen standing there recently.
    Taken,
}

#[derive(Clone, Copy, Default)]
struct GridCell {
    terrain: Terrain,
    hazard: bool,
    claimant: Option<AgentId>,
}

/// Dense copy of everything a search asks about, over the bounding box of
/// known cells, hazards and members. Outside it every cell is unknown.
struct CostGrid {
    min: Coord,
    width: i32,
    height: i32,
    cells: Vec<GridCell>,
}

impl CostGrid {
    fn build(map: &GroupMap, hazards: &BTreeSet<Coord>, occupied: &BTreeMap<Coord, AgentId>) -> Self {
        let all = map
            .known_cells()
            .map(|(c, _)| *c)
            .chain(hazards.iter().copied())
            .chain(occupied.keys().copied());
        let mut bounds: Option<(Coord, Coord)> = None;
        for c in all {
            bounds = Some(match bounds {
                None => (c, c),
                Some((lo, hi)) => (
                    Coord::new(lo.x.min(c.x), lo.y.min(c.y)),
                    Coord::new(hi.x.max(c.x), hi.y.max(c.y)),
                ),
            });
        }
        let Some((min, max)) = bounds else {
            return CostGrid {
                min: Coord::new(0, 0),
                width: 0,
                height: 0,
                cells: Vec::new(),
            };
        };
        let (width, height) = (max.x - min.x + 1, max.y - min.y + 1);
        let mut grid = CostGrid {
            min,
            width,
            height,
            cells: alloc::vec![GridCell::default(); (width * height) as usize],
        };
        for (&c, info) in map.known_cells() {
            let terrain = if info.terrain == KnownTerrain::Obstacle {
                Terrain::Obstacle
            } else if map.fresh(info).is_some() {
                Terrain::Taken
            } else {
                Terrain::Free
            };
            grid.cell_mut(c).terrain = terrain;
        }
        for &c in hazards {
            grid.cell_mut(c).hazard = true;
        }
        for (&c, &who) in occupied {
            grid.cell_mut(c).claimant = Some(who);
        }
        grid
    }

    fn index(&self, c: Coord) -> Option<usize> {
        let (x, y) = (c.x - self.min.x, c.y - self.min.y);
        (x >= 0 && y >= 0 && x < self.width && y < self.height).then(|| (y * self.width + x) as usize)
    }

    fn cell_mut(&mut self, c: Coord) -> &mut GridCell {
        let i = self.index(c).unwrap();
        &mut self.cells[i]
    }
}

/// One component's view of a [`CostGrid`]: its own cells never block,
/// other members always do, hazards only when avoided.
struct PlanView<'g> {
    grid: &'g CostGrid,
    own: &'g BTreeSet<Coord>,
    me: AgentId,
    avoid_hazards: bool,
}

impl Passability for PlanView<'_> {
    fn cost(&self, c: Coord) -> Option<u32> {
        let Some(i) = self.grid.index(c) else {
            return Some(2);
        };
        let cell = self.grid.cells[i];
        let mine = self.own.contains(&c);
        if !mine && (cell.claimant.is_some_and(|w| w != self.me) || (self.avoid_hazards && cell.hazard)) {
            return None;
        }
        match cell.terrain {
            Terrain::Unknown => Some(2),
            Terrain::Obstacle => None,
            Terrain::Taken if !mine => None,
            _ => Some(1),
        }
    }
}

impl<'a> Planner<'a> {
    pub fn new<'v>(map: &'a GroupMap, members: impl IntoIterator<Item = &'v AgentView>, max_iter: u32) -> Self {
        let mut occupied = BTreeMap::new();
        for v in members {
            for c in v.footprint() {
                occupied.insert(c, v.claimant());
            }
        }
        let hazards = map.danger().keys().copied().collect();
        let grid = CostGrid::build(map, &hazards, &occupied);
        Planner {
            map,
            hazards,
            occupied,
            max_iter,
            grid,
        }
    }

    /// Shortest move/rotate sequence for `view`'s whole component until
    /// `accept` holds. Other members and, unless `through_hazards`, cells
    /// under pending clear events are avoided. Work is charged to `budget`.
    pub fn plan(
        &self,
        view: &AgentView,
        goals: &[Coord],
        accept: &dyn Fn(Coord, u8) -> bool,
        through_hazards: bool,
        budget: &mut dyn Budget,
    ) -> Option<Vec<Action>> {
        let own = view.footprint();
        let grid = PlanView {
            grid: &self.grid,
            own: &own,
            me: view.claimant(),
            avoid_hazards: !through_hazards,
        };
        let fp = Footprint::with_blocks(view.attached.iter().copied());
        let goal = GoalSpec { cells: goals, accept };
        let r = a_star(&grid, view.pos, 0, &goal, &fp, self.max_iter);
        budget.charge(r.iterations as u64 + 1);
        r.outcome.ok()
    }

    /// Path to `target` itself.
    pub fn plan_to(&self, view: &AgentView, target: Coord, budget: &mut dyn Budget) -> Option<Vec<Action>> {
        self.plan(view, &[target], &|c, _| c == target, false, budget)
    }

    /// Path to any cell next to `target`.
    pub fn plan_next_to(&self, view: &AgentView, target: Coord, budget: &mut dyn Budget) -> Option<Vec<Action>> {
        let cells = target.neighbors();
        self.plan(view, &cells, &|c, _| c.is_adjacent(target), false, budget)
    }

    /// Way out of the pending clear areas.
    pub fn escape(&self, view: &AgentView) -> Option<Vec<Action>> {
        let own = view.footprint();
        let grid = PlanView {
            grid: &self.grid,
            own: &own,
            me: view.claimant(),
            avoid_hazards: false,
        };
        let fp = Footprint::with_blocks(view.attached.iter().copied());
        escape_path(&grid, view.pos, &fp, &self.hazards, self.max_iter)
            .outcome
            .ok()
    }
}

/// Group maps of one team plus per-agent bookkeeping.
#[derive(Clone, Debug)]
pub struct Knowledge {
    pub registry: SyncRegistry,
    step: u32,
    links: BTreeMap<AgentId, BTreeSet<Coord>>,
}

impl Knowledge {
    pub fn new(agents: impl IntoIterator<Item = AgentId>) -> Self {
        Knowledge {
            registry: SyncRegistry::new(agents),
            step: 0,
            links: BTreeMap::new(),
        }
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn map_of(&self, agent: AgentId) -> &GroupMap {
        self.registry.map_of(agent)
    }

    /// Folds in a new round of percepts: positions follow each agent's own
    /// last action, observations are written into the group maps and
    /// mutual sightings merge groups.
    pub fn update(&mut self, percepts: &BTreeMap<AgentId, Percept>) -> Vec<MergeInfo> {
        for (&id, p) in percepts {
            self.step = self.step.max(p.step);
            let map = self.registry.map_of_mut(id);
            map.track_action(id, &p.last_action, p.last_result);
            if let (Action::Clear { target }, ActionResult::Failure(FailReason::OutOfBounds)) =
                (&p.last_action, p.last_result)
            {
                let c = map.member_pos(id).unwrap() + *target;
                map.mark_permanent(c);
            }
            let links = self.links.entry(id).or_default();
            match (&p.last_action, p.last_result) {
                (Action::Attach { dir }, ActionResult::Success) => {
                    links.insert(dir.delta());
                }
                (Action::Detach { dir }, ActionResult::Success) => {
                    links.remove(&dir.delta());
                }
                (Action::Rotate { turn }, ActionResult::Success) => {
                    *links = links.iter().map(|c| c.rotate(*turn)).collect();
                }
                _ => {}
            }
            let attached: BTreeSet<Coord> = p.attached.iter().copied().collect();
            links.retain(|c| attached.contains(c));
        }
        for (&id, p) in percepts {
            self.registry.map_of_mut(id).integrate_percept(id, p);
        }
        self.registry.sync_step(percepts)
    }

    pub fn view(&self, id: AgentId, p: &Percept) -> AgentView {
        let group = self.registry.group_of(id);
        let map = self.registry.group(group);
        let pos = map.member_pos(id).unwrap();
        let mut partners = Vec::new();
        let mut unknown_partner = false;
        for off in p.attached_agents() {
            let cell = pos + off;
            match map.members().iter().find(|(_, &q)| q == cell) {
                Some((&a, _)) => partners.push(a),
                None => unknown_partner = true,
            }
        }
        partners.sort();
        AgentView {
            id,
            group,
            pos,
            energy: p.energy,
            blocks: p.attached_blocks(),
            partners,
            unknown_partner,
            links: self.links.get(&id).cloned().unwrap_or_default(),
            attached: p.attached.clone(),
        }
    }

    /// True when every agent of the team shares one group.
    pub fn fully_synced(&self) -> bool {
        self.registry.group_count() == 1
    }
}

/// Picks uniformly among a handful of plausible actions.
pub struct RandomTeam {
    rng: SimRng,
}

impl RandomTeam {
    pub fn new(seed: u64) -> Self {
        RandomTeam {
            rng: SimRng::seed_from_u64(seed),
        }
    }
}

impl TeamEngine for RandomTeam {
    fn name(&self) -> &'static str {
        "random"
    }

    fn decide(&mut self, percepts: &BTreeMap<AgentId, Percept>, _budget: &mut dyn Budget) -> BTreeMap<AgentId, Action> {
        let mut out = BTreeMap::new();
        for (&id, p) in percepts {
            let dir = Dir::ALL[self.rng.gen_range(0..4)];
            let action = match self.rng.gen_range(0..8) {
                0..=3 => Action::Move { dir },
                4 => Action::Rotate {
                    turn: if self.rng.gen_bool(0.5) { Turn::Cw } else { Turn::Ccw },
                },
                5 => Action::Request { dir },
                6 => Action::Attach { dir },
                _ => match p.tasks.first() {
                    Some(t) => Action::Submit { task: t.name.clone() },
                    None => Action::Skip,
                },
            };
            out.insert(id, action);
        }
        out
    }
}
