//! Ground-truth simulator.
//!
//! [`WorldState::step`] is the only mutator used during a match. Actions are
//! resolved one agent at a time in ascending agent id, so conflicts resolve
//! in favour of the lower id. Invalid actions never abort a step; they
//! become failure results.

mod config;
mod gen;
mod percept;
mod step;
mod types;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

pub use config::{ConfigError, TaskGenConfig, Topology, WorldConfig};
pub use gen::{all_shapes, random_shape};
pub use types::*;

use crate::geom::Coord;
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BlockCounters {
    pub initial: u64,
    pub created: u64,
    pub cleared: u64,
    pub submitted: u64,
}

impl BlockCounters {
    /// Number of blocks the world should currently hold.
    pub fn expected_live(&self) -> u64 {
        self.initial + self.created - self.cleared - self.submitted
    }
}

/// Result of one simulation step.
#[derive(Clone, Debug, Default)]
pub struct StepOutcome {
    pub percepts: BTreeMap<AgentId, Percept>,
    pub events: Vec<MatchEvent>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WorldState {
    pub config: WorldConfig,
    terrain: Vec<Terrain>,
    agents: BTreeMap<AgentId, AgentEntity>,
    blocks: BTreeMap<BlockId, Block>,
    #[serde(skip)]
    occupancy: BTreeMap<Coord, Entity>,
    attachments: BTreeSet<(Entity, Entity)>,
    tasks: BTreeMap<String, Task>,
    expired_tasks: BTreeSet<String>,
    clear_events: Vec<ClearEvent>,
    teams: Vec<Team>,
    step: u32,
    next_agent_id: AgentId,
    next_block_id: BlockId,
    next_task_id: u32,
    counters: BlockCounters,
    rng: SimRng,
}

impl WorldState {
    /// An all-free grid with no entities; used by tests and scripted scenarios.
    pub fn empty(config: WorldConfig, seed: u64) -> Self {
        let cells = (config.width * config.height) as usize;
        WorldState {
            config,
            terrain: vec![Terrain::Free; cells],
            agents: BTreeMap::new(),
            blocks: BTreeMap::new(),
            occupancy: BTreeMap::new(),
            attachments: BTreeSet::new(),
            tasks: BTreeMap::new(),
            expired_tasks: BTreeSet::new(),
            clear_events: Vec::new(),
            teams: Vec::new(),
            step: 0,
            next_agent_id: 1,
            next_block_id: 1,
            next_task_id: 1,
            counters: BlockCounters::default(),
            rng: SimRng::seed_from_u64(seed),
        }
    }

    pub fn width(&self) -> u32 {
        self.config.width
    }

    pub fn height(&self) -> u32 {
        self.config.height
    }

    pub fn step_index(&self) -> u32 {
        self.step
    }

    pub fn in_bounds(&self, c: Coord) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as u32) < self.config.width && (c.y as u32) < self.config.height
    }

    fn index(&self, c: Coord) -> usize {
        c.y as usize * self.config.width as usize + c.x as usize
    }

    /// Terrain at `c`; cells outside the grid read as obstacles.
    pub fn terrain(&self, c: Coord) -> Terrain {
        if self.in_bounds(c) {
            self.terrain[self.index(c)]
        } else {
            Terrain::Obstacle
        }
    }

    pub fn set_terrain(&mut self, c: Coord, t: Terrain) {
        assert!(self.in_bounds(c), "terrain write outside grid at {c}");
        let i = self.index(c);
        self.terrain[i] = t;
    }

    pub fn occupant(&self, c: Coord) -> Option<Entity> {
        self.occupancy.get(&c).copied()
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentEntity> {
        self.agents.get(&id)
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentEntity> {
        self.agents.values()
    }

    pub fn agent_mut(&mut self, id: AgentId) -> Option<&mut AgentEntity> {
        self.agents.get_mut(&id)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.values()
    }

    pub fn block(&self, id: BlockId) -> Option<&Block> {
        self.blocks.get(&id)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn counters(&self) -> BlockCounters {
        self.counters
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.values()
    }

    pub fn task(&self, name: &str) -> Option<&Task> {
        self.tasks.get(name)
    }

    pub fn clear_events(&self) -> &[ClearEvent] {
        &self.clear_events
    }

    pub fn teams(&self) -> &[Team] {
        &self.teams
    }

    pub fn score(&self, team: TeamId) -> u64 {
        self.teams[team as usize].score
    }

    pub fn attachments(&self) -> impl Iterator<Item = &(Entity, Entity)> {
        self.attachments.iter()
    }

    pub fn pos_of(&self, e: Entity) -> Option<Coord> {
        match e {
            Entity::Agent(id) => self.agents.get(&id).map(|a| a.pos),
            Entity::Block(id) => self.blocks.get(&id).map(|b| b.pos),
        }
    }

    pub fn add_team(&mut self, name: impl Into<String>) -> TeamId {
        self.teams.push(Team {
            name: name.into(),
            score: 0,
        });
        (self.teams.len() - 1) as TeamId
    }

    /// Places a new agent with full energy. Panics if the cell is taken or blocked.
    pub fn add_agent(&mut self, team: TeamId, pos: Coord) -> AgentId {
        assert!((team as usize) < self.teams.len(), "unknown team {team}");
        assert!(self.is_placeable(pos), "cannot place agent at {pos}");
        let id = self.next_agent_id;
        self.next_agent_id += 1;
        self.agents.insert(
            id,
            AgentEntity {
                id,
                team,
                pos,
                energy: self.config.max_energy,
                charge: None,
                last_action: Action::Skip,
                last_result: ActionResult::Success,
            },
        );
        self.occupancy.insert(pos, Entity::Agent(id));
        id
    }

    /// Places a loose block that counts toward the initial inventory.
    pub fn add_block(&mut self, pos: Coord, kind: BlockType) -> BlockId {
        assert!(self.is_placeable(pos), "cannot place block at {pos}");
        self.counters.initial += 1;
        self.spawn_block(pos, kind)
    }

    fn spawn_block(&mut self, pos: Coord, kind: BlockType) -> BlockId {
        let id = self.next_block_id;
        self.next_block_id += 1;
        self.blocks.insert(id, Block { id, pos, kind });
        self.occupancy.insert(pos, Entity::Block(id));
        id
    }

    fn is_placeable(&self, pos: Coord) -> bool {
        self.in_bounds(pos) && self.terrain(pos) != Terrain::Obstacle && !self.occupancy.contains_key(&pos)
    }

    /// Joins two 4-adjacent entities. Panics on non-adjacent input.
    pub fn link(&mut self, a: Entity, b: Entity) {
        let pa = self.pos_of(a).expect("unknown entity");
        let pb = self.pos_of(b).expect("unknown entity");
        assert!(pa.is_adjacent(pb), "attachment between non-adjacent cells {pa} {pb}");
        self.attachments.insert(ordered(a, b));
    }

    pub fn add_task(&mut self, task: Task) {
        self.tasks.insert(task.name.clone(), task);
    }

    pub fn add_clear_event(&mut self, event: ClearEvent) {
        self.clear_events.push(event);
    }

    pub fn is_linked(&self, a: Entity, b: Entity) -> bool {
        self.attachments.contains(&ordered(a, b))
    }

    fn neighbors_of(&self, e: Entity) -> impl Iterator<Item = Entity> + '_ {
        self.attachments.iter().filter_map(move |&(a, b)| {
            if a == e {
                Some(b)
            } else if b == e {
                Some(a)
            } else {
                None
            }
        })
    }

    /// The attachment component containing `e` (including `e`).
    pub fn component(&self, e: Entity) -> BTreeSet<Entity> {
        let mut seen = BTreeSet::new();
        seen.insert(e);
        let mut stack = vec![e];
        while let Some(cur) = stack.pop() {
            for n in self.neighbors_of(cur) {
                if seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen
    }

    /// Agents in the component of agent `id`, including itself.
    pub fn component_agents(&self, id: AgentId) -> Vec<AgentId> {
        self.component(Entity::Agent(id))
            .into_iter()
            .filter_map(|e| match e {
                Entity::Agent(a) => Some(a),
                Entity::Block(_) => None,
            })
            .collect()
    }

    /// Blocks carried by agent `id` as (offset from agent, type).
    pub fn carried_blocks(&self, id: AgentId) -> Vec<(Coord, BlockType)> {
        let pos = self.agents[&id].pos;
        self.component(Entity::Agent(id))
            .into_iter()
            .filter_map(|e| match e {
                Entity::Block(b) => {
                    let blk = &self.blocks[&b];
                    Some((blk.pos - pos, blk.kind))
                }
                Entity::Agent(_) => None,
            })
            .collect()
    }

    fn remove_block(&mut self, id: BlockId) {
        if let Some(b) = self.blocks.remove(&id) {
            self.occupancy.remove(&b.pos);
            let e = Entity::Block(id);
            self.attachments.retain(|&(x, y)| x != e && y != e);
        }
    }

    /// Destroys every block attached (transitively) to the agent.
    fn strip_agent(&mut self, id: AgentId) -> u32 {
        let doomed: Vec<BlockId> = self
            .component(Entity::Agent(id))
            .into_iter()
            .filter_map(|e| match e {
                Entity::Block(b) => Some(b),
                Entity::Agent(_) => None,
            })
            .collect();
        for &b in &doomed {
            self.remove_block(b);
        }
        let e = Entity::Agent(id);
        self.attachments.retain(|&(x, y)| x != e && y != e);
        self.counters.cleared += doomed.len() as u64;
        doomed.len() as u32
    }

    /// Rebuilds the occupancy index; needed after deserializing a snapshot.
    pub fn rebuild_occupancy(&mut self) {
        self.occupancy.clear();
        for a in self.agents.values() {
            self.occupancy.insert(a.pos, Entity::Agent(a.id));
        }
        for b in self.blocks.values() {
            self.occupancy.insert(b.pos, Entity::Block(b.id));
        }
    }

    /// Checks the structural invariants: no shared cells, adjacency of every
    /// attachment, energy bounds and block conservation. Returns the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        use alloc::format;
        let mut cells = BTreeSet::new();
        for a in self.agents.values() {
            if !cells.insert(a.pos) {
                return Err(format!("two entities at {}", a.pos));
            }
            if a.energy > self.config.max_energy {
                return Err(format!("agent {} energy {} above max", a.id, a.energy));
            }
        }
        for b in self.blocks.values() {
            if !cells.insert(b.pos) {
                return Err(format!("two entities at {}", b.pos));
            }
            if self.terrain(b.pos) == Terrain::Obstacle {
                return Err(format!("block inside obstacle at {}", b.pos));
            }
        }
        for &(x, y) in &self.attachments {
            let (Some(px), Some(py)) = (self.pos_of(x), self.pos_of(y)) else {
                return Err(format!("dangling attachment {x:?}-{y:?}"));
            };
            if !px.is_adjacent(py) {
                return Err(format!("attachment between non-adjacent {px} {py}"));
            }
        }
        if self.counters.expected_live() != self.blocks.len() as u64 {
            return Err(format!(
                "block conservation broken: expected {} have {}",
                self.counters.expected_live(),
                self.blocks.len()
            ));
        }
        Ok(())
    }
}

fn ordered(a: Entity, b: Entity) -> (Entity, Entity) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
