use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::{Coord, Dir, Turn};

pub type AgentId = u32;
pub type BlockId = u32;
pub type TeamId = u8;
pub type BlockType = u8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terrain {
    Free,
    Obstacle,
    Dispenser(BlockType),
    Goal,
}

/// Anything that occupies a cell and can take part in an attachment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entity {
    Agent(AgentId),
    Block(BlockId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub pos: Coord,
    pub kind: BlockType,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Charge {
    pub target: Coord,
    pub steps: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentEntity {
    pub id: AgentId,
    pub team: TeamId,
    pub pos: Coord,
    pub energy: u32,
    pub charge: Option<Charge>,
    pub last_action: Action,
    pub last_result: ActionResult,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Team {
    pub name: String,
    pub score: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub offset: Coord,
    pub kind: BlockType,
}

/// Required block layout relative to the submitting agent. Entries are kept
/// sorted by offset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskShape {
    entries: Vec<ShapeEntry>,
}

impl TaskShape {
    pub fn new(mut entries: Vec<ShapeEntry>) -> Self {
        entries.sort();
        TaskShape { entries }
    }

    pub fn entries(&self) -> &[ShapeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn kind_at(&self, offset: Coord) -> Option<BlockType> {
        self.entries.iter().find(|e| e.offset == offset).map(|e| e.kind)
    }

    pub fn contains(&self, offset: Coord) -> bool {
        self.kind_at(offset).is_some()
    }

    /// Offsets are nonzero, distinct, and 4-connected together with the origin.
    pub fn is_well_formed(&self) -> bool {
        let mut cells: Vec<Coord> = self.entries.iter().map(|e| e.offset).collect();
        if cells.contains(&Coord::ORIGIN) {
            return false;
        }
        let n = cells.len();
        cells.sort();
        cells.dedup();
        if cells.len() != n {
            return false;
        }
        cells.push(Coord::ORIGIN);
        crate::geom::is_connected(&cells)
    }

    /// This shape turned by `quarters` clockwise quarter turns about the origin.
    pub fn rotated(&self, quarters: u8) -> TaskShape {
        TaskShape::new(
            self.entries
                .iter()
                .map(|e| ShapeEntry {
                    offset: e.offset.rotated(quarters),
                    kind: e.kind,
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub reward: u64,
    pub deadline: u32,
    pub shape: TaskShape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearEvent {
    pub center: Coord,
    pub radius: u32,
    pub detonation_step: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Move {
        dir: Dir,
    },
    Rotate {
        turn: Turn,
    },
    Attach {
        dir: Dir,
    },
    Detach {
        dir: Dir,
    },
    /// `own` names a block attached to the issuer, `partner_block` a block
    /// attached to the partner; both relative to their holder's cell.
    Connect {
        partner: AgentId,
        own: Coord,
        partner_block: Coord,
    },
    Request {
        dir: Dir,
    },
    Clear {
        target: Coord,
    },
    Submit {
        task: String,
    },
    Skip,
}

impl Action {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Action::Move { .. } => "move",
            Action::Rotate { .. } => "rotate",
            Action::Attach { .. } => "attach",
            Action::Detach { .. } => "detach",
            Action::Connect { .. } => "connect",
            Action::Request { .. } => "request",
            Action::Clear { .. } => "clear",
            Action::Submit { .. } => "submit",
            Action::Skip => "skip",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    PathBlocked,
    MultiAgentRotation,
    NoBlock,
    AttachedElsewhere,
    NotAttached,
    NoDispenser,
    Occupied,
    PartnerMismatch,
    NotOnGoal,
    WrongStructure,
    DeadlinePassed,
    UnknownTask,
    OtherAgentAttached,
    InsufficientEnergy,
    OutOfRange,
    OutOfBounds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionResult {
    Success,
    /// A clear action accumulated charge but has not fired yet.
    Charging,
    Failure(FailReason),
}

impl ActionResult {
    pub fn is_success(self) -> bool {
        self == ActionResult::Success
    }

    pub fn label(self) -> &'static str {
        match self {
            ActionResult::Success => "success",
            ActionResult::Charging => "charging",
            ActionResult::Failure(_) => "failure",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThingKind {
    FriendEntity,
    FoeEntity,
    Block(BlockType),
    Dispenser(BlockType),
    Obstacle,
    Goal,
    ClearMarker(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Thing {
    pub pos: Coord,
    pub kind: ThingKind,
}

/// One agent's view of the world after a step. Positions are relative to
/// the agent and other entities carry no identity beyond friend or foe.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Percept {
    pub step: u32,
    pub energy: u32,
    pub last_action: Action,
    pub last_result: ActionResult,
    pub vision_radius: u32,
    pub things: Vec<Thing>,
    /// Cells of everything attached (transitively) to the agent.
    pub attached: Vec<Coord>,
    pub tasks: Vec<Task>,
    pub team_score: u64,
}

impl Percept {
    pub fn friends(&self) -> impl Iterator<Item = Coord> + '_ {
        self.things
            .iter()
            .filter(|t| t.kind == ThingKind::FriendEntity)
            .map(|t| t.pos)
    }

    /// Attached blocks with their types, as (offset, type).
    pub fn attached_blocks(&self) -> Vec<(Coord, BlockType)> {
        self.attached
            .iter()
            .filter_map(|&c| {
                self.things.iter().find_map(|t| match t.kind {
                    ThingKind::Block(k) if t.pos == c => Some((c, k)),
                    _ => None,
                })
            })
            .collect()
    }

    /// Attached cells holding a friendly agent.
    pub fn attached_agents(&self) -> Vec<Coord> {
        self.attached
            .iter()
            .copied()
            .filter(|&c| {
                self.things
                    .iter()
                    .any(|t| t.pos == c && t.kind == ThingKind::FriendEntity)
            })
            .collect()
    }
}

/// Ground-truth occurrences emitted by a world step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MatchEvent {
    Action {
        step: u32,
        agent: AgentId,
        action: Action,
        result: ActionResult,
    },
    TaskSpawned {
        step: u32,
        task: Task,
    },
    TaskExpired {
        step: u32,
        name: String,
    },
    TaskCompleted {
        step: u32,
        team: TeamId,
        agent: AgentId,
        task: String,
        reward: u64,
    },
    ScoreChanged {
        step: u32,
        team: TeamId,
        score: u64,
    },
    ClearScheduled {
        step: u32,
        center: Coord,
        radius: u32,
        detonation_step: u32,
    },
    ClearDetonated {
        step: u32,
        center: Coord,
        radius: u32,
        blocks_destroyed: u32,
    },
}
