//! Ground-truth checks computed alongside a match.

use std::collections::{BTreeMap, BTreeSet};

use mapc_core::beliefs::GroupId;
use mapc_core::geom::Coord;
use mapc_core::team::Knowledge;
use mapc_core::world::{Action, AgentId, Entity, WorldState};

/// Cells of the agent's component, in world coordinates.
fn component_cells(world: &WorldState, id: AgentId) -> BTreeSet<Coord> {
    world
        .component(Entity::Agent(id))
        .into_iter()
        .filter_map(|e| world.pos_of(e))
        .collect()
}

/// Every cell the agent's component could occupy or touch after `action`
/// under any outcome. Other entities are ignored since they may move away
/// first, so a move or rotation counts with its full target footprint.
pub fn possible_cells(world: &WorldState, id: AgentId, action: &Action) -> BTreeSet<Coord> {
    let here = component_cells(world, id);
    let pos = world.agent(id).unwrap().pos;
    let mut cells = here.clone();
    match action {
        Action::Move { dir } => cells.extend(here.iter().map(|&c| c + dir.delta())),
        Action::Rotate { turn } => cells.extend(here.iter().map(|&c| pos + (c - pos).rotate(*turn))),
        Action::Attach { dir } | Action::Request { dir } => {
            cells.insert(pos + dir.delta());
        }
        Action::Clear { target } => {
            cells.insert(pos + *target);
        }
        _ => {}
    }
    cells
}

/// Counts overlapping claims between distinct components of one team,
/// split by whether both components belong to the same group.
pub fn friendly_conflicts(
    world: &WorldState,
    actions: &BTreeMap<AgentId, Action>,
    group_of: impl Fn(AgentId) -> Option<GroupId>,
) -> (u32, u32) {
    // one entry per component, keyed by its lowest agent id
    let mut claims: BTreeMap<AgentId, (Option<GroupId>, BTreeSet<Coord>)> = BTreeMap::new();
    for (&id, action) in actions {
        let comp: Vec<AgentId> = world.component_agents(id);
        let key = comp.iter().copied().min().unwrap_or(id);
        let entry = claims.entry(key).or_insert_with(|| (group_of(key), BTreeSet::new()));
        entry.1.extend(possible_cells(world, id, action));
    }
    let list: Vec<&(Option<GroupId>, BTreeSet<Coord>)> = claims.values().collect();
    let (mut same, mut cross) = (0, 0);
    for i in 0..list.len() {
        for j in i + 1..list.len() {
            if !list[i].1.is_disjoint(&list[j].1) {
                if list[i].0.is_some() && list[i].0 == list[j].0 {
                    same += 1;
                } else {
                    cross += 1;
                }
            }
        }
    }
    (same, cross)
}

/// Groups whose members' believed positions are not one common
/// translation away from their true positions.
pub fn sync_violations(world: &WorldState, knowledge: &Knowledge) -> u32 {
    let mut bad = 0;
    for g in knowledge.registry.groups() {
        let offsets: BTreeSet<Coord> = g
            .members()
            .iter()
            .filter_map(|(&a, &p)| world.agent(a).map(|e| e.pos - p))
            .collect();
        if offsets.len() > 1 {
            bad += 1;
        }
    }
    bad
}
