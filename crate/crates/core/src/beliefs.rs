//! Shared belief map of a synchronized group.
//!
//! Every group keeps its own coordinate frame whose origin is the starting
//! cell of the founding agent. Percepts are written at the observer's frame
//! position; merging two groups translates one map into the other's frame.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::Coord;
use crate::world::{Action, ActionResult, AgentId, BlockType, Percept, ThingKind};

pub type GroupId = u32;

/// Steps after which a sighting of a moving thing no longer blocks planning.
pub const DEFAULT_STALE_TTL: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnownTerrain {
    Free,
    Obstacle,
    Dispenser(BlockType),
    Goal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupant {
    Block(BlockType),
    Friend,
    Foe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellInfo {
    pub terrain: KnownTerrain,
    pub occupant: Option<Occupant>,
    pub last_seen: u32,
}

/// Collapsed single-value view of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellState {
    Unknown,
    Free,
    Obstacle,
    Dispenser(BlockType),
    Goal,
    BlockSeen(BlockType),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupMap {
    pub group_id: GroupId,
    members: BTreeMap<AgentId, Coord>,
    cells: BTreeMap<Coord, CellInfo>,
    /// Cell -> detonation step of a pending clear event.
    danger: BTreeMap<Coord, u32>,
    /// Obstacles a clear could not remove (outside the grid).
    permanent: BTreeSet<Coord>,
    now: u32,
    pub stale_ttl: u32,
}

impl GroupMap {
    /// A fresh group holding only its founder at the frame origin.
    pub fn new(group_id: GroupId, founder: AgentId) -> Self {
        let mut members = BTreeMap::new();
        members.insert(founder, Coord::ORIGIN);
        GroupMap {
            group_id,
            members,
            cells: BTreeMap::new(),
            danger: BTreeMap::new(),
            permanent: BTreeSet::new(),
            now: 0,
            stale_ttl: DEFAULT_STALE_TTL,
        }
    }

    pub fn now(&self) -> u32 {
        self.now
    }

    pub fn members(&self) -> &BTreeMap<AgentId, Coord> {
        &self.members
    }

    pub fn member_pos(&self, agent: AgentId) -> Option<Coord> {
        self.members.get(&agent).copied()
    }

    pub fn set_member_pos(&mut self, agent: AgentId, pos: Coord) {
        self.members.insert(agent, pos);
    }

    pub fn cell(&self, c: Coord) -> Option<&CellInfo> {
        self.cells.get(&c)
    }

    pub fn known_cells(&self) -> impl Iterator<Item = (&Coord, &CellInfo)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn state(&self, c: Coord) -> CellState {
        match self.cells.get(&c) {
            None => CellState::Unknown,
            Some(info) => match (info.terrain, info.occupant) {
                (KnownTerrain::Obstacle, _) => CellState::Obstacle,
                (_, Some(Occupant::Block(k))) => CellState::BlockSeen(k),
                (KnownTerrain::Dispenser(k), _) => CellState::Dispenser(k),
                (KnownTerrain::Goal, _) => CellState::Goal,
                (KnownTerrain::Free, _) => CellState::Free,
            },
        }
    }

    /// Writes a cell directly; for tests and scripted beliefs.
    pub fn set_cell(&mut self, c: Coord, terrain: KnownTerrain, occupant: Option<Occupant>, last_seen: u32) {
        self.cells.insert(
            c,
            CellInfo {
                terrain,
                occupant,
                last_seen,
            },
        );
        self.now = self.now.max(last_seen);
    }

    pub fn mark_permanent(&mut self, c: Coord) {
        self.permanent.insert(c);
    }

    pub fn is_permanent(&self, c: Coord) -> bool {
        self.permanent.contains(&c)
    }

    /// True when a moving thing was seen at `c` recently enough to matter.
    pub fn fresh_occupant(&self, c: Coord) -> Option<Occupant> {
        self.cells.get(&c).and_then(|info| self.fresh(info))
    }

    /// The occupant of a cell record, if it is recent enough to matter.
    pub fn fresh(&self, info: &CellInfo) -> Option<Occupant> {
        info.occupant
            .filter(|_| self.now.saturating_sub(info.last_seen) <= self.stale_ttl)
    }

    /// Cells under a pending clear event, with their detonation step.
    pub fn danger(&self) -> &BTreeMap<Coord, u32> {
        &self.danger
    }

    pub fn add_danger(&mut self, c: Coord, detonation: u32) {
        self.danger.insert(c, detonation);
    }

    /// Writes one agent's percept into the map at the agent's frame position.
    /// Cells inside the vision diamond that the percept does not mention
    /// become free and unoccupied.
    pub fn integrate_percept(&mut self, agent: AgentId, percept: &Percept) {
        let Some(origin) = self.member_pos(agent) else {
            return;
        };
        let step = percept.step;
        self.now = self.now.max(step);
        let r = percept.vision_radius as i32;
        for dy in -r..=r {
            for dx in -r..=r {
                let rel = Coord::new(dx, dy);
                if rel.manhattan() > percept.vision_radius {
                    continue;
                }
                let c = origin + rel;
                self.cells.insert(
                    c,
                    CellInfo {
                        terrain: KnownTerrain::Free,
                        occupant: None,
                        last_seen: step,
                    },
                );
                self.danger.remove(&c);
            }
        }
        for t in &percept.things {
            let c = origin + t.pos;
            let info = self.cells.get_mut(&c).expect("thing inside vision");
            match t.kind {
                ThingKind::Obstacle => info.terrain = KnownTerrain::Obstacle,
                ThingKind::Dispenser(k) => info.terrain = KnownTerrain::Dispenser(k),
                ThingKind::Goal => info.terrain = KnownTerrain::Goal,
                ThingKind::Block(k) => info.occupant = Some(Occupant::Block(k)),
                ThingKind::FriendEntity => info.occupant = Some(Occupant::Friend),
                ThingKind::FoeEntity => info.occupant = Some(Occupant::Foe),
                ThingKind::ClearMarker(n) => {
                    self.danger.insert(c, step + n);
                }
            }
        }
        let now = self.now;
        self.danger.retain(|_, d| *d >= now);
    }

    /// Updates the agent's frame position from its own action feedback.
    pub fn track_action(&mut self, agent: AgentId, action: &Action, result: ActionResult) {
        if let (Action::Move { dir }, ActionResult::Success) = (action, result) {
            self.translate_member(agent, dir.delta());
        }
    }

    /// Shifts a member that was moved without its own action (dragged).
    pub fn translate_member(&mut self, agent: AgentId, delta: Coord) {
        if let Some(p) = self.members.get_mut(&agent) {
            *p += delta;
        }
    }

    /// Known goal cells in frame coordinates.
    pub fn goals(&self) -> Vec<Coord> {
        self.cells
            .iter()
            .filter(|(_, i)| i.terrain == KnownTerrain::Goal)
            .map(|(c, _)| *c)
            .collect()
    }

    /// Known dispensers as (cell, type).
    pub fn dispensers(&self) -> Vec<(Coord, BlockType)> {
        self.cells
            .iter()
            .filter_map(|(c, i)| match i.terrain {
                KnownTerrain::Dispenser(k) => Some((*c, k)),
                _ => None,
            })
            .collect()
    }

    pub fn obstacles(&self) -> Vec<Coord> {
        self.cells
            .iter()
            .filter(|(c, i)| i.terrain == KnownTerrain::Obstacle && !self.permanent.contains(c))
            .map(|(c, _)| *c)
            .collect()
    }

    /// Recently seen blocks as (cell, type).
    pub fn blocks_seen(&self) -> Vec<(Coord, BlockType)> {
        self.cells
            .keys()
            .filter_map(|c| match self.fresh_occupant(*c) {
                Some(Occupant::Block(k)) => Some((*c, k)),
                _ => None,
            })
            .collect()
    }

    fn is_frontier(&self, c: Coord, info: &CellInfo) -> bool {
        info.terrain != KnownTerrain::Obstacle && c.neighbors().iter().any(|n| !self.cells.contains_key(n))
    }

    /// Exploration targets for `k` agents.
    ///
    /// Frontier cells (known, passable, next to unknown) are split into `k`
    /// equal angular sectors around the members' centroid; each non-empty
    /// sector contributes the frontier cell nearest to its centroid. Without
    /// any frontier the `k` longest-unseen passable cells are returned,
    /// skipping cells seen on the current step.
    pub fn frontier_targets(&self, k: usize) -> Vec<Coord> {
        if k == 0 {
            return Vec::new();
        }
        let frontier: Vec<Coord> = self
            .cells
            .iter()
            .filter(|(c, i)| self.is_frontier(**c, i))
            .map(|(c, _)| *c)
            .collect();
        if frontier.is_empty() {
            let mut stale: Vec<(u32, Coord)> = self
                .cells
                .iter()
                .filter(|(_, i)| i.terrain != KnownTerrain::Obstacle && i.last_seen < self.now)
                .map(|(c, i)| (i.last_seen, *c))
                .collect();
            stale.sort();
            return stale.into_iter().take(k).map(|(_, c)| c).collect();
        }
        let center = self.centroid();
        let mut sectors: Vec<Vec<Coord>> = (0..k).map(|_| Vec::new()).collect();
        for &c in &frontier {
            let (dx, dy) = ((c.x as f64) - center.0, (c.y as f64) - center.1);
            let angle = libm::atan2(dy, dx) + core::f64::consts::PI;
            let idx = ((angle / (2.0 * core::f64::consts::PI)) * k as f64) as usize;
            sectors[idx.min(k - 1)].push(c);
        }
        sectors
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(|s| {
                let n = s.len() as f64;
                let mx = s.iter().map(|c| c.x as f64).sum::<f64>() / n;
                let my = s.iter().map(|c| c.y as f64).sum::<f64>() / n;
                *s.iter()
                    .min_by(|a, b| {
                        let da = (a.x as f64 - mx).abs() + (a.y as f64 - my).abs();
                        let db = (b.x as f64 - mx).abs() + (b.y as f64 - my).abs();
                        da.partial_cmp(&db).unwrap().then(a.cmp(b))
                    })
                    .unwrap()
            })
            .collect()
    }

    fn centroid(&self) -> (f64, f64) {
        let pts: Vec<Coord> = if self.members.is_empty() {
            self.cells.keys().copied().collect()
        } else {
            self.members.values().copied().collect()
        };
        if pts.is_empty() {
            return (0.0, 0.0);
        }
        let n = pts.len() as f64;
        (
            pts.iter().map(|c| c.x as f64).sum::<f64>() / n,
            pts.iter().map(|c| c.y as f64).sum::<f64>() / n,
        )
    }

    /// Text dump for logs: `?` unknown, `.` free, `#` obstacle,
    /// `d` dispenser, `g` goal, `b` block, `@` group member.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut all: Vec<Coord> = self.cells.keys().copied().collect();
        all.extend(self.members.values().copied());
        let (Some(minx), Some(maxx)) = (all.iter().map(|c| c.x).min(), all.iter().map(|c| c.x).max()) else {
            return s;
        };
        let miny = all.iter().map(|c| c.y).min().unwrap();
        let maxy = all.iter().map(|c| c.y).max().unwrap();
        let member_cells: BTreeSet<Coord> = self.members.values().copied().collect();
        for y in miny..=maxy {
            for x in minx..=maxx {
                let c = Coord::new(x, y);
                let ch = if member_cells.contains(&c) {
                    '@'
                } else {
                    match self.state(c) {
                        CellState::Unknown => '?',
                        CellState::Free => '.',
                        CellState::Obstacle => '#',
                        CellState::Dispenser(_) => 'd',
                        CellState::Goal => 'g',
                        CellState::BlockSeen(_) => 'b',
                    }
                };
                s.push(ch);
            }
            s.push('\n');
        }
        s
    }
}

/// Merges `b` into `a`, translating every `b` coordinate by `shift` (which
/// maps b's frame into a's). Per cell the newer observation wins; ties keep
/// `a`. The result keeps `a`'s group id.
pub fn merge_maps(mut a: GroupMap, b: GroupMap, shift: Coord) -> GroupMap {
    for (c, info) in b.cells {
        let t = c + shift;
        match a.cells.get(&t) {
            Some(existing) if existing.last_seen >= info.last_seen => {}
            _ => {
                a.cells.insert(t, info);
            }
        }
    }
    for (c, d) in b.danger {
        let t = c + shift;
        let e = a.danger.entry(t).or_insert(d);
        *e = (*e).max(d);
    }
    for c in b.permanent {
        a.permanent.insert(c + shift);
    }
    for (agent, p) in b.members {
        a.members.insert(agent, p + shift);
    }
    a.now = a.now.max(b.now);
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Dir;
    use crate::world::{Terrain, Thing, WorldConfig, WorldState};
    use alloc::collections::BTreeMap;
    use alloc::vec;

    fn percept_with(things: Vec<Thing>, step: u32) -> Percept {
        Percept {
            step,
            energy: 300,
            last_action: Action::Skip,
            last_result: ActionResult::Success,
            vision_radius: 5,
            things,
            attached: vec![],
            tasks: vec![],
            team_score: 0,
        }
    }

    #[test]
    fn dispenser_written_at_frame_offset() {
        let mut m = GroupMap::new(1, 1);
        m.set_member_pos(1, Coord::new(4, 4));
        let p = percept_with(
            vec![Thing {
                pos: Coord::new(0, 2),
                kind: ThingKind::Dispenser(0),
            }],
            3,
        );
        m.integrate_percept(1, &p);
        let info = m.cell(Coord::new(4, 6)).unwrap();
        assert_eq!(info.terrain, KnownTerrain::Dispenser(0));
        assert_eq!(info.last_seen, 3);
        assert_eq!(m.state(Coord::new(4, 10)), CellState::Unknown);
        assert_eq!(m.state(Coord::new(4, 9)), CellState::Free);
    }

    #[test]
    fn cleared_obstacle_becomes_free_on_reobservation() {
        let mut c = WorldConfig {
            width: 12,
            height: 12,
            clear_event_rate: 0.0,
            ..WorldConfig::default()
        };
        c.tasks.max_active = 0;
        let mut w = WorldState::empty(c, 1);
        let t = w.add_team("A");
        let a = w.add_agent(t, Coord::new(5, 5));
        w.set_terrain(Coord::new(6, 5), Terrain::Obstacle);
        let mut m = GroupMap::new(a, a);
        m.integrate_percept(a, &w.percept(a));
        assert_eq!(m.state(Coord::new(1, 0)), CellState::Obstacle);
        let clear: BTreeMap<_, _> = [(
            a,
            Action::Clear {
                target: Coord::new(1, 0),
            },
        )]
        .into();
        let mut last = None;
        for _ in 0..3 {
            last = Some(w.step(&clear));
        }
        m.integrate_percept(a, &last.unwrap().percepts[&a]);
        assert_eq!(m.state(Coord::new(1, 0)), CellState::Free);
    }

    #[test]
    fn integrate_is_idempotent() {
        let mut m = GroupMap::new(1, 1);
        let p = percept_with(
            vec![
                Thing {
                    pos: Coord::new(1, 1),
                    kind: ThingKind::Obstacle,
                },
                Thing {
                    pos: Coord::new(0, 3),
                    kind: ThingKind::ClearMarker(2),
                },
            ],
            5,
        );
        m.integrate_percept(1, &p);
        let once = m.clone();
        m.integrate_percept(1, &p);
        assert_eq!(m, once);
    }

    #[test]
    fn own_action_tracking() {
        let mut m = GroupMap::new(1, 1);
        m.set_member_pos(1, Coord::new(4, 4));
        m.track_action(1, &Action::Move { dir: Dir::E }, ActionResult::Success);
        assert_eq!(m.member_pos(1), Some(Coord::new(5, 4)));
        m.track_action(
            1,
            &Action::Move { dir: Dir::E },
            ActionResult::Failure(crate::world::FailReason::PathBlocked),
        );
        assert_eq!(m.member_pos(1), Some(Coord::new(5, 4)));
    }

    #[test]
    fn merge_disjoint_and_newest_wins() {
        let mut a = GroupMap::new(1, 1);
        let mut b = GroupMap::new(2, 2);
        a.set_cell(Coord::new(0, 0), KnownTerrain::Free, None, 10);
        b.set_cell(Coord::new(5, 5), KnownTerrain::Goal, None, 3);
        let merged = merge_maps(a.clone(), b.clone(), Coord::new(1, 1));
        assert_eq!(merged.len(), a.len() + b.len());
        assert_eq!(merged.group_id, 1);
        assert_eq!(merged.member_pos(2), Some(Coord::new(1, 1)));

        let mut b2 = GroupMap::new(2, 2);
        b2.set_cell(Coord::new(0, 0), KnownTerrain::Obstacle, None, 20);
        let merged = merge_maps(a, b2, Coord::ORIGIN);
        assert_eq!(merged.state(Coord::new(0, 0)), CellState::Obstacle);
    }

    #[test]
    fn merge_identity() {
        let mut a = GroupMap::new(1, 1);
        a.set_cell(Coord::new(2, 0), KnownTerrain::Free, Some(Occupant::Foe), 4);
        a.set_cell(Coord::new(3, 0), KnownTerrain::Obstacle, None, 2);
        let merged = merge_maps(a.clone(), a.clone(), Coord::ORIGIN);
        assert_eq!(
            merged.known_cells().collect::<Vec<_>>(),
            a.known_cells().collect::<Vec<_>>()
        );
    }

    fn half_explored() -> GroupMap {
        let mut m = GroupMap::new(1, 1);
        for y in -5..=5 {
            for x in -5..=0 {
                m.set_cell(Coord::new(x, y), KnownTerrain::Free, None, 1);
            }
        }
        m.set_member_pos(1, Coord::new(-2, 0));
        m
    }

    #[test]
    fn frontier_two_sectors() {
        let m = half_explored();
        let t = m.frontier_targets(2);
        assert_eq!(t.len(), 2);
        assert_ne!(t[0], t[1]);
        for c in &t {
            assert!(c.neighbors().iter().any(|n| m.state(*n) == CellState::Unknown));
        }
    }

    #[test]
    fn frontier_falls_back_to_oldest_when_enclosed() {
        let mut m = GroupMap::new(1, 1);
        for y in -2i32..=2 {
            for x in -2i32..=2 {
                let border = x.abs() == 2 || y.abs() == 2;
                let t = if border {
                    KnownTerrain::Obstacle
                } else {
                    KnownTerrain::Free
                };
                m.set_cell(Coord::new(x, y), t, None, 5);
            }
        }
        m.set_cell(Coord::new(1, 1), KnownTerrain::Free, None, 1);
        m.set_cell(Coord::new(-1, 1), KnownTerrain::Free, None, 2);
        assert_eq!(m.frontier_targets(2), vec![Coord::new(1, 1), Coord::new(-1, 1)]);
    }

    #[test]
    fn fresh_single_cell_map() {
        let mut m = GroupMap::new(1, 1);
        for n in Coord::ORIGIN.neighbors() {
            m.set_cell(n, KnownTerrain::Obstacle, None, 7);
        }
        m.set_cell(Coord::ORIGIN, KnownTerrain::Free, None, 7);
        assert!(m.frontier_targets(1).is_empty());
        m.set_cell(Coord::ORIGIN, KnownTerrain::Free, None, 3);
        assert_eq!(m.frontier_targets(1), vec![Coord::ORIGIN]);
    }

    #[test]
    fn render_marks() {
        let mut m = GroupMap::new(1, 1);
        m.set_cell(Coord::new(1, 0), KnownTerrain::Obstacle, None, 1);
        m.set_cell(Coord::new(2, 0), KnownTerrain::Goal, None, 1);
        m.set_cell(Coord::new(3, 0), KnownTerrain::Dispenser(0), None, 1);
        m.set_cell(Coord::new(5, 0), KnownTerrain::Free, None, 1);
        assert_eq!(m.render(), "@#gd?.\n");
    }
}
