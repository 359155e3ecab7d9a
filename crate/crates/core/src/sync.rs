//! Mutual-sighting synchronization.
//!
//! Agents only see "a friend at offset d". When exactly one agent reports a
//! friend at `d` and exactly one other agent reports a friend at `-d`, those
//! two must be looking at each other, so their relative position is known
//! and their groups can be merged.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::beliefs::{merge_maps, GroupId, GroupMap};
use crate::geom::Coord;
use crate::world::{AgentId, Percept};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SightingReport {
    pub observer: AgentId,
    pub offset: Coord,
}

/// What a single merge did; `shift` maps the absorbed frame into the survivor's.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeInfo {
    pub agents: (AgentId, AgentId),
    pub survivor: GroupId,
    pub absorbed: GroupId,
    pub shift: Coord,
    pub survivor_size: usize,
}

#[derive(Clone, Debug)]
pub struct SyncRegistry {
    groups: BTreeMap<GroupId, GroupMap>,
    agent_group: BTreeMap<AgentId, GroupId>,
    master: Option<GroupId>,
    total_merges: usize,
}

/// Sighting reports for every friendly entity in each percept.
pub fn reports_from(percepts: &BTreeMap<AgentId, Percept>) -> Vec<SightingReport> {
    let mut out: Vec<SightingReport> = percepts
        .iter()
        .flat_map(|(&observer, p)| p.friends().map(move |offset| SightingReport { observer, offset }))
        .collect();
    out.sort();
    out
}

fn unique_observers(reports: &[SightingReport]) -> BTreeMap<Coord, Option<AgentId>> {
    let mut by_offset: BTreeMap<Coord, Option<AgentId>> = BTreeMap::new();
    for r in reports {
        by_offset
            .entry(r.offset)
            .and_modify(|o| {
                if *o != Some(r.observer) {
                    *o = None
                }
            })
            .or_insert(Some(r.observer));
    }
    by_offset
}

/// True when `a` is the only agent reporting a friend at `d` and `b` the
/// only one reporting a friend at `-d`.
pub fn is_unique_pair(reports: &[SightingReport], a: AgentId, b: AgentId, d: Coord) -> bool {
    let u = unique_observers(reports);
    a != b && u.get(&d) == Some(&Some(a)) && u.get(&-d) == Some(&Some(b))
}

/// All uniquely identified pairs, each listed once as (a, b, d) with `a < b`,
/// sorted. `same_group` filters out pairs that are already synchronized.
pub fn find_unique_pairs(
    reports: &[SightingReport],
    same_group: impl Fn(AgentId, AgentId) -> bool,
) -> Vec<(AgentId, AgentId, Coord)> {
    let u = unique_observers(reports);
    let mut pairs = Vec::new();
    for (&d, &who) in &u {
        let (Some(a), Some(Some(b))) = (who, u.get(&-d)) else {
            continue;
        };
        if a < *b && !same_group(a, *b) {
            pairs.push((a, *b, d));
        }
    }
    pairs.sort();
    pairs
}

impl SyncRegistry {
    /// One singleton group per agent, named after it, founder at the origin.
    pub fn new(agents: impl IntoIterator<Item = AgentId>) -> Self {
        let mut groups = BTreeMap::new();
        let mut agent_group = BTreeMap::new();
        for a in agents {
            groups.insert(a, GroupMap::new(a, a));
            agent_group.insert(a, a);
        }
        SyncRegistry {
            groups,
            agent_group,
            master: None,
            total_merges: 0,
        }
    }

    pub fn group_of(&self, agent: AgentId) -> GroupId {
        self.agent_group[&agent]
    }

    pub fn group(&self, id: GroupId) -> &GroupMap {
        &self.groups[&id]
    }

    pub fn group_mut(&mut self, id: GroupId) -> &mut GroupMap {
        self.groups.get_mut(&id).expect("unknown group")
    }

    pub fn map_of(&self, agent: AgentId) -> &GroupMap {
        &self.groups[&self.group_of(agent)]
    }

    pub fn map_of_mut(&mut self, agent: AgentId) -> &mut GroupMap {
        let g = self.group_of(agent);
        self.groups.get_mut(&g).unwrap()
    }

    pub fn groups(&self) -> impl Iterator<Item = &GroupMap> {
        self.groups.values()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn total_merges(&self) -> usize {
        self.total_merges
    }

    pub fn master(&self) -> Option<GroupId> {
        self.master
    }

    /// Designates the mastergroup. Once set it never changes.
    pub fn set_master(&mut self, g: GroupId) -> bool {
        if self.master.is_some() || !self.groups.contains_key(&g) {
            return false;
        }
        self.master = Some(g);
        true
    }

    pub fn same_group(&self, a: AgentId, b: AgentId) -> bool {
        self.agent_group.get(&a) == self.agent_group.get(&b)
    }

    /// Agent `a` sees `b` at offset `d`. Merges `b`'s group into `a`'s, or
    /// the other way round when `b`'s group is the mastergroup.
    pub fn merge_groups(&mut self, a: AgentId, b: AgentId, d: Coord) -> Option<MergeInfo> {
        let (ga, gb) = (self.group_of(a), self.group_of(b));
        if ga == gb {
            return None;
        }
        let pos_a = self.groups[&ga].member_pos(a).unwrap();
        let pos_b = self.groups[&gb].member_pos(b).unwrap();
        // frame_b + shift = frame_a
        let shift = pos_a + d - pos_b;
        let (survivor, absorbed, shift) = if self.master == Some(gb) {
            (gb, ga, -shift)
        } else {
            (ga, gb, shift)
        };
        let keep = self.groups.remove(&survivor).unwrap();
        let gone = self.groups.remove(&absorbed).unwrap();
        for agent in gone.members().keys() {
            self.agent_group.insert(*agent, survivor);
        }
        let merged = merge_maps(keep, gone, shift);
        let size = merged.members().len();
        self.groups.insert(survivor, merged);
        self.total_merges += 1;
        Some(MergeInfo {
            agents: (a, b),
            survivor,
            absorbed,
            shift,
            survivor_size: size,
        })
    }

    /// Finds unique pairs in this step's percepts and merges them in
    /// lexicographic pair order, rechecking group membership as merges land.
    pub fn sync_step(&mut self, percepts: &BTreeMap<AgentId, Percept>) -> Vec<MergeInfo> {
        let reports = reports_from(percepts);
        let pairs = find_unique_pairs(&reports, |a, b| self.same_group(a, b));
        let mut merges = Vec::new();
        for (a, b, d) in pairs {
            if let Some(info) = self.merge_groups(a, b, d) {
                merges.push(info);
            }
        }
        merges
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn r(observer: AgentId, x: i32, y: i32) -> SightingReport {
        SightingReport {
            observer,
            offset: Coord::new(x, y),
        }
    }

    #[test]
    fn minimal_pair() {
        let reports = vec![r(1, 3, 0), r(2, -3, 0)];
        assert_eq!(
            find_unique_pairs(&reports, |_, _| false),
            vec![(1, 2, Coord::new(3, 0))]
        );
    }

    #[test]
    fn ambiguous_offset_is_rejected() {
        let reports = vec![r(1, 2, 2), r(3, 2, 2), r(2, -2, -2)];
        assert!(find_unique_pairs(&reports, |_, _| false).is_empty());
    }

    #[test]
    fn unmatched_direction_is_rejected() {
        let reports = vec![r(1, 1, 0)];
        assert!(find_unique_pairs(&reports, |_, _| false).is_empty());
    }

    #[test]
    fn same_group_pairs_dropped() {
        let reports = vec![r(1, 3, 0), r(2, -3, 0)];
        assert!(find_unique_pairs(&reports, |_, _| true).is_empty());
    }

    #[test]
    fn shift_arithmetic() {
        let mut reg = SyncRegistry::new([1, 2]);
        reg.group_mut(1).set_member_pos(1, Coord::new(5, 5));
        let info = reg.merge_groups(1, 2, Coord::new(1, 0)).unwrap();
        assert_eq!(info.shift, Coord::new(6, 5));
        assert_eq!(reg.map_of(2).member_pos(2), Some(Coord::new(6, 5)));
        assert_eq!(reg.group_count(), 1);
    }

    #[test]
    fn mastergroup_absorbs() {
        let mut reg = SyncRegistry::new([1, 2]);
        reg.group_mut(1).set_member_pos(1, Coord::new(5, 5));
        assert!(reg.set_master(2));
        let info = reg.merge_groups(1, 2, Coord::new(1, 0)).unwrap();
        assert_eq!(info.survivor, 2);
        assert_eq!(info.shift, Coord::new(-6, -5));
        assert_eq!(reg.map_of(1).member_pos(1), Some(Coord::new(-1, 0)));
        assert_eq!(reg.map_of(2).member_pos(2), Some(Coord::ORIGIN));
        assert_eq!(reg.master(), Some(2));
        assert!(!reg.set_master(1));
    }

    #[test]
    fn already_single_group_merges_nothing() {
        let mut reg = SyncRegistry::new([1, 2]);
        reg.merge_groups(1, 2, Coord::new(2, 0));
        let reports = vec![r(1, 2, 0), r(2, -2, 0)];
        assert!(find_unique_pairs(&reports, |a, b| reg.same_group(a, b)).is_empty());
    }
}
