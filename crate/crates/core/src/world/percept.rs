use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::*;
use crate::geom::Coord;

impl WorldState {
    /// The view of agent `id`: everything within Manhattan vision radius,
    /// with entities reduced to friend or foe. Cells outside the grid are
    /// reported as obstacles.
    pub fn percept(&self, id: AgentId) -> Percept {
        let me = &self.agents[&id];
        let r = self.config.vision_radius as i32;
        let mut things = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let rel = Coord::new(dx, dy);
                if rel.manhattan() > self.config.vision_radius {
                    continue;
                }
                let c = me.pos + rel;
                match self.terrain(c) {
                    Terrain::Free => {}
                    Terrain::Obstacle => things.push(Thing {
                        pos: rel,
                        kind: ThingKind::Obstacle,
                    }),
                    Terrain::Dispenser(k) => things.push(Thing {
                        pos: rel,
                        kind: ThingKind::Dispenser(k),
                    }),
                    Terrain::Goal => things.push(Thing {
                        pos: rel,
                        kind: ThingKind::Goal,
                    }),
                }
                match self.occupant(c) {
                    Some(Entity::Agent(other)) if other != id => {
                        let kind = if self.agents[&other].team == me.team {
                            ThingKind::FriendEntity
                        } else {
                            ThingKind::FoeEntity
                        };
                        things.push(Thing { pos: rel, kind });
                    }
                    Some(Entity::Block(b)) => things.push(Thing {
                        pos: rel,
                        kind: ThingKind::Block(self.blocks[&b].kind),
                    }),
                    _ => {}
                }
                for ev in &self.clear_events {
                    let warn_from = ev.detonation_step.saturating_sub(self.config.clear_event_warn_steps);
                    if self.step >= warn_from && c.distance(ev.center) <= ev.radius {
                        things.push(Thing {
                            pos: rel,
                            kind: ThingKind::ClearMarker(ev.detonation_step.saturating_sub(self.step)),
                        });
                    }
                }
            }
        }
        things.sort();
        things.dedup();
        let mut attached: Vec<Coord> = self
            .component(Entity::Agent(id))
            .into_iter()
            .filter(|&e| e != Entity::Agent(id))
            .filter_map(|e| self.pos_of(e))
            .map(|p| p - me.pos)
            .collect();
        attached.sort();
        Percept {
            step: self.step,
            energy: me.energy,
            last_action: me.last_action.clone(),
            last_result: me.last_result,
            vision_radius: self.config.vision_radius,
            things,
            attached,
            tasks: self.tasks.values().cloned().collect(),
            team_score: self.teams[me.team as usize].score,
        }
    }

    pub fn all_percepts(&self) -> BTreeMap<AgentId, Percept> {
        self.agents.keys().map(|&id| (id, self.percept(id))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeMap;

    fn world() -> WorldState {
        let mut c = WorldConfig {
            width: 20,
            height: 20,
            clear_event_rate: 0.0,
            ..WorldConfig::default()
        };
        c.tasks.max_active = 0;
        let mut w = WorldState::empty(c, 1);
        w.add_team("A");
        w.add_team("B");
        w
    }

    #[test]
    fn friend_is_reported_without_identity() {
        let mut w = world();
        let a = w.add_agent(0, Coord::new(10, 10));
        w.add_agent(0, Coord::new(12, 10));
        w.add_agent(1, Coord::new(10, 8));
        let p = w.percept(a);
        assert!(p.things.contains(&Thing {
            pos: Coord::new(2, 0),
            kind: ThingKind::FriendEntity
        }));
        assert!(p.things.contains(&Thing {
            pos: Coord::new(0, -2),
            kind: ThingKind::FoeEntity
        }));
    }

    #[test]
    fn vision_boundary() {
        let mut w = world();
        let a = w.add_agent(0, Coord::new(10, 10));
        w.add_block(Coord::new(13, 12), 0); // distance 5
        w.add_block(Coord::new(13, 13), 1); // distance 6
        let p = w.percept(a);
        assert!(p.things.iter().any(|t| t.pos == Coord::new(3, 2)));
        assert!(!p.things.iter().any(|t| t.pos == Coord::new(3, 3)));
        assert!(p.things.iter().all(|t| t.pos.manhattan() <= p.vision_radius));
    }

    #[test]
    fn clear_markers_count_down() {
        let mut w = world();
        let a = w.add_agent(0, Coord::new(10, 10));
        w.add_clear_event(ClearEvent {
            center: Coord::new(12, 10),
            radius: 1,
            detonation_step: 5,
        });
        for _ in 0..2 {
            w.step(&BTreeMap::new());
        }
        let p = w.percept(a);
        let markers: Vec<_> = p
            .things
            .iter()
            .filter(|t| matches!(t.kind, ThingKind::ClearMarker(_)))
            .collect();
        assert_eq!(markers.len(), 5);
        assert!(markers.iter().all(|t| t.kind == ThingKind::ClearMarker(3)));
    }

    #[test]
    fn outside_grid_reads_as_obstacle() {
        let mut w = world();
        let a = w.add_agent(0, Coord::new(0, 0));
        let p = w.percept(a);
        assert!(p.things.contains(&Thing {
            pos: Coord::new(-1, 0),
            kind: ThingKind::Obstacle
        }));
    }
}
