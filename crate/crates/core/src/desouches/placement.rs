//! Role assignment for a blocks scenario, generated from the task shape.
//!
//! Everything is expressed in the task frame: the commander stands on the
//! goal cell (the origin) and the shape entries are the target block cells.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::Coord;
use crate::world::{BlockType, TaskShape};

/// Largest shape a blocks scenario handles.
pub const MAX_SCENARIO_BLOCKS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePlacement {
    pub block_type: BlockType,
    /// Target cell of this role's block.
    pub block_cell: Coord,
    /// Where the role's agent stands; the origin for the commander.
    pub stance: Coord,
    /// Block of the growing structure a lieutenant connects to. `None` for
    /// the commander.
    pub connect_to: Option<Coord>,
}

impl RolePlacement {
    /// The block's offset from its holder.
    pub fn block_offset(&self) -> Coord {
        self.block_cell - self.stance
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementError {
    UnsupportedSize(usize),
    /// No assignment of distinct standing cells exists.
    NoStance,
}

/// Commander first, then lieutenants in the order they connect.
///
/// The commander takes an entry next to the origin. The remaining entries
/// are ordered breadth first from it, so each lieutenant's block touches a
/// block that is already in place when it connects. Lieutenants stand next
/// to their own block, outside the shape, on pairwise distinct cells.
pub fn plan_block_placements(task: &TaskShape) -> Result<Vec<RolePlacement>, PlacementError> {
    let k = task.len();
    if k == 0 || k > MAX_SCENARIO_BLOCKS || !task.is_well_formed() {
        return Err(PlacementError::UnsupportedSize(k));
    }
    let cells: BTreeSet<Coord> = task.entries().iter().map(|e| e.offset).collect();
    let roots: Vec<Coord> = cells.iter().copied().filter(|c| c.manhattan() == 1).collect();
    for root in roots {
        let order = bfs_order(&cells, root);
        let mut stances = Vec::new();
        if assign_stances(&cells, &order, 1, &mut stances) {
            let mut out = alloc::vec![RolePlacement {
                block_type: task.kind_at(root).unwrap(),
                block_cell: root,
                stance: Coord::ORIGIN,
                connect_to: None,
            }];
            for (i, &(cell, parent)) in order.iter().enumerate().skip(1) {
                out.push(RolePlacement {
                    block_type: task.kind_at(cell).unwrap(),
                    block_cell: cell,
                    stance: stances[i - 1],
                    connect_to: parent,
                });
            }
            return Ok(out);
        }
    }
    Err(PlacementError::NoStance)
}

/// Shape cells reachable from `root`, each with the neighbour it was
/// discovered from.
fn bfs_order(cells: &BTreeSet<Coord>, root: Coord) -> Vec<(Coord, Option<Coord>)> {
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    let mut order = alloc::vec![(root, None)];
    while let Some(c) = queue.pop_front() {
        let mut next: Vec<Coord> = c.neighbors().into_iter().filter(|n| cells.contains(n)).collect();
        next.sort();
        for n in next {
            if seen.insert(n) {
                order.push((n, Some(c)));
                queue.push_back(n);
            }
        }
    }
    order
}

fn assign_stances(cells: &BTreeSet<Coord>, order: &[(Coord, Option<Coord>)], i: usize, taken: &mut Vec<Coord>) -> bool {
    if i == order.len() {
        return true;
    }
    let mut options: Vec<Coord> = order[i]
        .0
        .neighbors()
        .into_iter()
        .filter(|n| *n != Coord::ORIGIN && !cells.contains(n) && !taken.contains(n))
        .collect();
    options.sort();
    for s in options {
        taken.push(s);
        if assign_stances(cells, order, i + 1, taken) {
            return true;
        }
        taken.pop();
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Dir;
    use crate::world::{all_shapes, Action, ActionResult, Entity, ShapeEntry, Task, WorldConfig, WorldState};
    use alloc::collections::BTreeMap;
    use alloc::string::String;

    fn shape(cells: &[Coord]) -> TaskShape {
        TaskShape::new(
            cells
                .iter()
                .enumerate()
                .map(|(i, &offset)| ShapeEntry {
                    offset,
                    kind: (i % 2) as BlockType,
                })
                .collect(),
        )
    }

    /// Builds the structure role by role in an empty world and submits it.
    fn replay(task: &TaskShape, roles: &[RolePlacement]) -> Result<(), String> {
        let mut c = WorldConfig {
            width: 16,
            height: 16,
            obstacle_density: 0.0,
            clear_event_rate: 0.0,
            ..WorldConfig::default()
        };
        c.tasks.max_active = 0;
        let mut w = WorldState::empty(c, 0);
        w.add_team("A");
        let g = Coord::new(8, 8);
        w.set_terrain(g, crate::world::Terrain::Goal);
        w.add_task(Task {
            name: "t".into(),
            reward: 10,
            deadline: 100,
            shape: task.clone(),
        });
        let commander = w.add_agent(0, g);
        let b = w.add_block(g + roles[0].block_cell, roles[0].block_type);
        w.link(Entity::Agent(commander), Entity::Block(b));
        for r in &roles[1..] {
            let lt = w.add_agent(0, g + r.stance);
            let b = w.add_block(g + r.block_cell, r.block_type);
            w.link(Entity::Agent(lt), Entity::Block(b));
            if r.block_offset().manhattan() != 1 {
                return Err("lieutenant not next to its block".into());
            }
            let acts = BTreeMap::from([
                (
                    commander,
                    Action::Connect {
                        partner: lt,
                        own: r.connect_to.unwrap(),
                        partner_block: r.block_offset(),
                    },
                ),
                (
                    lt,
                    Action::Connect {
                        partner: commander,
                        own: r.block_offset(),
                        partner_block: r.connect_to.unwrap(),
                    },
                ),
            ]);
            let out = w.step(&acts);
            for (id, p) in &out.percepts {
                if p.last_result != ActionResult::Success {
                    return Err(alloc::format!("connect by {id} gave {:?}", p.last_result));
                }
            }
            let dir: Dir = r.block_offset().as_dir().unwrap();
            let out = w.step(&BTreeMap::from([(lt, Action::Detach { dir })]));
            if out.percepts[&lt].last_result != ActionResult::Success {
                return Err("detach failed".into());
            }
        }
        let out = w.step(&BTreeMap::from([(commander, Action::Submit { task: "t".into() })]));
        match out.percepts[&commander].last_result {
            ActionResult::Success => Ok(()),
            r => Err(alloc::format!("submit gave {r:?}")),
        }
    }

    #[test]
    fn vertical_pair() {
        let task = shape(&[Coord::new(0, 1), Coord::new(0, 2)]);
        let roles = plan_block_placements(&task).unwrap();
        assert_eq!(roles.len(), 2);
        assert_eq!(roles[0].block_cell, Coord::new(0, 1));
        assert_eq!(roles[0].stance, Coord::ORIGIN);
        // lieutenant stands beside or below its block, never inside the shape
        assert_eq!(roles[1].block_cell, Coord::new(0, 2));
        assert_eq!(roles[1].connect_to, Some(Coord::new(0, 1)));
        assert!(roles[1].stance.is_adjacent(Coord::new(0, 2)));
        replay(&task, &roles).unwrap();
    }

    #[test]
    fn single_block_is_commander_only() {
        let task = shape(&[Coord::new(0, 1)]);
        let roles = plan_block_placements(&task).unwrap();
        assert_eq!(roles.len(), 1);
        replay(&task, &roles).unwrap();
    }

    #[test]
    fn too_large_is_refused() {
        let cells: Vec<Coord> = (1..=5).map(|y| Coord::new(0, y)).collect();
        assert_eq!(
            plan_block_placements(&shape(&cells)),
            Err(PlacementError::UnsupportedSize(5))
        );
    }

    #[test]
    fn every_shape_up_to_four_replays_to_a_submit() {
        let mut handled = [0usize; 5];
        for (k, count) in handled.iter_mut().enumerate().skip(1) {
            for cells in all_shapes(k) {
                let task = shape(&cells);
                let roles = plan_block_placements(&task).unwrap_or_else(|e| panic!("{cells:?}: {e:?}"));
                let stances: BTreeSet<Coord> = roles.iter().map(|r| r.stance).collect();
                assert_eq!(stances.len(), roles.len());
                replay(&task, &roles).unwrap_or_else(|e| panic!("{cells:?}: {e}"));
                *count += 1;
            }
        }
        assert!(handled[2] >= 3 && handled[3] >= 10 && handled[4] >= 29, "{handled:?}");
    }
}
