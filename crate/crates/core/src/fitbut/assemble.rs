//! Task assembly: who submits what, and which pairs of agents should join
//! their carried structures where.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::options::{OptionPlan, PlanKind};
use super::ReasonerConfig;
use crate::budget::Budget;
use crate::geom::{is_connected, Coord};
use crate::team::{AgentView, Planner};
use crate::world::{Action, AgentId, BlockType, Task, TaskShape};

/// Blocks carried by an agent, relative to it.
pub type Structure = Vec<(Coord, BlockType)>;

pub fn rotate_structure(s: &[(Coord, BlockType)], quarters: u8) -> Structure {
    let mut out: Structure = s.iter().map(|(c, k)| (c.rotated(quarters), *k)).collect();
    out.sort();
    out
}

fn as_entries(shape: &TaskShape) -> Structure {
    shape.entries().iter().map(|e| (e.offset, e.kind)).collect()
}

/// Rotations under which the structure equals the task shape exactly.
pub fn matching_rotations(s: &[(Coord, BlockType)], shape: &TaskShape) -> Vec<u8> {
    let target = as_entries(shape);
    (0..4).filter(|&q| rotate_structure(s, q) == target).collect()
}

/// True when the structure, with its agent on the task origin, is part of
/// the task shape under some rotation.
pub fn is_sub_shape(s: &[(Coord, BlockType)], shape: &TaskShape) -> bool {
    !s.is_empty()
        && (0..4).any(|q| {
            rotate_structure(s, q)
                .iter()
                .all(|(c, k)| shape.kind_at(*c) == Some(*k))
        })
}

/// One way to join two carried structures inside a task shape.
///
/// All coordinates are relative to the submitting agent A standing on the
/// origin of the task shape turned by `task_rot`. A's structure is turned
/// by `a_rot` quarters, B's by `b_rot` with B standing at `b_offset`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairPlacement {
    pub task_rot: u8,
    pub a_rot: u8,
    pub b_rot: u8,
    pub b_offset: Coord,
    /// A's block taking part in the connect, relative to A.
    pub a_own: Coord,
    /// B's block taking part in the connect, relative to B.
    pub b_own: Coord,
    pub blocks: usize,
}

impl PairPlacement {
    /// Cells of both structures once joined, relative to A.
    pub fn cells(&self, a: &[(Coord, BlockType)], b: &[(Coord, BlockType)]) -> Structure {
        let mut out = rotate_structure(a, self.a_rot);
        out.extend(
            rotate_structure(b, self.b_rot)
                .into_iter()
                .map(|(c, k)| (c + self.b_offset, k)),
        );
        out.sort();
        out
    }
}

/// All placements of `b`'s structure next to `a`'s inside the task shape.
/// A joined structure counts its blocks plus the two agents against
/// `max_structure_size`.
pub fn pair_placements(
    task: &TaskShape,
    a: &[(Coord, BlockType)],
    b: &[(Coord, BlockType)],
    max_structure_size: u32,
) -> Vec<PairPlacement> {
    let mut out = Vec::new();
    if a.is_empty() || b.is_empty() || (a.len() + b.len() + 2) as u32 > max_structure_size {
        return out;
    }
    let mut seen_shapes: Vec<Structure> = Vec::new();
    for task_rot in 0..4u8 {
        let shape = task.rotated(task_rot);
        let entries = as_entries(&shape);
        if seen_shapes.contains(&entries) {
            continue;
        }
        seen_shapes.push(entries);
        for a_rot in 0..4u8 {
            let sa = rotate_structure(a, a_rot);
            if !sa.iter().all(|(c, k)| shape.kind_at(*c) == Some(*k)) {
                continue;
            }
            let a_cells: BTreeSet<Coord> = sa.iter().map(|(c, _)| *c).collect();
            for b_rot in 0..4u8 {
                let sb = rotate_structure(b, b_rot);
                let mut offsets: BTreeSet<Coord> = BTreeSet::new();
                for e in shape.entries() {
                    offsets.insert(e.offset - sb[0].0);
                }
                for t in offsets {
                    if t == Coord::ORIGIN || shape.contains(t) {
                        continue;
                    }
                    let placed: Vec<(Coord, BlockType)> = sb.iter().map(|(c, k)| (*c + t, *k)).collect();
                    if !placed
                        .iter()
                        .all(|(c, k)| shape.kind_at(*c) == Some(*k) && !a_cells.contains(c))
                    {
                        continue;
                    }
                    let mut link = None;
                    'outer: for ac in &a_cells {
                        for (bc, _) in &placed {
                            if ac.is_adjacent(*bc) {
                                link = Some((*ac, *bc));
                                break 'outer;
                            }
                        }
                    }
                    let Some((a_own, b_cell)) = link else {
                        continue;
                    };
                    out.push(PairPlacement {
                        task_rot,
                        a_rot,
                        b_rot,
                        b_offset: t,
                        a_own,
                        b_own: b_cell - t,
                        blocks: sa.len() + placed.len(),
                    });
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// A chosen meeting: where A and B stand and how they connect.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateStructure {
    pub task: String,
    pub agents: (AgentId, AgentId),
    pub placement: PairPlacement,
    /// A's cell when connecting, in the group frame.
    pub anchor: Coord,
    pub a_path: Vec<Action>,
    pub b_path: Vec<Action>,
    pub metric: i64,
}

impl CandidateStructure {
    pub fn steps(&self) -> usize {
        self.a_path.len().max(self.b_path.len())
    }

    fn plans(&self) -> (OptionPlan, OptionPlan) {
        let (a, b) = self.agents;
        let steps = self.steps();
        let build = |path: &[Action], partner: AgentId, own: Coord, other: Coord| {
            let mut actions = path.to_vec();
            actions.resize(steps, Action::Skip);
            actions.push(Action::Connect {
                partner,
                own,
                partner_block: other,
            });
            OptionPlan::new(PlanKind::GoConnect, actions)
                .unwrap()
                .with_task(self.task.clone())
                .with_partner(partner)
        };
        let p = &self.placement;
        (
            build(&self.a_path, b, p.a_own, p.b_own).with_target(self.anchor),
            build(&self.b_path, a, p.b_own, p.a_own).with_target(self.anchor + p.b_offset),
        )
    }
}

/// Output of one assembly round.
#[derive(Clone, Debug, Default)]
pub struct Assembly {
    pub submit: BTreeMap<AgentId, OptionPlan>,
    pub connect: BTreeMap<AgentId, OptionPlan>,
    pub chosen: Vec<CandidateStructure>,
    /// False when the budget ran out before every candidate was examined.
    pub complete: bool,
}

/// Path that brings `view`'s structure onto a goal cell in a submittable
/// orientation, followed by the submit. `None` when no goal is known, the
/// path is not found or the deadline would pass first.
pub fn submit_plan(
    planner: &Planner<'_>,
    view: &AgentView,
    task: &Task,
    now: u32,
    budget: &mut dyn Budget,
) -> Option<OptionPlan> {
    let rots = matching_rotations(&view.blocks, &task.shape);
    if rots.is_empty() || view.attached.len() != view.blocks.len() {
        return None;
    }
    let goals = planner.map.goals();
    if goals.is_empty() {
        return None;
    }
    let goal_set: BTreeSet<Coord> = goals.iter().copied().collect();
    let accept = |c: Coord, r: u8| goal_set.contains(&c) && rots.contains(&r);
    let mut actions = planner.plan(view, &goals, &accept, false, budget)?;
    if now + actions.len() as u32 > task.deadline {
        return None;
    }
    actions.push(Action::Submit {
        task: task.name.clone(),
    });
    Some(
        OptionPlan::new(PlanKind::GoSubmit, actions)
            .unwrap()
            .with_task(task.name.clone()),
    )
}

fn completeness(s: &[(Coord, BlockType)], tasks: &[Task]) -> u64 {
    tasks
        .iter()
        .filter(|t| is_sub_shape(s, &t.shape))
        .map(|t| t.reward * s.len() as u64 / t.shape.len().max(1) as u64)
        .max()
        .unwrap_or(0)
}

/// The assembly round for one group.
///
/// 1. every agent is a connection candidate;
/// 2. agents already holding a task shape with a path to a goal get a
///    submit plan and leave the candidates;
/// 3. candidates are ordered by how complete their structure is, weighted
///    by task reward;
/// 4. every ordered pair of candidates is tried against every task;
/// 5. candidates are scored `reward - max(path lengths)`;
/// 6. the best candidate whose agents are both still free is taken, until
///    none is left.
pub fn assemble_tasks(
    planner: &Planner<'_>,
    agents: &[AgentView],
    tasks: &[Task],
    now: u32,
    cfg: &ReasonerConfig,
    budget: &mut dyn Budget,
) -> Assembly {
    let mut out = Assembly {
        complete: true,
        ..Default::default()
    };
    let mut tasks: Vec<&Task> = tasks.iter().filter(|t| t.deadline >= now).collect();
    tasks.sort_by(|a, b| b.reward.cmp(&a.reward).then(a.name.cmp(&b.name)));

    let mut ccs: Vec<&AgentView> = agents.iter().filter(|v| v.is_alone()).collect();
    ccs.retain(|v| {
        if v.blocks.is_empty() {
            return true;
        }
        for t in &tasks {
            if budget.exhausted() {
                out.complete = false;
                return true;
            }
            if let Some(plan) = submit_plan(planner, v, t, now, budget) {
                out.submit.insert(v.id, plan);
                return false;
            }
        }
        true
    });
    let owned: Vec<Task> = tasks.iter().map(|t| (*t).clone()).collect();
    ccs.retain(|v| !v.blocks.is_empty());
    ccs.sort_by(|a, b| {
        completeness(&b.blocks, &owned)
            .cmp(&completeness(&a.blocks, &owned))
            .then(a.id.cmp(&b.id))
    });

    // geometric candidates, ranked by an optimistic distance estimate
    struct Raw<'v> {
        estimate: i64,
        task: &'v Task,
        a: &'v AgentView,
        b: &'v AgentView,
        placement: PairPlacement,
    }
    let mut raw: Vec<Raw> = Vec::new();
    for t in &tasks {
        let mut per_task: Vec<Raw> = Vec::new();
        for a in &ccs {
            for b in &ccs {
                if a.id == b.id {
                    continue;
                }
                for placement in pair_placements(&t.shape, &a.blocks, &b.blocks, cfg.max_structure_size) {
                    let meet = a.pos + placement.b_offset;
                    per_task.push(Raw {
                        estimate: t.reward as i64 - meet.distance(b.pos) as i64,
                        task: t,
                        a,
                        b,
                        placement,
                    });
                }
            }
        }
        per_task.sort_by(|x, y| {
            y.estimate
                .cmp(&x.estimate)
                .then(x.placement.blocks.cmp(&y.placement.blocks))
                .then((x.a.id, x.b.id).cmp(&(y.a.id, y.b.id)))
                .then(x.placement.cmp(&y.placement))
        });
        per_task.truncate(cfg.candidate_cap);
        raw.extend(per_task);
    }
    raw.sort_by_key(|r| core::cmp::Reverse(r.estimate));

    let goals = planner.map.goals();
    let mut scored: Vec<CandidateStructure> = Vec::new();
    for r in raw {
        if budget.exhausted() {
            out.complete = false;
            break;
        }
        let p = &r.placement;
        let mut anchors = vec![r.a.pos];
        if let Some(g) = goals.iter().min_by_key(|g| (g.distance(r.a.pos), **g)) {
            if *g != r.a.pos {
                anchors.push(*g);
            }
        }
        for anchor in anchors {
            let a_rot = p.a_rot;
            let Some(a_path) = planner.plan(r.a, &[anchor], &|c, q| c == anchor && q == a_rot, false, budget) else {
                continue;
            };
            let b_cell = anchor + p.b_offset;
            let b_rot = p.b_rot;
            let Some(b_path) = planner.plan(r.b, &[b_cell], &|c, q| c == b_cell && q == b_rot, false, budget) else {
                continue;
            };
            let steps = a_path.len().max(b_path.len());
            if now + steps as u32 >= r.task.deadline {
                continue;
            }
            scored.push(CandidateStructure {
                task: r.task.name.clone(),
                agents: (r.a.id, r.b.id),
                placement: r.placement.clone(),
                anchor,
                metric: r.task.reward as i64 - steps as i64,
                a_path,
                b_path,
            });
            break;
        }
    }
    scored.sort_by(|x, y| {
        y.metric
            .cmp(&x.metric)
            .then(x.placement.blocks.cmp(&y.placement.blocks))
            .then(x.task.cmp(&y.task))
            .then(x.agents.cmp(&y.agents))
            .then(x.placement.cmp(&y.placement))
    });
    let mut busy: BTreeSet<AgentId> = BTreeSet::new();
    for c in scored {
        let (a, b) = c.agents;
        if busy.contains(&a) || busy.contains(&b) {
            continue;
        }
        busy.insert(a);
        busy.insert(b);
        let (pa, pb) = c.plans();
        out.connect.insert(a, pa);
        out.connect.insert(b, pb);
        out.chosen.push(c);
    }
    out
}

/// Checks a placement from first principles; used by tests and the
/// acceptance harness as an independent oracle.
pub fn placement_is_valid(
    task: &TaskShape,
    a: &[(Coord, BlockType)],
    b: &[(Coord, BlockType)],
    p: &PairPlacement,
    max_structure_size: u32,
) -> bool {
    let shape = task.rotated(p.task_rot);
    let sa: Vec<(Coord, BlockType)> = a.iter().map(|(c, k)| (c.rotated(p.a_rot), *k)).collect();
    let sb: Vec<(Coord, BlockType)> = b.iter().map(|(c, k)| (c.rotated(p.b_rot) + p.b_offset, *k)).collect();
    let in_task = sa.iter().chain(&sb).all(|(c, k)| shape.kind_at(*c) == Some(*k));
    let cells: Vec<Coord> = sa.iter().chain(&sb).map(|(c, _)| *c).collect();
    let distinct: BTreeSet<Coord> = cells.iter().copied().collect();
    let no_overlap = distinct.len() == cells.len();
    let agents_free =
        !distinct.contains(&Coord::ORIGIN) && !distinct.contains(&p.b_offset) && p.b_offset != Coord::ORIGIN;
    let touching = sa.iter().any(|(x, _)| sb.iter().any(|(y, _)| x.is_adjacent(*y)));
    let connect_ok = sa.iter().any(|(c, _)| *c == p.a_own)
        && sb.iter().any(|(c, _)| *c == p.b_own + p.b_offset)
        && p.a_own.is_adjacent(p.b_own + p.b_offset);
    in_task
        && no_overlap
        && agents_free
        && touching
        && connect_ok
        && is_connected(&cells)
        && (cells.len() + 2) as u32 <= max_structure_size
}
