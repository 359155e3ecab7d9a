//! Reactive engine: every step each agent rebuilds all its option plans,
//! the group adds assembly, hoarding and exploration plans, and each agent
//! executes the first action of the best plan whose action the group's
//! reservation map approves.

pub mod assemble;
pub mod options;

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::budget::{Budget, Unlimited};
use crate::geom::Coord;
use crate::reservation::{ReservationMap, Verdict};
use crate::team::{AgentView, Knowledge, Planner, TeamEngine, TraceRecord};
use crate::world::{Action, AgentId, BlockType, Percept, Task, WorldConfig};

pub use assemble::{assemble_tasks, pair_placements, Assembly, CandidateStructure, PairPlacement};
pub use options::{ranked_plans, select_plan, OptionPlan, PlanKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerConfig {
    /// Blocks plus the two agents of a joined structure.
    pub max_structure_size: u32,
    /// Blocks an agent hoards on its own.
    pub max_hoard: u32,
    /// Wall-clock budget of the group phase, in milliseconds.
    pub step_time_budget_ms: u64,
    pub go_submit_short_len: usize,
    /// Pair placements kept per task before paths are computed.
    pub candidate_cap: usize,
    pub max_iter: u32,
    /// Block types worth hoarding; `None` means every type.
    pub interesting_types: Option<Vec<BlockType>>,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            max_structure_size: 10,
            max_hoard: 1,
            step_time_budget_ms: 500,
            go_submit_short_len: 3,
            candidate_cap: 64,
            max_iter: crate::pathfind::DEFAULT_MAX_ITER,
            interesting_types: None,
        }
    }
}

impl ReasonerConfig {
    pub fn is_block_interesting(&self, kind: BlockType) -> bool {
        self.interesting_types.as_ref().is_none_or(|t| t.contains(&kind))
    }
}

/// Dodge, GoNearSubmit and Dig for one agent. Dig is not even computed when
/// the agent has to dodge.
pub fn compute_local_options(
    planner: &Planner<'_>,
    view: &AgentView,
    world: &WorldConfig,
    budget: &mut dyn Budget,
) -> Vec<OptionPlan> {
    let mut out = Vec::new();
    if !view.is_alone() {
        return out;
    }
    let fp = view.footprint();
    let in_danger = fp.iter().any(|c| planner.hazards.contains(c));
    if in_danger {
        if let Some(plan) = planner.escape(view).and_then(|a| OptionPlan::new(PlanKind::Dodge, a)) {
            out.push(plan);
        }
    }
    let goals = planner.map.goals();
    if let Some(&g) = goals.iter().min_by_key(|g| (g.distance(view.pos), **g)) {
        if g != view.pos {
            if let Some(plan) = planner
                .plan_to(view, g, budget)
                .and_then(|a| OptionPlan::new(PlanKind::GoNearSubmit, a))
            {
                out.push(plan.with_target(g));
            }
        }
    }
    if !in_danger && view.energy >= world.clear_cost {
        let mut obstacles = planner.map.obstacles();
        obstacles.retain(|o| o.distance(view.pos) <= world.vision_radius * 2);
        obstacles.sort_by_key(|o| (o.distance(view.pos), *o));
        for o in obstacles.into_iter().take(3) {
            let cells = o.neighbors();
            let accept = |c: Coord, _| c.is_adjacent(o);
            let Some(mut actions) = planner.plan(view, &cells, &accept, false, budget) else {
                continue;
            };
            let end = end_cell(view.pos, &actions);
            for _ in 0..world.clear_charge_steps {
                actions.push(Action::Clear { target: o - end });
            }
            out.push(OptionPlan::new(PlanKind::Dig, actions).unwrap().with_target(o));
            break;
        }
    }
    out
}

/// Cell reached after the moves in `actions`.
fn end_cell(start: Coord, actions: &[Action]) -> Coord {
    actions.iter().fold(start, |p, a| match a {
        Action::Move { dir } => p + dir.delta(),
        _ => p,
    })
}

/// Group plans per agent: assembly first, then hoarding, then exploration.
/// Agents that already hold a plan from an earlier phase are skipped by the
/// later ones. When the budget runs out the phase stops and keeps whatever
/// plans are complete.
pub fn compute_group_options(
    planner: &Planner<'_>,
    views: &[AgentView],
    tasks: &[Task],
    now: u32,
    cfg: &ReasonerConfig,
    budget: &mut dyn Budget,
) -> BTreeMap<AgentId, Vec<OptionPlan>> {
    let mut out: BTreeMap<AgentId, Vec<OptionPlan>> = BTreeMap::new();
    let alone: Vec<&AgentView> = views.iter().filter(|v| v.is_alone()).collect();
    let hoarded = alone.iter().any(|v| !v.blocks.is_empty());
    let goals_known = !planner.map.goals().is_empty();
    if hoarded && goals_known && !tasks.is_empty() {
        let owned: Vec<AgentView> = alone.iter().map(|v| (*v).clone()).collect();
        let asm = assemble_tasks(planner, &owned, tasks, now, cfg, budget);
        for (id, p) in asm.submit.into_iter().chain(asm.connect) {
            out.entry(id).or_default().push(p);
        }
    }

    // hoarding: fetch a block for agents below the cap
    let mut demand: BTreeMap<BlockType, i64> = BTreeMap::new();
    for t in tasks {
        for e in t.shape.entries() {
            *demand.entry(e.kind).or_default() += 1;
        }
    }
    for v in views {
        for (_, k) in &v.blocks {
            *demand.entry(*k).or_default() -= 1;
        }
    }
    let dispensers = planner.map.dispensers();
    for v in &alone {
        if budget.exhausted() {
            return out;
        }
        if out.contains_key(&v.id) || v.blocks.len() as u32 >= cfg.max_hoard {
            continue;
        }
        let mut choices: Vec<(i64, u32, Coord, BlockType)> = dispensers
            .iter()
            .filter(|(_, k)| cfg.is_block_interesting(*k))
            .map(|&(c, k)| (-demand.get(&k).copied().unwrap_or(0), c.distance(v.pos), c, k))
            .collect();
        choices.sort();
        for (_, _, d, kind) in choices.into_iter().take(3) {
            if let Some(plan) = hoard_plan(planner, v, d, budget) {
                *demand.entry(kind).or_default() -= 1;
                out.entry(v.id).or_default().push(plan);
                break;
            }
        }
    }

    // exploration for everyone still without a group plan
    let idle: Vec<&AgentView> = alone.iter().copied().filter(|v| !out.contains_key(&v.id)).collect();
    let mut targets = planner.map.frontier_targets(idle.len());
    for v in idle {
        if budget.exhausted() {
            return out;
        }
        targets.sort_by_key(|t| (t.distance(v.pos), *t));
        let mut used = None;
        for (i, &t) in targets.iter().enumerate().take(3) {
            if t == v.pos {
                continue;
            }
            if let Some(plan) = planner
                .plan_to(v, t, budget)
                .and_then(|a| OptionPlan::new(PlanKind::Roam, a))
            {
                out.entry(v.id).or_default().push(plan.with_target(t));
                used = Some(i);
                break;
            }
        }
        if let Some(i) = used {
            targets.remove(i);
        }
    }
    out
}

/// Walk next to dispenser `d`, request a block there and attach it. When a
/// block already waits on the dispenser it is attached directly.
fn hoard_plan(planner: &Planner<'_>, v: &AgentView, d: Coord, budget: &mut dyn Budget) -> Option<OptionPlan> {
    let path = planner.plan_next_to(v, d, budget)?;
    let stand = end_cell(v.pos, &path);
    let dir = (d - stand).as_dir()?;
    let waiting = matches!(planner.map.fresh_occupant(d), Some(crate::beliefs::Occupant::Block(_)));
    let mut actions = path;
    if !waiting {
        actions.push(Action::Request { dir });
    }
    actions.push(Action::Attach { dir });
    OptionPlan::new(PlanKind::Hoard, actions).map(|p| p.with_target(d))
}

/// For an agent connected to other agents: the agent holding a task
/// sub-shape keeps the structure (lowest id on a tie), everyone else
/// detaches from the blocks it linked itself.
pub fn split_plan(
    view: &AgentView,
    component: &[(AgentId, Vec<(Coord, BlockType)>)],
    tasks: &[Task],
) -> Option<OptionPlan> {
    if view.partners.is_empty() {
        return None;
    }
    let fits = |blocks: &[(Coord, BlockType)]| tasks.iter().any(|t| assemble::is_sub_shape(blocks, &t.shape));
    let keeper = component
        .iter()
        .filter(|(_, b)| fits(b))
        .map(|(id, _)| *id)
        .min()
        .or_else(|| component.iter().map(|(id, _)| *id).min())?;
    if keeper == view.id {
        return None;
    }
    let link = view
        .links
        .iter()
        .copied()
        .chain(view.blocks.iter().map(|(c, _)| *c).filter(|c| c.manhattan() == 1))
        .next()?;
    let dir = link.as_dir()?;
    OptionPlan::new(PlanKind::Split, vec![Action::Detach { dir }])
}

/// Tries the plans in priority order and returns the first action the
/// reservation map approves, or skip.
pub fn act_step(
    view: &AgentView,
    ranked: &[&OptionPlan],
    res: &mut ReservationMap,
    trace: &mut Vec<TraceRecord>,
) -> (Action, Option<PlanKind>) {
    for plan in ranked {
        let action = plan.first().clone();
        let verdict = res.reserve_action(view.claimant(), view.pos, &action, &view.footprint());
        trace.push(TraceRecord::Reservation {
            step: res.step(),
            agent: view.id,
            group: view.group,
            action: action.clone(),
            verdict,
        });
        if verdict == Verdict::Approved {
            return (action, Some(plan.kind));
        }
    }
    (Action::Skip, None)
}

/// The budget passed to `decide` bounds the group phase only; the runner
/// chooses between wall-clock and logical budgets.
pub struct FitButEngine {
    pub config: ReasonerConfig,
    world: WorldConfig,
    knowledge: Knowledge,
    trace: Vec<TraceRecord>,
}

impl FitButEngine {
    pub fn new(agents: impl IntoIterator<Item = AgentId>, world: WorldConfig, config: ReasonerConfig) -> Self {
        FitButEngine {
            config,
            world,
            knowledge: Knowledge::new(agents),
            trace: Vec::new(),
        }
    }
}

impl TeamEngine for FitButEngine {
    fn name(&self) -> &'static str {
        "fitbut"
    }

    fn decide(&mut self, percepts: &BTreeMap<AgentId, Percept>, budget: &mut dyn Budget) -> BTreeMap<AgentId, Action> {
        let merges = self.knowledge.update(percepts);
        let now = self.knowledge.step();
        for info in merges {
            self.trace.push(TraceRecord::Merge { step: now, info });
        }
        let tasks: Vec<Task> = percepts.values().next().map(|p| p.tasks.clone()).unwrap_or_default();
        let views: BTreeMap<AgentId, AgentView> = percepts
            .iter()
            .map(|(&id, p)| (id, self.knowledge.view(id, p)))
            .collect();
        let mut groups: BTreeMap<u32, Vec<AgentView>> = BTreeMap::new();
        for v in views.values() {
            groups.entry(v.group).or_default().push(v.clone());
        }

        let mut actions = BTreeMap::new();
        for (gid, members) in groups {
            let map = self.knowledge.registry.group(gid);
            let planner = Planner::new(map, members.iter(), self.config.max_iter);
            let mut plans: BTreeMap<AgentId, Vec<OptionPlan>> = BTreeMap::new();
            for v in &members {
                let local = compute_local_options(&planner, v, &self.world, &mut Unlimited);
                plans.insert(v.id, local);
            }
            for (id, ps) in compute_group_options(&planner, &members, &tasks, now, &self.config, budget) {
                plans.entry(id).or_default().extend(ps);
            }
            for v in members.iter().filter(|v| !v.partners.is_empty()) {
                let component: Vec<(AgentId, Vec<(Coord, BlockType)>)> = v
                    .partners
                    .iter()
                    .chain([&v.id])
                    .map(|id| (*id, views[id].blocks.clone()))
                    .collect();
                if let Some(p) = split_plan(v, &component, &tasks) {
                    plans.entry(v.id).or_default().push(p);
                }
            }

            let short = self.config.go_submit_short_len;
            let mut order: Vec<(u8, AgentId)> = members
                .iter()
                .map(|v| {
                    let best = ranked_plans(&plans[&v.id], !v.partners.is_empty(), short)
                        .first()
                        .map_or(u8::MAX, |p| p.tier(short));
                    (best, v.id)
                })
                .collect();
            order.sort();

            let mut res = ReservationMap::new(now);
            for v in &members {
                res.presence(v.claimant(), v.footprint());
            }
            for (_, id) in order {
                let v = &views[&id];
                let ranked = ranked_plans(&plans[&id], !v.partners.is_empty(), short);
                self.trace.push(TraceRecord::Plans {
                    step: now,
                    agent: id,
                    options: ranked.iter().map(|p| (p.kind.name().to_string(), p.len())).collect(),
                    selected: ranked.first().map(|p| p.kind.name().to_string()),
                });
                let (action, _) = act_step(v, &ranked, &mut res, &mut self.trace);
                actions.insert(id, action);
            }
        }
        actions
    }

    fn knowledge(&self) -> Option<&Knowledge> {
        Some(&self.knowledge)
    }

    fn drain_trace(&mut self) -> Vec<TraceRecord> {
        core::mem::take(&mut self.trace)
    }
}
