//! The proactive engine: a general hands out scenarios, soldiers pursue
//! them goal by goal.
//!
//! Each step the soldiers first evaluate their current goals against the
//! new percepts and queue success or failure reports. The general then
//! drains the queue once, disbands lapsed scenarios, starts new blocks
//! scenarios and keeps every idle soldier busy with walk-and-synchronize
//! or search-and-destroy. Finally every soldier picks its action.

mod automaton;
mod placement;

pub use automaton::{
    step_automaton, AutomatonEvent, NextGoal, Role, ScenarioAutomaton, ScenarioState, RESTART_CAP, RETRY_CAP,
};
pub use placement::{plan_block_placements, PlacementError, RolePlacement, MAX_SCENARIO_BLOCKS};

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beliefs::{CellState, GroupId, Occupant};
use crate::budget::Budget;
use crate::geom::{Coord, Turn};
use crate::reservation::ReservationMap;
use crate::rng::SimRng;
use crate::sync::SyncRegistry;
use crate::team::{AgentView, Knowledge, Planner, TeamEngine, TraceRecord};
use crate::world::{Action, ActionResult, AgentId, Percept, Task, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesouchesConfig {
    /// Walk-and-synchronize distance range, in cells.
    pub walk_min: u32,
    pub walk_max: u32,
    pub max_iter: u32,
    /// Whether blocks scenarios are started at all.
    pub blocks_scenarios: bool,
    /// Blocks scenarios running at once.
    pub max_scenarios: usize,
    /// A scenario is only started for a task with at least this many steps
    /// left before its deadline.
    pub min_task_slack: u32,
    /// Travel estimates (Manhattan, dispenser then goal) are scaled by this
    /// percentage before checking that a task can make its deadline.
    pub travel_margin_pct: u32,
}

impl Default for DesouchesConfig {
    fn default() -> Self {
        DesouchesConfig {
            walk_min: 5,
            walk_max: 15,
            max_iter: crate::pathfind::DEFAULT_MAX_ITER,
            blocks_scenarios: true,
            max_scenarios: 2,
            min_task_slack: 20,
            travel_margin_pct: 150,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    WalkSync,
    SearchDestroy,
    Blocks(u8),
}

/// What a soldier was told to do.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    WalkSync,
    SearchDestroy,
    Blocks { scenario: u32, index: usize },
}

impl Order {
    pub fn kind(&self, gs: &GeneralState) -> ScenarioKind {
        match self {
            Order::WalkSync => ScenarioKind::WalkSync,
            Order::SearchDestroy => ScenarioKind::SearchDestroy,
            Order::Blocks { scenario, .. } => {
                ScenarioKind::Blocks(gs.scenarios.get(scenario).map_or(0, |s| s.members.len() as u8))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Succeeded { agent: AgentId },
    Failed { agent: AgentId },
}

impl Report {
    pub fn agent(&self) -> AgentId {
        match self {
            Report::Succeeded { agent } | Report::Failed { agent } => *agent,
        }
    }
}

/// A running blocks scenario. Positions are in its group's frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlocksScenario {
    pub id: u32,
    pub task: String,
    pub deadline: u32,
    pub group: GroupId,
    /// Goal cell the commander stands on.
    pub goal: Coord,
    /// Commander first, then lieutenants in connect order.
    pub members: Vec<AgentId>,
    pub roles: Vec<RolePlacement>,
    /// Per lieutenant, whether its block joined the structure.
    pub connected: Vec<bool>,
    pub done: Vec<bool>,
}

impl BlocksScenario {
    pub fn role(&self, index: usize) -> Role {
        if index == 0 {
            Role::Commander
        } else {
            Role::Lieutenant(index as u8 - 1)
        }
    }

    /// Cell the member stands on when the structure is built.
    pub fn stance(&self, index: usize) -> Coord {
        self.goal + self.roles[index].stance
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralState {
    pub orders: BTreeMap<AgentId, Order>,
    pub scenarios: BTreeMap<u32, BlocksScenario>,
    pub pending: VecDeque<Report>,
    /// Goal cells where a scenario of the group failed; not chosen again.
    pub failed_goals: BTreeSet<(GroupId, Coord)>,
    next_scenario: u32,
}

impl GeneralState {
    pub fn is_idle(&self, agent: AgentId) -> bool {
        !self.orders.contains_key(&agent)
    }

    /// Not bound to a blocks scenario.
    pub fn is_free(&self, agent: AgentId) -> bool {
        !matches!(self.orders.get(&agent), Some(Order::Blocks { .. }))
    }

    fn disband(&mut self, id: u32) -> Option<BlocksScenario> {
        let s = self.scenarios.remove(&id)?;
        for m in &s.members {
            if matches!(self.orders.get(m), Some(Order::Blocks { scenario, .. }) if *scenario == id) {
                self.orders.remove(m);
            }
        }
        Some(s)
    }
}

/// What the general knows about a soldier when handing out work.
#[derive(Clone, Debug)]
pub struct SoldierInfo {
    pub group: GroupId,
    pub pos: Coord,
    /// Carries nothing and is attached to nobody.
    pub unencumbered: bool,
    /// Has the energy for a clear action.
    pub can_clear: bool,
}

/// A change the general made, for the trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DispatchNote {
    Started {
        scenario: u32,
        task: String,
        members: Vec<AgentId>,
    },
    Completed {
        scenario: u32,
    },
    Disbanded {
        scenario: u32,
        reason: &'static str,
    },
    Assigned {
        agent: AgentId,
        order: Order,
    },
    Mastergroup {
        group: GroupId,
    },
}

/// One pass of the general. Reports are drained in arrival order; new
/// orders are written into `gs.orders` and also returned.
pub fn general_dispatch(
    gs: &mut GeneralState,
    reg: &mut SyncRegistry,
    tasks: &[Task],
    soldiers: &BTreeMap<AgentId, SoldierInfo>,
    now: u32,
    cfg: &DesouchesConfig,
) -> (BTreeMap<AgentId, Order>, Vec<DispatchNote>) {
    let mut notes = Vec::new();
    while let Some(r) = gs.pending.pop_front() {
        let agent = r.agent();
        match gs.orders.get(&agent).cloned() {
            Some(Order::Blocks { scenario, index }) => {
                gs.orders.remove(&agent);
                let Some(s) = gs.scenarios.get_mut(&scenario) else {
                    continue;
                };
                match r {
                    Report::Succeeded { .. } => {
                        s.done[index] = true;
                        if s.done.iter().all(|d| *d) {
                            gs.scenarios.remove(&scenario);
                            notes.push(DispatchNote::Completed { scenario });
                        }
                    }
                    Report::Failed { .. } => {
                        if let Some(s) = gs.disband(scenario) {
                            gs.failed_goals.insert((s.group, s.goal));
                        }
                        notes.push(DispatchNote::Disbanded {
                            scenario,
                            reason: "member failed",
                        });
                    }
                }
            }
            Some(_) => {
                gs.orders.remove(&agent);
            }
            None => {}
        }
    }

    let lapsed: Vec<u32> = gs
        .scenarios
        .values()
        .filter(|s| s.deadline < now || !tasks.iter().any(|t| t.name == s.task))
        .map(|s| s.id)
        .collect();
    for id in lapsed {
        gs.disband(id);
        notes.push(DispatchNote::Disbanded {
            scenario: id,
            reason: "deadline lapsed",
        });
    }

    let mut orders = BTreeMap::new();
    if cfg.blocks_scenarios {
        start_scenarios(gs, reg, tasks, soldiers, now, cfg, &mut orders, &mut notes);
    }

    let synced = reg.group_count() == 1;
    for &id in soldiers.keys() {
        if gs.is_idle(id) {
            let order = if synced && soldiers[&id].can_clear && !reg.map_of(id).obstacles().is_empty() {
                Order::SearchDestroy
            } else {
                Order::WalkSync
            };
            gs.orders.insert(id, order.clone());
            orders.insert(id, order.clone());
            notes.push(DispatchNote::Assigned { agent: id, order });
        }
    }
    (orders, notes)
}

#[allow(clippy::too_many_arguments)]
fn start_scenarios(
    gs: &mut GeneralState,
    reg: &mut SyncRegistry,
    tasks: &[Task],
    soldiers: &BTreeMap<AgentId, SoldierInfo>,
    now: u32,
    cfg: &DesouchesConfig,
    orders: &mut BTreeMap<AgentId, Order>,
    notes: &mut Vec<DispatchNote>,
) {
    let mut ranked: Vec<&Task> = tasks
        .iter()
        .filter(|t| t.deadline >= now + cfg.min_task_slack)
        .filter(|t| !gs.scenarios.values().any(|s| s.task == t.name))
        .collect();
    ranked.sort_by(|a, b| b.reward.cmp(&a.reward).then_with(|| a.name.cmp(&b.name)));

    for task in ranked {
        if gs.scenarios.len() >= cfg.max_scenarios {
            return;
        }
        let Ok(roles) = plan_block_placements(&task.shape) else {
            continue;
        };
        let k = roles.len();
        let candidates: Vec<GroupId> = match reg.master() {
            Some(m) => alloc::vec![m],
            None => reg.groups().map(|g| g.group_id).collect(),
        };
        for gid in candidates {
            let free: Vec<(AgentId, Coord)> = soldiers
                .iter()
                .filter(|(id, s)| s.group == gid && s.unencumbered && gs.is_free(**id))
                .map(|(id, s)| (*id, s.pos))
                .collect();
            if free.len() < k {
                continue;
            }
            let map = reg.group(gid);
            let dispensers = map.dispensers();
            if !roles.iter().all(|r| dispensers.iter().any(|(_, t)| *t == r.block_type)) {
                continue;
            }
            let fits = |g: Coord| {
                roles.iter().all(|r| {
                    !matches!(map.state(g + r.block_cell), CellState::Obstacle)
                        && !matches!(map.state(g + r.stance), CellState::Obstacle)
                })
            };
            let goal = map
                .goals()
                .into_iter()
                .filter(|g| fits(*g) && !gs.failed_goals.contains(&(gid, *g)))
                .min_by_key(|g| (free.iter().map(|(_, p)| p.distance(*g)).min().unwrap(), *g));
            let Some(goal) = goal else {
                continue;
            };
            let mut by_distance = free.clone();
            by_distance.sort_by_key(|(id, p)| (p.distance(goal), *id));
            let members: Vec<AgentId> = by_distance.iter().take(k).map(|(id, _)| *id).collect();
            let travel = by_distance
                .iter()
                .zip(&roles)
                .map(|((_, p), r)| {
                    dispensers
                        .iter()
                        .filter(|(_, t)| *t == r.block_type)
                        .map(|(d, _)| p.distance(*d) + d.distance(goal))
                        .min()
                        .unwrap_or(u32::MAX / 200)
                })
                .max()
                .unwrap_or(0);
            // a few steps per block for fetching, turning and connecting
            let eta = travel * cfg.travel_margin_pct / 100 + 4 * k as u32;
            if now + eta > task.deadline {
                continue;
            }

            if reg.master().is_none() {
                reg.set_master(gid);
                notes.push(DispatchNote::Mastergroup { group: gid });
            }
            let id = gs.next_scenario;
            gs.next_scenario += 1;
            for (index, m) in members.iter().enumerate() {
                let order = Order::Blocks { scenario: id, index };
                gs.orders.insert(*m, order.clone());
                orders.insert(*m, order);
            }
            gs.scenarios.insert(
                id,
                BlocksScenario {
                    id,
                    task: task.name.clone(),
                    deadline: task.deadline,
                    group: gid,
                    goal,
                    members: members.clone(),
                    roles: roles.clone(),
                    connected: alloc::vec![false; k - 1],
                    done: alloc::vec![false; k],
                },
            );
            notes.push(DispatchNote::Started {
                scenario: id,
                task: task.name.clone(),
                members,
            });
            break;
        }
    }
}

/// A cell at Manhattan distance `d`, uniform in `[lo, hi]`, from `from`.
pub fn walk_sync_goal(from: Coord, lo: u32, hi: u32, rng: &mut SimRng) -> Coord {
    let d = rng.gen_range(lo..=hi.max(lo)) as i32;
    let dx = rng.gen_range(-d..=d);
    let rest = d - dx.abs();
    let dy = if rng.gen_bool(0.5) { rest } else { -rest };
    from + Coord::new(dx, dy)
}

/// Nearest obstacle the group knows of that borders a known passable cell
/// and is not in `skip`. `None` when there is none or the agent cannot
/// afford to clear it.
pub fn search_destroy_goal(
    map: &crate::beliefs::GroupMap,
    pos: Coord,
    energy: u32,
    clear_cost: u32,
    skip: &BTreeSet<Coord>,
) -> Option<Coord> {
    if energy < clear_cost {
        return None;
    }
    let exposed = |c: Coord| {
        c.neighbors()
            .iter()
            .any(|&n| !matches!(map.state(n), CellState::Obstacle | CellState::Unknown))
    };
    map.obstacles()
        .into_iter()
        .filter(|c| !skip.contains(c) && exposed(*c))
        .min_by_key(|c| (c.distance(pos), *c))
}

/// Per-soldier execution state beneath the general's order.
#[derive(Clone, Debug, Default)]
struct Soldier {
    automaton: Option<ScenarioAutomaton>,
    /// Target of the walk in progress, with the step it must be done by.
    walk: Option<(Coord, u32)>,
    /// Obstacle being cleared.
    clear_target: Option<Coord>,
    /// Obstacles this soldier failed to reach or clear, in the frame of
    /// the given group.
    given_up: (GroupId, BTreeSet<Coord>),
    /// Action sent for the current goal last step.
    issued: Option<Action>,
}

/// Outcome of evaluating a goal.
enum Progress {
    Succeeded,
    Failed,
    Act(Action),
    /// The action depends on partners; decided once everyone is settled.
    Coordinate,
}

pub struct DeSouchesEngine {
    knowledge: Knowledge,
    cmd: Command,
}

/// Everything but the beliefs, so goal evaluation can borrow the group
/// maps while updating soldier state.
struct Command {
    world: WorldConfig,
    config: DesouchesConfig,
    rng: SimRng,
    general: GeneralState,
    soldiers: BTreeMap<AgentId, Soldier>,
    trace: Vec<TraceRecord>,
}

struct StepCtx<'a> {
    now: u32,
    views: &'a BTreeMap<AgentId, AgentView>,
    percepts: &'a BTreeMap<AgentId, Percept>,
}

impl DeSouchesEngine {
    pub fn new(
        agents: impl IntoIterator<Item = AgentId>,
        world: WorldConfig,
        config: DesouchesConfig,
        seed: u64,
    ) -> Self {
        let agents: Vec<AgentId> = agents.into_iter().collect();
        DeSouchesEngine {
            knowledge: Knowledge::new(agents.iter().copied()),
            cmd: Command {
                world,
                config,
                rng: SimRng::seed_from_u64(seed),
                general: GeneralState::default(),
                soldiers: agents.iter().map(|a| (*a, Soldier::default())).collect(),
                trace: Vec::new(),
            },
        }
    }

    pub fn general(&self) -> &GeneralState {
        &self.cmd.general
    }

    /// Current automaton of a soldier in a blocks scenario.
    pub fn automaton(&self, agent: AgentId) -> Option<ScenarioAutomaton> {
        self.cmd.soldiers.get(&agent).and_then(|s| s.automaton)
    }
}

impl Command {
    fn note(&mut self, step: u32, agent: AgentId, detail: String) {
        self.trace.push(TraceRecord::Scenario { step, agent, detail });
    }

    /// Runs goal evaluations for one soldier until it has something to do.
    fn settle(&mut self, kn: &Knowledge, id: AgentId, ctx: &StepCtx<'_>, budget: &mut dyn Budget) -> Option<Progress> {
        let p = &ctx.percepts[&id];
        let mut last = self
            .soldiers
            .get_mut(&id)?
            .issued
            .take()
            .filter(|a| *a == p.last_action)
            .map(|a| (a, p.last_result));
        let mut failed = false;
        for _ in 0..16 {
            let order = self.general.orders.get(&id)?.clone();
            let progress = self.evaluate(kn, id, &order, last.take(), ctx, budget);
            match (&order, progress) {
                (_, pr @ (Progress::Act(_) | Progress::Coordinate)) => return Some(pr),
                (Order::Blocks { scenario, index }, pr) => {
                    let event = match pr {
                        Progress::Succeeded => AutomatonEvent::GoalSucceeded,
                        _ => AutomatonEvent::GoalFailed,
                    };
                    // one failure per step, so the retry cap counts steps
                    if event == AutomatonEvent::GoalFailed {
                        if failed {
                            return Some(Progress::Act(Action::Skip));
                        }
                        failed = true;
                    }
                    let before = self.soldiers[&id].automaton;
                    if !self.automaton_event(id, *scenario, *index, event, ctx) {
                        return None;
                    }
                    let after = self.soldiers[&id].automaton;
                    // a retry of the same goal waits for the next step
                    if event == AutomatonEvent::GoalFailed && before.map(|a| a.state) == after.map(|a| a.state) {
                        return Some(Progress::Act(Action::Skip));
                    }
                }
                (_, pr) => {
                    let s = self.soldiers.get_mut(&id).unwrap();
                    s.walk = None;
                    s.clear_target = None;
                    let report = match pr {
                        Progress::Succeeded => Report::Succeeded { agent: id },
                        _ => Report::Failed { agent: id },
                    };
                    self.general.pending.push_back(report);
                    return None;
                }
            }
        }
        None
    }

    /// Feeds an event to the soldier's automaton. Returns whether the
    /// soldier still has scenario goals to pursue.
    fn automaton_event(
        &mut self,
        id: AgentId,
        scenario: u32,
        index: usize,
        event: AutomatonEvent,
        ctx: &StepCtx<'_>,
    ) -> bool {
        let Some(s) = self.soldiers.get_mut(&id) else {
            return false;
        };
        let a = s.automaton.unwrap();
        let (n, goal) = step_automaton(&a, event);
        s.automaton = Some(n);
        if goal == NextGoal::RandomWalk && !a.detour {
            let pos = ctx.views[&id].pos;
            let target = walk_sync_goal(pos, 3, 6, &mut self.rng);
            s.walk = Some((target, ctx.now + 20));
        } else if goal != NextGoal::RandomWalk {
            s.walk = None;
        }
        if n.state != a.state || event != AutomatonEvent::GoalSucceeded {
            self.note(
                ctx.now,
                id,
                format!("scenario {scenario}: {:?} {:?} -> {:?}", event, a.state, n.state),
            );
        }
        match n.state {
            ScenarioState::Done => {
                self.general.pending.push_back(Report::Succeeded { agent: id });
                false
            }
            ScenarioState::Failed => {
                self.general.pending.push_back(Report::Failed { agent: id });
                false
            }
            _ => {
                let _ = index;
                true
            }
        }
    }

    fn evaluate(
        &mut self,
        kn: &Knowledge,
        id: AgentId,
        order: &Order,
        last: Option<(Action, ActionResult)>,
        ctx: &StepCtx<'_>,
        budget: &mut dyn Budget,
    ) -> Progress {
        let v = &ctx.views[&id];
        let map = kn.registry.group(v.group);
        // Moving agents with a higher claimant are expected to yield, which
        // keeps two agents from mirroring each other's detours forever.
        let members: Vec<&AgentView> = ctx
            .views
            .values()
            .filter(|o| o.group == v.group)
            .filter(|o| o.claimant() <= v.claimant() || is_stationary(&ctx.percepts[&o.id]))
            .collect();
        let planner = Planner::new(map, members.iter().copied(), self.config.max_iter);

        match order {
            Order::WalkSync => {
                if let Some(d) = v.links.iter().next() {
                    return Progress::Act(Action::Detach {
                        dir: d.as_dir().unwrap(),
                    });
                }
                let s = self.soldiers.get_mut(&id).unwrap();
                let (target, until) = *s.walk.get_or_insert_with(|| {
                    let t = walk_sync_goal(v.pos, self.config.walk_min, self.config.walk_max, &mut self.rng);
                    (t, ctx.now + 3 * self.config.walk_max + 5)
                });
                walk_progress(&planner, v, target, until, ctx.now, last, budget)
            }
            Order::SearchDestroy => {
                if let Some(d) = v.links.iter().next() {
                    return Progress::Act(Action::Detach {
                        dir: d.as_dir().unwrap(),
                    });
                }
                let charging = matches!(last, Some((Action::Clear { .. }, ActionResult::Charging)));
                let s = self.soldiers.get_mut(&id).unwrap();
                if s.given_up.0 != v.group {
                    s.given_up = (v.group, BTreeSet::new());
                }
                let target = match s.clear_target {
                    Some(t) => t,
                    None => match search_destroy_goal(map, v.pos, v.energy, self.world.clear_cost, &s.given_up.1) {
                        Some(t) => *s.clear_target.insert(t),
                        None => return Progress::Failed,
                    },
                };
                if let Some((Action::Clear { .. }, ActionResult::Failure(_))) = last {
                    s.given_up.1.insert(target);
                    return Progress::Failed;
                }
                if !matches!(map.state(target), CellState::Obstacle) {
                    return Progress::Succeeded;
                }
                if !charging && v.energy < self.world.clear_cost {
                    return Progress::Failed;
                }
                if (target - v.pos).manhattan() == 1 {
                    return Progress::Act(Action::Clear { target: target - v.pos });
                }
                match planner.plan_next_to(v, target, budget) {
                    Some(path) => Progress::Act(path[0].clone()),
                    None => {
                        self.soldiers.get_mut(&id).unwrap().given_up.1.insert(target);
                        Progress::Failed
                    }
                }
            }
            Order::Blocks { scenario, index } => {
                let Some(sc) = self.general.scenarios.get(scenario).cloned() else {
                    return Progress::Failed;
                };
                let s = self.soldiers.get_mut(&id).unwrap();
                let auto = *s
                    .automaton
                    .get_or_insert_with(|| ScenarioAutomaton::new(sc.role(*index)));
                self.blocks_progress(id, &sc, *index, auto, last, &planner, ctx, budget)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn blocks_progress(
        &mut self,
        id: AgentId,
        sc: &BlocksScenario,
        index: usize,
        auto: ScenarioAutomaton,
        last: Option<(Action, ActionResult)>,
        planner: &Planner<'_>,
        ctx: &StepCtx<'_>,
        budget: &mut dyn Budget,
    ) -> Progress {
        let v = &ctx.views[&id];
        let map = planner.map;
        let role = &sc.roles[index];
        let failed_last = matches!(last, Some((_, ActionResult::Failure(_))));

        if auto.detour {
            let (target, until) = self.soldiers[&id].walk.unwrap_or((v.pos, ctx.now));
            return walk_progress(planner, v, target, until, ctx.now, last, budget);
        }

        if let (ScenarioState::Submit, Some((Action::Submit { .. }, ActionResult::Success))) = (auto.state, &last) {
            return Progress::Succeeded;
        }
        let holding = matches!(
            auto.state,
            ScenarioState::GoToGoalPosition
                | ScenarioState::RotateBlock
                | ScenarioState::Connect
                | ScenarioState::Submit
        );
        if holding && v.links.is_empty() {
            let built = sc.connected.iter().any(|c| *c);
            if index == 0 && built {
                return Progress::Failed;
            }
            if !self.automaton_event(id, sc.id, index, AutomatonEvent::BlockLost, ctx) {
                return Progress::Failed;
            }
            let auto = self.soldiers[&id].automaton.unwrap();
            return self.blocks_progress(id, sc, index, auto, None, planner, ctx, budget);
        }

        match auto.state {
            ScenarioState::GoToDispenser => {
                let Some(d) = nearest_dispenser(map, v.pos, role.block_type) else {
                    return Progress::Failed;
                };
                if d.is_adjacent(v.pos) {
                    return Progress::Succeeded;
                }
                match planner.plan_next_to(v, d, budget) {
                    Some(path) => Progress::Act(path[0].clone()),
                    None => Progress::Failed,
                }
            }
            ScenarioState::GetBlock => {
                if let Some(o) = v.links.iter().next() {
                    if v.blocks.iter().any(|(c, t)| c == o && *t == role.block_type) {
                        return Progress::Succeeded;
                    }
                    // wrong block; drop it and start over
                    return Progress::Act(Action::Detach {
                        dir: o.as_dir().unwrap(),
                    });
                }
                if failed_last {
                    return Progress::Failed;
                }
                let d = v
                    .pos
                    .neighbors()
                    .into_iter()
                    .find(|c| map.dispensers().iter().any(|(p, t)| p == c && *t == role.block_type));
                let Some(d) = d else {
                    return Progress::Failed;
                };
                let dir = (d - v.pos).as_dir().unwrap();
                match map.fresh_occupant(d) {
                    Some(Occupant::Block(t)) if t == role.block_type => Progress::Act(Action::Attach { dir }),
                    Some(_) => Progress::Failed,
                    None => Progress::Act(Action::Request { dir }),
                }
            }
            ScenarioState::GoToGoalPosition => {
                // lieutenants keep out of the way until the commander is set
                if index > 0 && !member_at_least(self, sc, 0, ScenarioState::Connect) {
                    return Progress::Act(Action::Skip);
                }
                let target = sc.stance(index);
                if v.pos == target {
                    return Progress::Succeeded;
                }
                let own = *v.links.iter().next().unwrap();
                let need = role.block_offset();
                let rot = (0..4u8).find(|q| own.rotated(*q) == need).unwrap_or(0);
                match planner.plan(v, &[target], &|c, r| c == target && r == rot, false, budget) {
                    Some(path) => Progress::Act(path[0].clone()),
                    None => match planner.plan_to(v, target, budget) {
                        Some(path) => Progress::Act(path[0].clone()),
                        None => Progress::Failed,
                    },
                }
            }
            ScenarioState::RotateBlock => {
                if v.pos != sc.stance(index) {
                    return Progress::Failed;
                }
                let own = *v.links.iter().next().unwrap();
                let need = role.block_offset();
                if own == need {
                    return Progress::Succeeded;
                }
                if failed_last {
                    return Progress::Failed;
                }
                let turn = if own.rotated(3) == need { Turn::Ccw } else { Turn::Cw };
                Progress::Act(Action::Rotate { turn })
            }
            ScenarioState::Connect => {
                if let Some((Action::Connect { .. }, r)) = &last {
                    match r {
                        ActionResult::Success if index > 0 => {
                            if let Some(s) = self.general.scenarios.get_mut(&sc.id) {
                                s.connected[index - 1] = true;
                            }
                            return Progress::Succeeded;
                        }
                        ActionResult::Success => {
                            if let (Some((Action::Connect { partner, .. }, _)), Some(s)) =
                                (&last, self.general.scenarios.get_mut(&sc.id))
                            {
                                if let Some(i) = s.members.iter().position(|m| m == partner) {
                                    s.connected[i - 1] = true;
                                }
                            }
                        }
                        ActionResult::Failure(_) => return Progress::Failed,
                        _ => {}
                    }
                }
                if index == 0 {
                    let sc = &self.general.scenarios[&sc.id];
                    if sc.connected.iter().all(|c| *c) {
                        return Progress::Succeeded;
                    }
                }
                Progress::Coordinate
            }
            ScenarioState::Detach => {
                if v.links.is_empty() && v.partners.is_empty() {
                    return Progress::Succeeded;
                }
                if failed_last {
                    return Progress::Failed;
                }
                match v.links.iter().next() {
                    Some(o) => Progress::Act(Action::Detach {
                        dir: o.as_dir().unwrap(),
                    }),
                    None => Progress::Failed,
                }
            }
            ScenarioState::Submit => match &last {
                Some((Action::Submit { .. }, ActionResult::Success)) => Progress::Succeeded,
                Some((Action::Submit { .. }, ActionResult::Failure(_))) => Progress::Failed,
                _ if !v.partners.is_empty() || v.unknown_partner => Progress::Act(Action::Skip),
                _ => Progress::Act(Action::Submit { task: sc.task.clone() }),
            },
            ScenarioState::Done | ScenarioState::Failed => Progress::Act(Action::Skip),
        }
    }

    /// Whether lieutenant `lt` (1-based member index) and the commander
    /// connect this step. Both sides evaluate the same predicate.
    fn pair_ready(&self, sc: &BlocksScenario, lt: usize, views: &BTreeMap<AgentId, AgentView>) -> bool {
        let sc = &self.general.scenarios[&sc.id];
        if sc.connected[..lt - 1].iter().any(|c| !*c) || sc.connected[lt - 1] {
            return false;
        }
        let in_place = |index: usize| {
            let m = sc.members[index];
            let state = self.soldiers[&m].automaton.map(|a| (a.state, a.detour));
            let v = &views[&m];
            state == Some((ScenarioState::Connect, false))
                && v.pos == sc.stance(index)
                && v.links.contains(&sc.roles[index].block_offset())
                && matches!(self.general.orders.get(&m), Some(Order::Blocks { scenario, .. }) if *scenario == sc.id)
        };
        let commander = &views[&sc.members[0]];
        in_place(0) && in_place(lt) && commander.partners.is_empty() && views[&sc.members[lt]].partners.is_empty()
    }

    fn coordinate(&self, id: AgentId, views: &BTreeMap<AgentId, AgentView>) -> Action {
        let Some(Order::Blocks { scenario, index }) = self.general.orders.get(&id) else {
            return Action::Skip;
        };
        let Some(sc) = self.general.scenarios.get(scenario) else {
            return Action::Skip;
        };
        if *index == 0 {
            let Some(lt) = sc.connected.iter().position(|c| !*c).map(|i| i + 1) else {
                return Action::Skip;
            };
            if self.pair_ready(sc, lt, views) {
                return Action::Connect {
                    partner: sc.members[lt],
                    own: sc.roles[lt].connect_to.unwrap(),
                    partner_block: sc.roles[lt].block_offset(),
                };
            }
        } else if self.pair_ready(sc, *index, views) {
            return Action::Connect {
                partner: sc.members[0],
                own: sc.roles[*index].block_offset(),
                partner_block: sc.roles[*index].connect_to.unwrap(),
            };
        }
        Action::Skip
    }
}

fn member_at_least(e: &Command, sc: &BlocksScenario, index: usize, state: ScenarioState) -> bool {
    e.soldiers[&sc.members[index]]
        .automaton
        .is_some_and(|a| a.state >= state && !a.state.is_terminal())
}

fn is_stationary(p: &Percept) -> bool {
    !matches!(p.last_action, Action::Move { .. } | Action::Rotate { .. }) || !p.last_result.is_success()
}

fn nearest_dispenser(map: &crate::beliefs::GroupMap, pos: Coord, kind: crate::world::BlockType) -> Option<Coord> {
    map.dispensers()
        .into_iter()
        .filter(|(_, t)| *t == kind)
        .map(|(c, _)| c)
        .min_by_key(|c| (c.distance(pos), *c))
}

fn walk_progress(
    planner: &Planner<'_>,
    v: &AgentView,
    target: Coord,
    until: u32,
    now: u32,
    last: Option<(Action, ActionResult)>,
    budget: &mut dyn Budget,
) -> Progress {
    if v.pos == target {
        return Progress::Succeeded;
    }
    if now > until || matches!(last, Some((Action::Move { .. }, ActionResult::Failure(_)))) {
        return Progress::Failed;
    }
    match planner.plan_to(v, target, budget) {
        Some(path) => Progress::Act(path[0].clone()),
        None => Progress::Failed,
    }
}

impl TeamEngine for DeSouchesEngine {
    fn name(&self) -> &'static str {
        "desouches"
    }

    fn decide(&mut self, percepts: &BTreeMap<AgentId, Percept>, budget: &mut dyn Budget) -> BTreeMap<AgentId, Action> {
        let merges = self.knowledge.update(percepts);
        let now = self.knowledge.step();
        for info in merges {
            self.cmd.trace.push(TraceRecord::Merge { step: now, info });
        }
        let tasks: Vec<Task> = percepts.values().next().map(|p| p.tasks.clone()).unwrap_or_default();
        let views: BTreeMap<AgentId, AgentView> = percepts
            .iter()
            .map(|(&id, p)| (id, self.knowledge.view(id, p)))
            .collect();
        let ctx = StepCtx {
            now,
            views: &views,
            percepts,
        };

        let mut progress: BTreeMap<AgentId, Progress> = BTreeMap::new();
        for &id in percepts.keys() {
            if let Some(p) = self.cmd.settle(&self.knowledge, id, &ctx, budget) {
                progress.insert(id, p);
            }
        }

        let soldiers: BTreeMap<AgentId, SoldierInfo> = views
            .iter()
            .map(|(&id, v)| {
                (
                    id,
                    SoldierInfo {
                        group: v.group,
                        pos: v.pos,
                        unencumbered: v.links.is_empty() && v.is_alone(),
                        can_clear: v.energy >= self.cmd.world.clear_cost,
                    },
                )
            })
            .collect();
        let (orders, notes) = general_dispatch(
            &mut self.cmd.general,
            &mut self.knowledge.registry,
            &tasks,
            &soldiers,
            now,
            &self.cmd.config,
        );
        for note in notes {
            let (agent, detail) = match note {
                DispatchNote::Started {
                    scenario,
                    task,
                    members,
                } => (
                    members[0],
                    format!("scenario {scenario} started for {task} with {members:?}"),
                ),
                DispatchNote::Completed { scenario } => (0, format!("scenario {scenario} completed")),
                DispatchNote::Disbanded { scenario, reason } => (0, format!("scenario {scenario} disbanded: {reason}")),
                DispatchNote::Assigned { agent, order } => (agent, format!("assigned {order:?}")),
                DispatchNote::Mastergroup { group } => (0, format!("group {group} is the mastergroup")),
            };
            self.cmd.note(now, agent, detail);
        }
        // soldiers whose order changed start over
        for (&id, order) in &orders {
            let s = self.cmd.soldiers.entry(id).or_default();
            *s = Soldier::default();
            if let Order::Blocks { scenario, index } = order {
                let role = self.cmd.general.scenarios[scenario].role(*index);
                s.automaton = Some(ScenarioAutomaton::new(role));
            }
            progress.remove(&id);
        }
        for &id in percepts.keys() {
            if !self.cmd.general.orders.contains_key(&id) {
                self.cmd.soldiers.insert(id, Soldier::default());
            }
        }
        for &id in orders.keys() {
            if percepts.contains_key(&id) {
                if let Some(p) = self.cmd.settle(&self.knowledge, id, &ctx, budget) {
                    progress.insert(id, p);
                }
            }
        }

        let mut proposed: BTreeMap<AgentId, Action> = BTreeMap::new();
        for &id in percepts.keys() {
            let action = match progress.remove(&id) {
                Some(Progress::Act(a)) => a,
                Some(Progress::Coordinate) => self.cmd.coordinate(id, &views),
                _ => Action::Skip,
            };
            proposed.insert(id, action);
        }

        let mut res = ReservationMap::new(now);
        for v in views.values() {
            res.presence(v.claimant(), v.footprint());
        }
        let mut actions = BTreeMap::new();
        for (id, action) in proposed {
            let v = &views[&id];
            let verdict = if action == Action::Skip {
                crate::reservation::Verdict::Approved
            } else {
                res.reserve_action(v.claimant(), v.pos, &action, &v.footprint())
            };
            if action != Action::Skip {
                self.cmd.trace.push(TraceRecord::Reservation {
                    step: now,
                    agent: id,
                    group: v.group,
                    action: action.clone(),
                    verdict,
                });
            }
            let action = if verdict.is_approved() { action } else { Action::Skip };
            if let Some(s) = self.cmd.soldiers.get_mut(&id) {
                s.issued = (action != Action::Skip).then(|| action.clone());
            }
            actions.insert(id, action);
        }
        actions
    }

    fn knowledge(&self) -> Option<&Knowledge> {
        Some(&self.knowledge)
    }

    fn drain_trace(&mut self) -> Vec<TraceRecord> {
        core::mem::take(&mut self.cmd.trace)
    }
}

#[cfg(test)]
mod tests;
