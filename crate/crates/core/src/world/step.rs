use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::Rng;

use super::gen::random_shape;
use super::*;
use crate::geom::{Coord, Dir, Turn};

impl WorldState {
    /// Advances the world by one step.
    ///
    /// Agents without an entry in `actions` skip. Actions resolve in ascending
    /// agent id, then energy recharges, due clear events detonate, expired
    /// tasks are dropped, new tasks and clear events are drawn from the world
    /// generator and the step counter advances. Percepts describe the new state.
    pub fn step(&mut self, actions: &BTreeMap<AgentId, Action>) -> StepOutcome {
        let mut events = Vec::new();
        let now = self.step;
        let ids: Vec<AgentId> = self.agents.keys().copied().collect();
        let mut resolved: BTreeMap<AgentId, ActionResult> = BTreeMap::new();

        for &id in &ids {
            if resolved.contains_key(&id) {
                continue;
            }
            let action = actions.get(&id).cloned().unwrap_or(Action::Skip);
            let mut settled_partner = None;
            if !matches!(action, Action::Clear { .. }) {
                self.agents.get_mut(&id).unwrap().charge = None;
            }
            let result = match &action {
                Action::Skip => ActionResult::Success,
                Action::Move { dir } => self.move_component(id, *dir),
                Action::Rotate { turn } => self.rotate_component(id, *turn),
                Action::Attach { dir } => self.attach(id, *dir),
                Action::Detach { dir } => self.detach(id, *dir),
                Action::Request { dir } => self.request(id, *dir),
                Action::Clear { target } => self.resolve_clear(id, *target),
                Action::Submit { task } => {
                    let r = self.resolve_submit(id, task);
                    if r.is_success() {
                        let team = self.agents[&id].team;
                        let reward = self.tasks[task].reward;
                        events.push(MatchEvent::TaskCompleted {
                            step: now,
                            team,
                            agent: id,
                            task: task.clone(),
                            reward,
                        });
                        events.push(MatchEvent::ScoreChanged {
                            step: now,
                            team,
                            score: self.teams[team as usize].score,
                        });
                    }
                    r
                }
                Action::Connect {
                    partner,
                    own,
                    partner_block,
                } => {
                    let partner_action = actions.get(partner).cloned();
                    let (mine, theirs) =
                        self.connect(id, *partner, *own, *partner_block, partner_action.as_ref(), &resolved);
                    if let Some(theirs) = theirs {
                        self.agents.get_mut(partner).unwrap().charge = None;
                        settled_partner = Some((*partner, partner_action.unwrap(), theirs));
                    }
                    mine
                }
            };
            resolved.insert(id, result);
            self.record(id, action, result, now, &mut events);
            if let Some((p, pa, r)) = settled_partner {
                resolved.insert(p, r);
                self.record(p, pa, r, now, &mut events);
            }
        }

        for a in self.agents.values_mut() {
            a.energy = (a.energy + self.config.energy_recharge).min(self.config.max_energy);
        }

        self.detonate_due(now, &mut events);

        let next = now + 1;
        let expired: Vec<String> = self
            .tasks
            .values()
            .filter(|t| t.deadline < next)
            .map(|t| t.name.clone())
            .collect();
        for name in expired {
            self.tasks.remove(&name);
            self.expired_tasks.insert(name.clone());
            events.push(MatchEvent::TaskExpired { step: next, name });
        }

        self.step = next;
        self.spawn_random(&mut events);

        StepOutcome {
            percepts: self.all_percepts(),
            events,
        }
    }

    fn record(&mut self, id: AgentId, action: Action, result: ActionResult, step: u32, events: &mut Vec<MatchEvent>) {
        let a = self.agents.get_mut(&id).unwrap();
        a.last_action = action.clone();
        a.last_result = result;
        events.push(MatchEvent::Action {
            step,
            agent: id,
            action,
            result,
        });
    }

    /// Draws new tasks and clear events for the current step. Called once
    /// per step after the counter advances, and once at generation time.
    pub(crate) fn spawn_random(&mut self, events: &mut Vec<MatchEvent>) {
        let now = self.step;
        let tcfg = self.config.tasks.clone();
        if tcfg.max_active > 0 && now.is_multiple_of(tcfg.spawn_period) && (self.tasks.len() as u32) < tcfg.max_active {
            let size = tcfg.sizes[self.rng.gen_range(0..tcfg.sizes.len())];
            let shape = random_shape(&mut self.rng, size, self.config.block_types as BlockType);
            let name = alloc::format!("task{}", self.next_task_id);
            self.next_task_id += 1;
            let task = Task {
                name: name.clone(),
                reward: tcfg.reward_per_block as u64 * size as u64,
                deadline: now + tcfg.deadline,
                shape,
            };
            events.push(MatchEvent::TaskSpawned {
                step: now,
                task: task.clone(),
            });
            self.tasks.insert(name, task);
        }
        if self.config.clear_event_rate > 0.0 && self.rng.gen_bool(self.config.clear_event_rate) {
            let center = Coord::new(
                self.rng.gen_range(0..self.config.width as i32),
                self.rng.gen_range(0..self.config.height as i32),
            );
            let ev = ClearEvent {
                center,
                radius: self.config.clear_event_radius,
                detonation_step: now + self.config.clear_event_warn_steps,
            };
            events.push(MatchEvent::ClearScheduled {
                step: now,
                center,
                radius: ev.radius,
                detonation_step: ev.detonation_step,
            });
            self.clear_events.push(ev);
        }
    }

    fn detonate_due(&mut self, now: u32, events: &mut Vec<MatchEvent>) {
        let (due, pending): (Vec<ClearEvent>, Vec<ClearEvent>) = self
            .clear_events
            .iter()
            .copied()
            .partition(|e| e.detonation_step <= now);
        self.clear_events = pending;
        for ev in due {
            let r = ev.radius as i32;
            let mut destroyed = 0u32;
            for dy in -r..=r {
                for dx in -r..=r {
                    let c = ev.center + Coord::new(dx, dy);
                    if Coord::new(dx, dy).manhattan() > ev.radius || !self.in_bounds(c) {
                        continue;
                    }
                    if self.terrain(c) == Terrain::Obstacle {
                        self.set_terrain(c, Terrain::Free);
                    }
                    match self.occupant(c) {
                        Some(Entity::Block(b)) => {
                            self.remove_block(b);
                            self.counters.cleared += 1;
                            destroyed += 1;
                        }
                        Some(Entity::Agent(a)) => destroyed += self.strip_agent(a),
                        None => {}
                    }
                }
            }
            if self.config.obstacle_regrowth {
                for dy in -r..=r {
                    for dx in -r..=r {
                        let c = ev.center + Coord::new(dx, dy);
                        if Coord::new(dx, dy).manhattan() > ev.radius
                            || !self.in_bounds(c)
                            || self.terrain(c) != Terrain::Free
                            || self.occupant(c).is_some()
                        {
                            continue;
                        }
                        if self.rng.gen_bool(self.config.obstacle_density) {
                            self.set_terrain(c, Terrain::Obstacle);
                        }
                    }
                }
            }
            events.push(MatchEvent::ClearDetonated {
                step: now,
                center: ev.center,
                radius: ev.radius,
                blocks_destroyed: destroyed,
            });
        }
    }

    /// True when `c` may receive a member of `comp`: inside the grid, not an
    /// obstacle, and empty or already held by the same component.
    fn accepts(&self, c: Coord, comp: &BTreeSet<Entity>) -> bool {
        self.in_bounds(c) && self.terrain(c) != Terrain::Obstacle && self.occupant(c).is_none_or(|e| comp.contains(&e))
    }

    fn relocate(&mut self, moves: &[(Entity, Coord)]) {
        for (e, _) in moves {
            let old = self.pos_of(*e).unwrap();
            self.occupancy.remove(&old);
        }
        for &(e, to) in moves {
            match e {
                Entity::Agent(a) => self.agents.get_mut(&a).unwrap().pos = to,
                Entity::Block(b) => self.blocks.get_mut(&b).unwrap().pos = to,
            }
            self.occupancy.insert(to, e);
        }
    }

    /// Translates the agent's whole attachment component one cell. Other
    /// agents in the component are dragged along.
    pub fn move_component(&mut self, id: AgentId, dir: Dir) -> ActionResult {
        let comp = self.component(Entity::Agent(id));
        let d = dir.delta();
        let mut moves = Vec::with_capacity(comp.len());
        for &e in &comp {
            let to = self.pos_of(e).unwrap() + d;
            if !self.accepts(to, &comp) {
                return ActionResult::Failure(FailReason::PathBlocked);
            }
            moves.push((e, to));
        }
        self.relocate(&moves);
        ActionResult::Success
    }

    /// Rotates the agent's attached blocks a quarter turn about its cell.
    pub fn rotate_component(&mut self, id: AgentId, turn: Turn) -> ActionResult {
        let comp = self.component(Entity::Agent(id));
        if comp.iter().filter(|e| matches!(e, Entity::Agent(_))).count() > 1 {
            return ActionResult::Failure(FailReason::MultiAgentRotation);
        }
        let pivot = self.agents[&id].pos;
        let mut moves = Vec::new();
        for &e in &comp {
            if let Entity::Block(_) = e {
                let to = pivot + (self.pos_of(e).unwrap() - pivot).rotate(turn);
                if !self.accepts(to, &comp) {
                    return ActionResult::Failure(FailReason::PathBlocked);
                }
                moves.push((e, to));
            }
        }
        self.relocate(&moves);
        ActionResult::Success
    }

    fn attach(&mut self, id: AgentId, dir: Dir) -> ActionResult {
        let target = self.agents[&id].pos + dir.delta();
        let Some(Entity::Block(b)) = self.occupant(target) else {
            return ActionResult::Failure(FailReason::NoBlock);
        };
        let me = Entity::Agent(id);
        let block_comp = self.component(Entity::Block(b));
        if block_comp.contains(&me) && self.is_linked(me, Entity::Block(b)) {
            return ActionResult::Failure(FailReason::AttachedElsewhere);
        }
        if block_comp.iter().any(|e| matches!(e, Entity::Agent(a) if *a != id)) {
            return ActionResult::Failure(FailReason::AttachedElsewhere);
        }
        self.attachments.insert(ordered(me, Entity::Block(b)));
        ActionResult::Success
    }

    fn detach(&mut self, id: AgentId, dir: Dir) -> ActionResult {
        let target = self.agents[&id].pos + dir.delta();
        let me = Entity::Agent(id);
        match self.occupant(target) {
            Some(other) if self.attachments.remove(&ordered(me, other)) => ActionResult::Success,
            _ => ActionResult::Failure(FailReason::NotAttached),
        }
    }

    fn request(&mut self, id: AgentId, dir: Dir) -> ActionResult {
        let target = self.agents[&id].pos + dir.delta();
        let Terrain::Dispenser(kind) = self.terrain(target) else {
            return ActionResult::Failure(FailReason::NoDispenser);
        };
        if self.occupant(target).is_some() {
            return ActionResult::Failure(FailReason::Occupied);
        }
        self.spawn_block(target, kind);
        self.counters.created += 1;
        ActionResult::Success
    }

    /// Resolves a connect between `id` and `partner`. Returns the issuer's
    /// result plus the partner's result when the pair was settled together.
    fn connect(
        &mut self,
        id: AgentId,
        partner: AgentId,
        own: Coord,
        partner_block: Coord,
        partner_action: Option<&Action>,
        resolved: &BTreeMap<AgentId, ActionResult>,
    ) -> (ActionResult, Option<ActionResult>) {
        let fail = |r| (ActionResult::Failure(r), None);
        let Some(Action::Connect {
            partner: back,
            own: their_own,
            partner_block: their_view,
        }) = partner_action
        else {
            return fail(FailReason::PartnerMismatch);
        };
        if *back != id || partner == id || resolved.contains_key(&partner) {
            return fail(FailReason::PartnerMismatch);
        }
        let (Some(me), Some(them)) = (self.agents.get(&id), self.agents.get(&partner)) else {
            return fail(FailReason::PartnerMismatch);
        };
        if me.team != them.team {
            return fail(FailReason::PartnerMismatch);
        }
        let block_a = me.pos + own;
        let block_b = them.pos + *their_own;
        if them.pos + partner_block != block_b || me.pos + *their_view != block_a {
            return fail(FailReason::PartnerMismatch);
        }
        let both = |r| (ActionResult::Failure(r), Some(ActionResult::Failure(r)));
        let (Some(Entity::Block(ba)), Some(Entity::Block(bb))) = (self.occupant(block_a), self.occupant(block_b))
        else {
            return both(FailReason::NoBlock);
        };
        if !block_a.is_adjacent(block_b) {
            return both(FailReason::PartnerMismatch);
        }
        let comp_a = self.component(Entity::Agent(id));
        if !comp_a.contains(&Entity::Block(ba)) {
            return both(FailReason::NotAttached);
        }
        let comp_b = self.component(Entity::Agent(partner));
        if !comp_b.contains(&Entity::Block(bb)) || comp_b.contains(&Entity::Agent(id)) {
            return both(FailReason::NotAttached);
        }
        self.attachments.insert(ordered(Entity::Block(ba), Entity::Block(bb)));
        (ActionResult::Success, Some(ActionResult::Success))
    }

    /// One step of a clear action at `target` (relative to the agent).
    ///
    /// Each call with the same absolute target and enough energy adds one
    /// unit of charge; the clear fires once `clear_charge_steps` are reached.
    pub fn resolve_clear(&mut self, id: AgentId, target: Coord) -> ActionResult {
        let cfg_range = self.config.clear_range;
        let cost = self.config.clear_cost;
        let needed = self.config.clear_charge_steps;
        let agent = self.agents.get_mut(&id).unwrap();
        if target.manhattan() > cfg_range {
            agent.charge = None;
            return ActionResult::Failure(FailReason::OutOfRange);
        }
        if agent.energy < cost {
            agent.charge = None;
            return ActionResult::Failure(FailReason::InsufficientEnergy);
        }
        let abs = agent.pos + target;
        let steps = match agent.charge {
            Some(c) if c.target == abs => c.steps + 1,
            _ => 1,
        };
        if steps < needed {
            agent.charge = Some(Charge { target: abs, steps });
            return ActionResult::Charging;
        }
        agent.charge = None;
        if !self.in_bounds(abs) {
            return ActionResult::Failure(FailReason::OutOfBounds);
        }
        self.agents.get_mut(&id).unwrap().energy -= cost;
        if self.terrain(abs) == Terrain::Obstacle {
            self.set_terrain(abs, Terrain::Free);
        }
        match self.occupant(abs) {
            Some(Entity::Block(b)) => {
                self.remove_block(b);
                self.counters.cleared += 1;
            }
            Some(Entity::Agent(a)) => {
                self.strip_agent(a);
            }
            None => {}
        }
        ActionResult::Success
    }

    /// Checks and performs a submission of `task` by agent `id`.
    pub fn resolve_submit(&mut self, id: AgentId, task: &str) -> ActionResult {
        let fail = ActionResult::Failure;
        let Some(t) = self.tasks.get(task) else {
            return if self.expired_tasks.contains(task) {
                fail(FailReason::DeadlinePassed)
            } else {
                fail(FailReason::UnknownTask)
            };
        };
        if self.step > t.deadline {
            return fail(FailReason::DeadlinePassed);
        }
        let agent = &self.agents[&id];
        if self.terrain(agent.pos) != Terrain::Goal {
            return fail(FailReason::NotOnGoal);
        }
        let comp = self.component(Entity::Agent(id));
        if comp.iter().any(|e| matches!(e, Entity::Agent(a) if *a != id)) {
            return fail(FailReason::OtherAgentAttached);
        }
        let mut carried: Vec<ShapeEntry> = comp
            .iter()
            .filter_map(|e| match e {
                Entity::Block(b) => {
                    let blk = &self.blocks[b];
                    Some(ShapeEntry {
                        offset: blk.pos - agent.pos,
                        kind: blk.kind,
                    })
                }
                Entity::Agent(_) => None,
            })
            .collect();
        carried.sort();
        if carried.as_slice() != t.shape.entries() {
            return fail(FailReason::WrongStructure);
        }
        let reward = t.reward;
        let team = agent.team;
        for e in comp {
            if let Entity::Block(b) = e {
                self.remove_block(b);
                self.counters.submitted += 1;
            }
        }
        self.teams[team as usize].score += reward;
        ActionResult::Success
    }
}
