use super::*;
use crate::budget::Unlimited;
use crate::world::{ShapeEntry, TaskShape, Terrain, WorldState};
use alloc::collections::BTreeSet;
use alloc::vec;

fn empty_world(w: u32, h: u32) -> WorldState {
    let mut c = WorldConfig {
        width: w,
        height: h,
        obstacle_density: 0.0,
        clear_event_rate: 0.0,
        ..WorldConfig::default()
    };
    c.tasks.max_active = 0;
    let mut world = WorldState::empty(c, 0);
    world.add_team("A");
    world
}

fn two_block_task(deadline: u32) -> Task {
    Task {
        name: "t0".into(),
        reward: 20,
        deadline,
        shape: TaskShape::new(vec![
            ShapeEntry {
                offset: Coord::new(0, 1),
                kind: 0,
            },
            ShapeEntry {
                offset: Coord::new(0, 2),
                kind: 1,
            },
        ]),
    }
}

fn infos(k: &Knowledge, w: &WorldState) -> BTreeMap<AgentId, SoldierInfo> {
    let p = w.all_percepts();
    p.iter()
        .map(|(&id, p)| {
            let v = k.view(id, p);
            (
                id,
                SoldierInfo {
                    group: v.group,
                    pos: v.pos,
                    unencumbered: v.links.is_empty() && v.is_alone(),
                    can_clear: v.energy >= w.config.clear_cost,
                },
            )
        })
        .collect()
}

#[test]
fn unsynced_idle_agents_all_walk() {
    let mut w = empty_world(40, 40);
    let ids: Vec<AgentId> = [(2, 2), (30, 2), (2, 30), (30, 30)]
        .iter()
        .map(|&(x, y)| w.add_agent(0, Coord::new(x, y)))
        .collect();
    let mut k = Knowledge::new(ids.iter().copied());
    k.update(&w.all_percepts());
    let mut gs = GeneralState::default();
    let info = infos(&k, &w);
    let (orders, _) = general_dispatch(&mut gs, &mut k.registry, &[], &info, 0, &DesouchesConfig::default());
    assert_eq!(orders.len(), 4);
    assert!(orders.values().all(|o| *o == Order::WalkSync));
    assert_eq!(k.registry.master(), None);
}

#[test]
fn qualifying_group_starts_scenario_and_becomes_master() {
    let mut w = empty_world(20, 20);
    let a = w.add_agent(0, Coord::new(8, 8));
    let b = w.add_agent(0, Coord::new(10, 8));
    let lone = w.add_agent(0, Coord::new(18, 18));
    w.set_terrain(Coord::new(6, 8), Terrain::Dispenser(0));
    w.set_terrain(Coord::new(12, 8), Terrain::Dispenser(1));
    w.set_terrain(Coord::new(9, 5), Terrain::Goal);
    let mut k = Knowledge::new([a, b, lone]);
    k.update(&w.all_percepts());
    assert!(k.registry.same_group(a, b));
    let mut gs = GeneralState::default();
    let task = two_block_task(100);
    let info = infos(&k, &w);
    let (orders, notes) = general_dispatch(&mut gs, &mut k.registry, &[task], &info, 0, &DesouchesConfig::default());
    assert!(matches!(orders[&a], Order::Blocks { .. }));
    assert!(matches!(orders[&b], Order::Blocks { .. }));
    assert_eq!(orders[&lone], Order::WalkSync);
    assert_eq!(k.registry.master(), Some(k.registry.group_of(a)));
    assert!(notes.iter().any(|n| matches!(n, DispatchNote::Mastergroup { .. })));
    let sc = gs.scenarios.values().next().unwrap();
    assert_eq!(sc.members.len(), 2);
}

/// Same layout as above without the lone agent.
fn pair_setup() -> (WorldState, Knowledge, AgentId) {
    let mut w = empty_world(20, 20);
    let a = w.add_agent(0, Coord::new(8, 8));
    let b = w.add_agent(0, Coord::new(10, 8));
    w.set_terrain(Coord::new(6, 8), Terrain::Dispenser(0));
    w.set_terrain(Coord::new(12, 8), Terrain::Dispenser(1));
    w.set_terrain(Coord::new(9, 5), Terrain::Goal);
    let mut k = Knowledge::new([a, b]);
    k.update(&w.all_percepts());
    (w, k, a)
}

#[test]
fn task_must_be_reachable_before_its_deadline() {
    // each agent is 2 from its dispenser, which is 6 from the goal: 8 steps,
    // 12 with the 150% margin, plus 4 per block
    for (deadline, margin, starts) in [(20, 150, true), (19, 150, false), (24, 200, true), (23, 200, false)] {
        let (w, mut k, _) = pair_setup();
        let mut gs = GeneralState::default();
        let cfg = DesouchesConfig {
            travel_margin_pct: margin,
            ..DesouchesConfig::default()
        };
        let info = infos(&k, &w);
        general_dispatch(&mut gs, &mut k.registry, &[two_block_task(deadline)], &info, 0, &cfg);
        assert_eq!(!gs.scenarios.is_empty(), starts, "deadline {deadline}, margin {margin}");
    }
}

#[test]
fn failed_goal_is_not_chosen_again() {
    let (w, mut k, a) = pair_setup();
    let mut gs = GeneralState::default();
    let cfg = DesouchesConfig::default();
    let info = infos(&k, &w);
    let task = two_block_task(100);
    general_dispatch(&mut gs, &mut k.registry, core::slice::from_ref(&task), &info, 0, &cfg);
    let goal = gs.scenarios.values().next().unwrap().goal;
    gs.pending.push_back(Report::Failed { agent: a });
    let (_, notes) = general_dispatch(&mut gs, &mut k.registry, &[task], &info, 1, &cfg);
    assert!(notes.iter().any(|n| matches!(n, DispatchNote::Disbanded { .. })));
    assert!(gs.failed_goals.contains(&(k.registry.group_of(a), goal)));
    // the only goal cell is ruled out, so nothing restarts
    assert!(gs.scenarios.is_empty());
}

#[test]
fn group_missing_a_dispenser_type_does_not_qualify() {
    let mut w = empty_world(20, 20);
    let a = w.add_agent(0, Coord::new(8, 8));
    let b = w.add_agent(0, Coord::new(10, 8));
    w.set_terrain(Coord::new(6, 8), Terrain::Dispenser(0));
    w.set_terrain(Coord::new(9, 5), Terrain::Goal);
    let mut k = Knowledge::new([a, b]);
    k.update(&w.all_percepts());
    let mut gs = GeneralState::default();
    let info = infos(&k, &w);
    let (orders, _) = general_dispatch(
        &mut gs,
        &mut k.registry,
        &[two_block_task(100)],
        &info,
        0,
        &DesouchesConfig::default(),
    );
    assert!(orders.values().all(|o| !matches!(o, Order::Blocks { .. })));
    assert_eq!(k.registry.master(), None);
}

#[test]
fn lapsed_deadline_disbands_and_reassigns() {
    let mut w = empty_world(20, 20);
    let a = w.add_agent(0, Coord::new(8, 8));
    let b = w.add_agent(0, Coord::new(10, 8));
    w.set_terrain(Coord::new(6, 8), Terrain::Dispenser(0));
    w.set_terrain(Coord::new(12, 8), Terrain::Dispenser(1));
    w.set_terrain(Coord::new(9, 5), Terrain::Goal);
    let mut k = Knowledge::new([a, b]);
    k.update(&w.all_percepts());
    let mut gs = GeneralState::default();
    let cfg = DesouchesConfig::default();
    let task = two_block_task(30);
    let info = infos(&k, &w);
    general_dispatch(&mut gs, &mut k.registry, std::slice::from_ref(&task), &info, 0, &cfg);
    assert_eq!(gs.scenarios.len(), 1);
    let (orders, notes) = general_dispatch(&mut gs, &mut k.registry, &[task], &info, 31, &cfg);
    assert!(gs.scenarios.is_empty());
    assert!(notes.iter().any(|n| matches!(n, DispatchNote::Disbanded { .. })));
    assert!(matches!(orders[&a], Order::WalkSync | Order::SearchDestroy));
    assert!(matches!(orders[&b], Order::WalkSync | Order::SearchDestroy));
}

#[test]
fn mastergroup_survives_every_merge() {
    use rand::seq::SliceRandom;
    for seed in 0..20u64 {
        let mut rng = SimRng::seed_from_u64(seed);
        let agents: Vec<AgentId> = (0..6).collect();
        let mut reg = SyncRegistry::new(agents.iter().copied());
        let master = reg.group_of(agents[rng.gen_range(0..6)]);
        assert!(reg.set_master(master));
        let mut order = agents.clone();
        order.shuffle(&mut rng);
        for pair in order.windows(2) {
            let d = Coord::new(rng.gen_range(-5..=5), rng.gen_range(-5..=5));
            reg.merge_groups(pair[0], pair[1], d);
            assert_eq!(reg.master(), Some(master));
            assert!(reg.groups().any(|g| g.group_id == master));
            assert!(!reg.set_master(reg.group_of(pair[0])) || reg.group_of(pair[0]) == master);
        }
        assert_eq!(reg.group_count(), 1);
        assert_eq!(reg.group_of(agents[0]), master);
    }
}

#[test]
fn walk_goal_distance_in_range() {
    let mut rng = SimRng::seed_from_u64(3);
    let from = Coord::new(20, 20);
    let mut seen = BTreeSet::new();
    for _ in 0..2000 {
        let t = walk_sync_goal(from, 5, 15, &mut rng);
        let d = from.distance(t);
        assert!((5..=15).contains(&d), "{d}");
        seen.insert(d);
    }
    assert_eq!(seen.len(), 11);
}

#[test]
fn search_destroy_targets_nearest_and_checks_energy() {
    let mut w = empty_world(20, 20);
    let a = w.add_agent(0, Coord::new(8, 8));
    w.set_terrain(Coord::new(10, 8), Terrain::Obstacle);
    w.set_terrain(Coord::new(8, 12), Terrain::Obstacle);
    let mut k = Knowledge::new([a]);
    k.update(&w.all_percepts());
    let map = k.map_of(a);
    let pos = map.member_pos(a).unwrap();
    let t = search_destroy_goal(map, pos, 300, 30, &BTreeSet::new()).unwrap();
    assert_eq!(t - pos, Coord::new(2, 0));
    assert_eq!(search_destroy_goal(map, pos, 29, 30, &BTreeSet::new()), None);

    let mut w2 = empty_world(20, 20);
    let b = w2.add_agent(0, Coord::new(8, 8));
    let mut k2 = Knowledge::new([b]);
    k2.update(&w2.all_percepts());
    assert_eq!(
        search_destroy_goal(k2.map_of(b), Coord::ORIGIN, 300, 30, &BTreeSet::new()),
        None
    );
}

#[test]
fn search_destroy_clears_an_obstacle_in_a_synced_team() {
    let mut w = empty_world(20, 20);
    let a = w.add_agent(0, Coord::new(8, 8));
    w.set_terrain(Coord::new(11, 8), Terrain::Obstacle);
    let mut e = DeSouchesEngine::new([a], w.config.clone(), DesouchesConfig::default(), 1);
    let mut p = w.all_percepts();
    for _ in 0..12 {
        let acts = e.decide(&p, &mut Unlimited);
        p = w.step(&acts).percepts;
    }
    assert_eq!(w.terrain(Coord::new(11, 8)), Terrain::Free);
}

#[test]
fn drained_agents_walk_instead_of_clearing() {
    let mut w = empty_world(20, 20);
    let a = w.add_agent(0, Coord::new(8, 8));
    w.set_terrain(Coord::new(10, 8), Terrain::Obstacle);
    w.agent_mut(a).unwrap().energy = 0;
    w.config.energy_recharge = 0;
    let mut e = DeSouchesEngine::new([a], w.config.clone(), DesouchesConfig::default(), 1);
    let mut p = w.all_percepts();
    for _ in 0..6 {
        let acts = e.decide(&p, &mut Unlimited);
        assert!(!matches!(acts[&a], Action::Clear { .. }));
        assert_eq!(e.general().orders.get(&a), Some(&Order::WalkSync));
        p = w.step(&acts).percepts;
    }
    assert_eq!(w.terrain(Coord::new(10, 8)), Terrain::Obstacle);
}

#[test]
fn unclearable_obstacle_is_given_up() {
    // the only obstacles are outside the grid, where clearing fails
    let mut w = empty_world(12, 12);
    let a = w.add_agent(0, Coord::new(1, 5));
    let mut e = DeSouchesEngine::new([a], w.config.clone(), DesouchesConfig::default(), 1);
    let mut p = w.all_percepts();
    let mut targets = BTreeSet::new();
    for _ in 0..40 {
        let acts = e.decide(&p, &mut Unlimited);
        if let Action::Clear { target } = acts[&a] {
            targets.insert(w.agent(a).unwrap().pos + target);
        }
        p = w.step(&acts).percepts;
    }
    assert!(targets.len() >= 2, "{targets:?}");
    assert!(targets.iter().all(|&c| !w.in_bounds(c)));
}

/// Runs the engine on a world and returns every action it sent.
fn run(w: &mut WorldState, e: &mut DeSouchesEngine, steps: u32) -> Vec<BTreeMap<AgentId, Action>> {
    let mut p = w.all_percepts();
    let mut log = Vec::new();
    for _ in 0..steps {
        let acts = e.decide(&p, &mut Unlimited);
        p = w.step(&acts).percepts;
        w.check_invariants().unwrap();
        log.push(acts);
        if w.score(0) > 0 {
            break;
        }
    }
    log
}

#[test]
fn scripted_two_block_scenario_submits() {
    let mut w = empty_world(20, 20);
    let a = w.add_agent(0, Coord::new(7, 10));
    let b = w.add_agent(0, Coord::new(11, 10));
    w.set_terrain(Coord::new(5, 10), Terrain::Dispenser(0));
    w.set_terrain(Coord::new(13, 10), Terrain::Dispenser(1));
    w.set_terrain(Coord::new(9, 7), Terrain::Goal);
    w.add_task(two_block_task(200));
    let mut e = DeSouchesEngine::new([a, b], w.config.clone(), DesouchesConfig::default(), 7);
    let log = run(&mut w, &mut e, 150);
    assert_eq!(w.score(0), 20, "no submit within {} steps", log.len());

    let submitted: Vec<AgentId> = [a, b]
        .into_iter()
        .filter(|id| log.iter().any(|s| matches!(s.get(id), Some(Action::Submit { .. }))))
        .collect();
    assert_eq!(submitted.len(), 1);
    let lieutenant = if submitted[0] == a { b } else { a };
    assert!(log
        .iter()
        .any(|s| matches!(s.get(&lieutenant), Some(Action::Detach { .. }))));
}

#[test]
fn three_block_scenario_submits() {
    let mut w = empty_world(24, 24);
    let ids: Vec<AgentId> = [(8, 12), (12, 12), (10, 14)]
        .iter()
        .map(|&(x, y)| w.add_agent(0, Coord::new(x, y)))
        .collect();
    w.set_terrain(Coord::new(6, 12), Terrain::Dispenser(0));
    w.set_terrain(Coord::new(14, 12), Terrain::Dispenser(1));
    w.set_terrain(Coord::new(10, 8), Terrain::Goal);
    let mut task = two_block_task(300);
    task.shape = TaskShape::new(vec![
        ShapeEntry {
            offset: Coord::new(0, 1),
            kind: 0,
        },
        ShapeEntry {
            offset: Coord::new(1, 1),
            kind: 1,
        },
        ShapeEntry {
            offset: Coord::new(-1, 1),
            kind: 1,
        },
    ]);
    task.reward = 30;
    w.add_task(task);
    let mut e = DeSouchesEngine::new(ids.iter().copied(), w.config.clone(), DesouchesConfig::default(), 3);
    let log = run(&mut w, &mut e, 250);
    if w.score(0) != 30 {
        for t in e.drain_trace() {
            if let TraceRecord::Scenario { step, agent, detail } = t {
                if !detail.starts_with("assigned") {
                    std::println!("{step} {agent} {detail}");
                }
            }
        }
        for (i, s) in log.iter().enumerate().take(120) {
            std::println!("{i} {s:?}");
        }
    }
    assert_eq!(w.score(0), 30, "no submit within {} steps", log.len());
}
