//! Running, replaying and hashing matches.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use mapc_core::budget::{Budget, OpBudget, Unlimited};
use mapc_core::desouches::DeSouchesEngine;
use mapc_core::fitbut::FitButEngine;
use mapc_core::team::{RandomTeam, TeamEngine, TraceRecord};
use mapc_core::world::{Action, AgentId, WorldState};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{BudgetConfig, EngineKind, MatchConfig, TeamConfig};
use crate::log::{write_log, LogError, LogRecord, TeamStep, LOG_VERSION};
use crate::metrics::{friendly_conflicts, sync_violations};
use crate::summary::{summarize, MatchSummary, WallClockStats};

/// Stops a team's group reasoning once its time is up.
pub struct WallClockBudget {
    start: Instant,
    limit: Duration,
}

impl WallClockBudget {
    pub fn new(limit: Duration) -> Self {
        WallClockBudget {
            start: Instant::now(),
            limit,
        }
    }
}

impl Budget for WallClockBudget {
    fn charge(&mut self, _ops: u64) {}

    fn exhausted(&self) -> bool {
        self.start.elapsed() >= self.limit
    }
}

/// SHA-256 over the canonical JSON form of the world, hex encoded.
pub fn state_hash(world: &WorldState) -> String {
    let bytes = serde_json::to_vec(world).expect("world state serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn build_world(cfg: &MatchConfig) -> WorldState {
    let teams: Vec<(String, u32)> = cfg.teams.iter().map(|t| (t.name.clone(), t.agents)).collect();
    WorldState::generate(cfg.world.clone(), &teams, cfg.seed)
}

fn make_engine(team: &TeamConfig, agents: Vec<AgentId>, cfg: &MatchConfig, index: usize) -> Box<dyn TeamEngine> {
    let seed = cfg
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64 + 1);
    match team.engine {
        EngineKind::Fitbut => Box::new(FitButEngine::new(agents, cfg.world.clone(), team.fitbut.clone())),
        EngineKind::Desouches => Box::new(DeSouchesEngine::new(
            agents,
            cfg.world.clone(),
            team.desouches.clone(),
            seed,
        )),
        EngineKind::RandomBaseline => Box::new(RandomTeam::new(seed)),
    }
}

fn make_budget(cfg: &MatchConfig, team: &TeamConfig) -> Box<dyn Budget> {
    match cfg.budget {
        BudgetConfig::WallClock { ms } => {
            let ms = match team.engine {
                EngineKind::Fitbut => team.fitbut.step_time_budget_ms,
                _ => ms,
            };
            Box::new(WallClockBudget::new(Duration::from_millis(ms)))
        }
        BudgetConfig::Ops { per_step } => Box::new(OpBudget::new(per_step)),
        BudgetConfig::Unlimited => Box::new(Unlimited),
    }
}

/// What an observer sees after one team has decided, before the world
/// steps.
pub struct Observation<'a> {
    pub step: u32,
    pub team: usize,
    pub world: &'a WorldState,
    pub engine: &'a dyn TeamEngine,
    pub trace: &'a [TraceRecord],
    pub actions: &'a BTreeMap<AgentId, Action>,
}

pub struct MatchOutput {
    pub records: Vec<LogRecord>,
    pub summary: MatchSummary,
    pub world: WorldState,
}

/// Plays a whole match. Everything except the wall-clock statistics is a
/// pure function of the configuration as long as the budget is not a
/// wall clock that actually runs out.
pub fn run_match(cfg: &MatchConfig) -> MatchOutput {
    run_match_observed(cfg, |_| {})
}

/// [`run_match`] with a callback after every team decision, for checks
/// against ground truth that need the engines' internal state.
pub fn run_match_observed(cfg: &MatchConfig, mut observe: impl FnMut(&Observation<'_>)) -> MatchOutput {
    let mut world = build_world(cfg);
    let team_of: BTreeMap<AgentId, usize> = world.agents().map(|a| (a.id, a.team as usize)).collect();
    let agents: BTreeMap<AgentId, String> = team_of.iter().map(|(&a, &t)| (a, cfg.teams[t].name.clone())).collect();
    let mut records = vec![
        LogRecord::Header {
            version: LOG_VERSION,
            config: cfg.clone(),
            agents,
        },
        LogRecord::Init {
            hash: state_hash(&world),
        },
    ];

    let mut engines: Vec<Box<dyn TeamEngine>> = cfg
        .teams
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let ids = team_of.iter().filter(|(_, &ti)| ti == i).map(|(&a, _)| a).collect();
            make_engine(t, ids, cfg, i)
        })
        .collect();
    let mut timing: Vec<Vec<f64>> = vec![Vec::new(); cfg.teams.len()];

    let mut percepts = world.all_percepts();
    for step in 0..cfg.steps {
        let mut actions: BTreeMap<AgentId, Action> = BTreeMap::new();
        let mut teams = BTreeMap::new();
        for (i, engine) in engines.iter_mut().enumerate() {
            let team = &cfg.teams[i];
            let mine: BTreeMap<_, _> = percepts
                .iter()
                .filter(|(id, _)| team_of[*id] == i)
                .map(|(id, p)| (*id, p.clone()))
                .collect();
            let mut budget = make_budget(cfg, team);
            let t0 = Instant::now();
            let mut decided = engine.decide(&mine, budget.as_mut());
            timing[i].push(t0.elapsed().as_secs_f64() * 1000.0);
            decided.retain(|id, _| mine.contains_key(id));
            for id in mine.keys() {
                decided.entry(*id).or_insert(Action::Skip);
            }

            let trace = engine.drain_trace();
            observe(&Observation {
                step,
                team: i,
                world: &world,
                engine: engine.as_ref(),
                trace: &trace,
                actions: &decided,
            });
            let merges = trace.iter().filter(|t| matches!(t, TraceRecord::Merge { .. })).count() as u32;
            if cfg.verbosity >= 2 {
                records.extend(trace.into_iter().map(|record| LogRecord::Trace {
                    team: team.name.clone(),
                    record,
                }));
            }
            let knowledge = engine.knowledge();
            let (conflicts, cross) =
                friendly_conflicts(&world, &decided, |a| knowledge.map(|k| k.registry.group_of(a)));
            teams.insert(
                team.name.clone(),
                TeamStep {
                    groups: knowledge.map_or(0, |k| k.registry.group_count()),
                    merges,
                    conflicts,
                    cross_group_contention: cross,
                    sync_violations: knowledge.map_or(0, |k| sync_violations(&world, k)),
                },
            );
            actions.extend(decided);
        }

        let outcome = world.step(&actions);
        let results = outcome.percepts.iter().map(|(id, p)| (*id, p.last_result)).collect();
        records.push(LogRecord::Step {
            step,
            actions,
            results,
            teams,
            hash: state_hash(&world),
        });
        if cfg.verbosity >= 1 {
            records.extend(outcome.events.into_iter().map(|event| LogRecord::World { event }));
        }
        percepts = outcome.percepts;
    }

    let scores = cfg
        .teams
        .iter()
        .enumerate()
        .map(|(i, t)| (t.name.clone(), world.score(i as u8)))
        .collect();
    records.push(LogRecord::End {
        steps: cfg.steps,
        scores,
    });
    let mut summary = summarize(&records).expect("header present");
    summary.wall_clock = Some(
        cfg.teams
            .iter()
            .zip(&timing)
            .map(|(t, samples)| (t.name.clone(), WallClockStats::from_samples(samples)))
            .collect(),
    );
    MatchOutput {
        records,
        summary,
        world,
    }
}

/// Writes `events.jsonl` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, out: &MatchOutput) -> Result<(), LogError> {
    std::fs::create_dir_all(dir)?;
    write_log(&dir.join("events.jsonl"), &out.records)?;
    let summary = serde_json::to_string_pretty(&out.summary).map_err(std::io::Error::from)?;
    std::fs::write(dir.join("summary.json"), summary + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("log has no header")]
    MissingHeader,
    #[error("initial state differs")]
    InitialState,
    #[error("divergence at step {0}")]
    Divergence(u32),
    #[error("final scores differ")]
    Scores,
}

/// Re-simulates the logged actions from the logged configuration and
/// compares every state hash.
pub fn replay_verify(records: &[LogRecord]) -> Result<(), ReplayError> {
    let Some(LogRecord::Header { config, .. }) = records.first() else {
        return Err(ReplayError::MissingHeader);
    };
    let mut world = build_world(config);
    for r in &records[1..] {
        match r {
            LogRecord::Init { hash } if *hash != state_hash(&world) => return Err(ReplayError::InitialState),
            LogRecord::Step {
                step, actions, hash, ..
            } => {
                if *step != world.step_index() {
                    return Err(ReplayError::Divergence(*step));
                }
                world.step(actions);
                if state_hash(&world) != *hash {
                    return Err(ReplayError::Divergence(*step));
                }
            }
            LogRecord::End { scores, .. } => {
                for (i, t) in config.teams.iter().enumerate() {
                    if scores.get(&t.name).copied() != Some(world.score(i as u8)) {
                        return Err(ReplayError::Scores);
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}
