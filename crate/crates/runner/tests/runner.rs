use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use mapc_core::team::TraceRecord;
use mapc_core::world::{Action, AgentId, WorldConfig};
use mapc_runner::{
    read_log, replay_verify, run_match, summarize, write_log, write_outputs, BudgetConfig, EngineKind, LogRecord,
    MatchConfig, ReplayError, TeamConfig,
};

fn team(name: &str, engine: EngineKind, agents: u32) -> TeamConfig {
    TeamConfig {
        name: name.into(),
        engine,
        agents,
        fitbut: Default::default(),
        desouches: Default::default(),
    }
}

fn small(seed: u64) -> MatchConfig {
    MatchConfig {
        world: WorldConfig {
            width: 24,
            height: 24,
            block_types: 1,
            ..WorldConfig::default()
        },
        teams: vec![
            team("F", EngineKind::Fitbut, 3),
            team("D", EngineKind::Desouches, 3),
            team("R", EngineKind::RandomBaseline, 2),
        ],
        steps: 80,
        seed,
        budget: BudgetConfig::Ops { per_step: 10_000 },
        verbosity: 2,
    }
}

fn mapc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mapc"))
}

#[test]
fn same_seed_gives_identical_log_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.jsonl"), dir.path().join("y.jsonl"));
    write_log(&x, &run_match(&small(3)).records).unwrap();
    write_log(&y, &run_match(&small(3)).records).unwrap();
    assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&y).unwrap());

    let z = dir.path().join("z.jsonl");
    write_log(&z, &run_match(&small(4)).records).unwrap();
    assert_ne!(std::fs::read(&x).unwrap(), std::fs::read(&z).unwrap());
}

#[test]
fn log_round_trips_and_replays() {
    let out = run_match(&small(5));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    write_log(&path, &out.records).unwrap();
    let back = read_log(&path).unwrap();
    assert_eq!(back, out.records);
    assert_eq!(replay_verify(&back), Ok(()));
}

fn mutate_first_move(records: &mut [LogRecord]) -> u32 {
    for r in records.iter_mut() {
        if let LogRecord::Step { step, actions, .. } = r {
            if let Some(a) = actions.values_mut().find(|a| matches!(a, Action::Move { .. })) {
                let Action::Move { dir } = *a else { unreachable!() };
                *a = Action::Move { dir: dir.opposite() };
                return *step;
            }
        }
    }
    panic!("no move in the log");
}

#[test]
fn mutated_action_diverges_at_its_step() {
    let mut records = run_match(&small(6)).records;
    let step = mutate_first_move(&mut records);
    assert_eq!(replay_verify(&records), Err(ReplayError::Divergence(step)));
}

#[test]
fn replay_rejects_a_foreign_initial_state() {
    let mut records = run_match(&small(6)).records;
    if let LogRecord::Header { config, .. } = &mut records[0] {
        config.seed += 1;
    }
    assert_eq!(replay_verify(&records), Err(ReplayError::InitialState));
    assert_eq!(replay_verify(&records[1..]), Err(ReplayError::MissingHeader));
}

#[test]
fn summary_is_derivable_from_the_log() {
    let out = run_match(&small(7));
    let mut live = out.summary.clone();
    assert!(live.wall_clock.is_some());
    live.wall_clock = None;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    write_log(&path, &out.records).unwrap();
    assert_eq!(summarize(&read_log(&path).unwrap()), Some(live.clone()));

    // scores agree with the final world
    for (i, name) in ["F", "D", "R"].iter().enumerate() {
        assert_eq!(live.teams[*name].score, out.world.score(i as u8));
    }
}

#[test]
fn steps_to_full_sync_matches_merge_traces() {
    let mut cfg = small(8);
    cfg.teams = vec![team("D", EngineKind::Desouches, 4)];
    cfg.steps = 300;
    let out = run_match(&cfg);
    let s = &out.summary.teams["D"];
    let mut groups = 4usize;
    let mut first_single = None;
    let mut step_of = 0;
    for r in &out.records {
        match r {
            LogRecord::Trace {
                record: TraceRecord::Merge { step, .. },
                ..
            } => {
                groups -= 1;
                step_of = *step;
            }
            LogRecord::Step { .. } if groups == 1 && first_single.is_none() => first_single = Some(step_of),
            _ => {}
        }
    }
    assert_eq!(s.steps_to_full_sync, first_single);
    assert_eq!(s.merges as usize, 4 - groups);
    assert_eq!(s.group_timeline.first().map(|e| e.0), Some(0));
    assert_eq!(s.group_timeline.last().map(|e| e.1), Some(groups));
}

#[test]
fn zero_task_config_scores_nothing() {
    let mut cfg = small(9);
    cfg.world.tasks.max_active = 0;
    let out = run_match(&cfg);
    assert!(out
        .summary
        .teams
        .values()
        .all(|t| t.score == 0 && t.tasks_completed == 0));
}

#[test]
fn desouches_retries_wait_for_the_next_step() {
    let mut per_step: BTreeMap<(u64, u32, AgentId), u32> = BTreeMap::new();
    for seed in 0..4 {
        let cfg = MatchConfig {
            world: WorldConfig::default(),
            teams: vec![team("D", EngineKind::Desouches, 6)],
            steps: 300,
            seed,
            budget: BudgetConfig::Ops { per_step: 50_000 },
            verbosity: 2,
        };
        for r in &run_match(&cfg).records {
            if let LogRecord::Trace {
                record: TraceRecord::Scenario { step, agent, detail },
                ..
            } = r
            {
                if detail.contains(": GoalFailed ") {
                    *per_step.entry((seed, *step, *agent)).or_default() += 1;
                }
            }
        }
    }
    assert!(!per_step.is_empty());
    assert!(per_step.values().all(|&n| n <= 1), "{per_step:?}");
}

fn write_config(dir: &Path, cfg: &MatchConfig) -> std::path::PathBuf {
    let path = dir.join("match.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

#[test]
fn cli_run_replay_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(1);
    cfg.steps = 30;
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let run = mapc()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "2", "--steps", "20", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("F (fitbut): score"));
    let log = out.join("events.jsonl");
    let records = read_log(&log).unwrap();
    match &records[0] {
        LogRecord::Header { config, .. } => assert_eq!((config.seed, config.steps), (2, 20)),
        r => panic!("{r:?}"),
    }

    let replay = mapc().args(["replay", "--log"]).arg(&log).output().unwrap();
    assert_eq!(replay.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&replay.stdout).trim(), "ok");

    let summary = mapc().args(["summarize", "--log"]).arg(&log).output().unwrap();
    assert_eq!(summary.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&summary.stdout).unwrap();
    assert_eq!(json["steps"], 20);
    let file: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["teams"], file["teams"]);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"teams\": [],\n  \"steps\": 5\n}\n").unwrap();
    let out = dir.path().join("out");
    let run = |config: &Path, extra: &[&str]| {
        mapc()
            .args(["run", "--config"])
            .arg(config)
            .arg("--out")
            .arg(&out)
            .args(extra)
            .output()
            .unwrap()
    };
    let r = run(&bad, &[]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("teams"));
    assert_eq!(run(&dir.path().join("missing.json"), &[]).status.code(), Some(2));

    let mut cfg = small(1);
    cfg.steps = 10;
    let good = write_config(dir.path(), &cfg);
    assert_eq!(run(&good, &["--steps", "0"]).status.code(), Some(2));
    assert_eq!(run(&good, &[]).status.code(), Some(0));

    // tamper with one action
    let log = out.join("events.jsonl");
    let mut records = read_log(&log).unwrap();
    let step = mutate_first_move(&mut records);
    write_log(&log, &records).unwrap();
    let replay = mapc().args(["replay", "--log"]).arg(&log).output().unwrap();
    assert_eq!(replay.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&replay.stdout).contains(&format!("step {step}")));
}

#[test]
fn outputs_land_in_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(2);
    cfg.steps = 5;
    let out = run_match(&cfg);
    write_outputs(&dir.path().join("nested"), &out).unwrap();
    assert!(dir.path().join("nested/events.jsonl").exists());
    assert!(dir.path().join("nested/summary.json").exists());
}
