//! Match summaries, computed from log records alone.

use std::collections::BTreeMap;

use mapc_core::world::{Action, ActionResult};
use serde::{Deserialize, Serialize};

use crate::log::LogRecord;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TeamSummary {
    pub engine: String,
    pub agents: u32,
    pub score: u64,
    pub tasks_completed: u32,
    /// Submit actions issued.
    pub tasks_attempted: u32,
    /// First step after which the team's agents formed a single group.
    pub steps_to_full_sync: Option<u32>,
    /// (step, group count) at every change, starting with step 0.
    pub group_timeline: Vec<(u32, usize)>,
    pub merges: u32,
    /// Counts keyed by `kind/result`, e.g. `move/success`.
    pub actions: BTreeMap<String, u32>,
    pub friendly_conflicts: u32,
    pub cross_group_contention: u32,
    pub sync_violations: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WallClockStats {
    pub mean_ms: f64,
    pub max_ms: f64,
    pub p95_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub seed: u64,
    pub steps: u32,
    pub teams: BTreeMap<String, TeamSummary>,
    /// Decision time per step and team. Only known to the live run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<BTreeMap<String, WallClockStats>>,
}

impl WallClockStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return WallClockStats::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let idx = ((sorted.len() as f64 * 0.95).ceil() as usize).clamp(1, sorted.len()) - 1;
        WallClockStats {
            mean_ms: samples.iter().sum::<f64>() / samples.len() as f64,
            max_ms: *sorted.last().unwrap(),
            p95_ms: sorted[idx],
        }
    }
}

/// Rebuilds the summary from a log. Returns `None` without a header.
pub fn summarize(records: &[LogRecord]) -> Option<MatchSummary> {
    let Some(LogRecord::Header { config, agents, .. }) = records.first() else {
        return None;
    };
    let mut s = MatchSummary {
        seed: config.seed,
        steps: 0,
        ..MatchSummary::default()
    };
    for t in &config.teams {
        let engine = serde_json::to_value(t.engine)
            .ok()
            .and_then(|v| v.as_str().map(String::from));
        s.teams.insert(
            t.name.clone(),
            TeamSummary {
                engine: engine.unwrap_or_default(),
                agents: t.agents,
                ..TeamSummary::default()
            },
        );
    }
    for r in records {
        match r {
            LogRecord::Step {
                step,
                actions,
                results,
                teams,
                ..
            } => {
                s.steps = s.steps.max(step + 1);
                for (id, action) in actions {
                    let Some(team) = agents.get(id).and_then(|n| s.teams.get_mut(n)) else {
                        continue;
                    };
                    let result = results.get(id).copied().unwrap_or(ActionResult::Success);
                    *team
                        .actions
                        .entry(format!("{}/{}", action.kind_name(), result.label()))
                        .or_default() += 1;
                    if let Action::Submit { .. } = action {
                        team.tasks_attempted += 1;
                        if result.is_success() {
                            team.tasks_completed += 1;
                        }
                    }
                }
                for (name, ts) in teams {
                    let Some(team) = s.teams.get_mut(name) else {
                        continue;
                    };
                    team.friendly_conflicts += ts.conflicts;
                    team.cross_group_contention += ts.cross_group_contention;
                    team.sync_violations += ts.sync_violations;
                    team.merges += ts.merges;
                    if ts.groups == 0 {
                        // engine keeps no shared beliefs
                        continue;
                    }
                    match team.group_timeline.last() {
                        Some(&(_, prev)) if prev == ts.groups => {}
                        _ => team.group_timeline.push((*step, ts.groups)),
                    }
                    if ts.groups == 1 && team.steps_to_full_sync.is_none() {
                        team.steps_to_full_sync = Some(*step);
                    }
                }
            }
            LogRecord::End { scores, .. } => {
                for (name, score) in scores {
                    if let Some(team) = s.teams.get_mut(name) {
                        team.score = *score;
                    }
                }
            }
            _ => {}
        }
    }
    Some(s)
}
