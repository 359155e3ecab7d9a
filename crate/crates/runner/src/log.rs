//! The JSON-lines event log.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use mapc_core::team::TraceRecord;
use mapc_core::world::{Action, ActionResult, AgentId, MatchEvent};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::MatchConfig;

pub const LOG_VERSION: u32 = 1;

/// Per-team figures recorded every step.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamStep {
    /// Groups in the team's sync registry after deciding; 0 for engines
    /// without shared beliefs.
    pub groups: usize,
    /// Group merges performed while deciding this step.
    pub merges: u32,
    /// Pairs of same-group components whose possible cells overlap.
    pub conflicts: u32,
    /// Same as `conflicts`, for components in different groups.
    pub cross_group_contention: u32,
    /// Groups whose frame disagrees with ground truth.
    pub sync_violations: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        version: u32,
        config: MatchConfig,
        /// Team name of every agent.
        #[serde(with = "agent_keys")]
        agents: BTreeMap<AgentId, String>,
    },
    /// State hash of the freshly generated world.
    Init {
        hash: String,
    },
    Step {
        step: u32,
        #[serde(with = "agent_keys")]
        actions: BTreeMap<AgentId, Action>,
        #[serde(with = "agent_keys")]
        results: BTreeMap<AgentId, ActionResult>,
        teams: BTreeMap<String, TeamStep>,
        /// State hash after the step.
        hash: String,
    },
    World {
        event: MatchEvent,
    },
    Trace {
        team: String,
        record: TraceRecord,
    },
    End {
        steps: u32,
        scores: BTreeMap<String, u64>,
    },
}

/// Agent-keyed maps. Tagged enums buffer their content, which loses the
/// string-to-integer key conversion, so keys are parsed by hand.
mod agent_keys {
    use std::collections::BTreeMap;

    use mapc_core::world::AgentId;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(map: &BTreeMap<AgentId, T>, s: S) -> Result<S::Ok, S::Error> {
        map.serialize(s)
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<AgentId, T>, D::Error> {
        BTreeMap::<String, T>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.parse()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("bad agent id {k:?}")))
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("log has no header")]
    MissingHeader,
}

pub fn write_log(path: &Path, records: &[LogRecord]) -> Result<(), LogError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, LogError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
        out.push(rec);
    }
    match out.first() {
        Some(LogRecord::Header { .. }) => Ok(out),
        _ => Err(LogError::MissingHeader),
    }
}
