//! Match configuration files.

use std::collections::BTreeSet;

use mapc_core::desouches::DesouchesConfig;
use mapc_core::fitbut::ReasonerConfig;
use mapc_core::world::WorldConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Fitbut,
    Desouches,
    #[serde(rename = "random_baseline", alias = "random")]
    RandomBaseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamConfig {
    pub name: String,
    pub engine: EngineKind,
    pub agents: u32,
    #[serde(default)]
    pub fitbut: ReasonerConfig,
    #[serde(default)]
    pub desouches: DesouchesConfig,
}

/// How much work a team may spend deciding one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BudgetConfig {
    /// Wall-clock watchdog; FIT BUT teams use their `step_time_budget_ms`,
    /// other teams `ms`. Not reproducible when the limit is hit.
    WallClock {
        #[serde(default = "default_ms")]
        ms: u64,
    },
    /// Deterministic count of search expansions per team and step.
    Ops {
        per_step: u64,
    },
    Unlimited,
}

fn default_ms() -> u64 {
    500
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig::WallClock { ms: default_ms() }
    }
}

fn default_steps() -> u32 {
    300
}

fn default_verbosity() -> u8 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchConfig {
    #[serde(default)]
    pub world: WorldConfig,
    pub teams: Vec<TeamConfig>,
    #[serde(default = "default_steps")]
    pub steps: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget: BudgetConfig,
    /// 0: actions and state hashes only; 1: plus world events; 2: plus
    /// engine traces.
    #[serde(default = "default_verbosity")]
    pub verbosity: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), mapc_core::world::ConfigError> {
        use mapc_core::world::ConfigError as E;
        self.world.validate()?;
        if self.teams.is_empty() {
            return Err(E::new("teams", "at least one team is required"));
        }
        if self.steps == 0 {
            return Err(E::new("steps", "must be positive"));
        }
        let mut names = BTreeSet::new();
        for (i, t) in self.teams.iter().enumerate() {
            if t.agents == 0 {
                return Err(E::new(format!("teams[{i}].agents"), "must be positive"));
            }
            if t.name.is_empty() || !names.insert(t.name.as_str()) {
                return Err(E::new(format!("teams[{i}].name"), "must be non-empty and unique"));
            }
            if t.desouches.walk_min == 0 || t.desouches.walk_min > t.desouches.walk_max {
                return Err(E::new(
                    format!("teams[{i}].desouches.walk_min"),
                    "must be positive and at most walk_max",
                ));
            }
            if t.fitbut.max_iter == 0 || t.desouches.max_iter == 0 {
                return Err(E::new(format!("teams[{i}].max_iter"), "must be positive"));
            }
        }
        match self.budget {
            BudgetConfig::WallClock { ms: 0 } => return Err(E::new("budget.ms", "must be positive")),
            BudgetConfig::Ops { per_step: 0 } => return Err(E::new("budget.per_step", "must be positive")),
            _ => {}
        }
        let total: u64 = self.teams.iter().map(|t| t.agents as u64).sum();
        if total > self.world.width as u64 * self.world.height as u64 / 4 {
            return Err(E::new("teams", "too many agents for the grid"));
        }
        Ok(())
    }
}

/// Parses and validates a configuration. Errors carry the 1-based line of
/// the offending key, or of the syntax error.
pub fn parse_config(text: &str) -> Result<MatchConfig, ConfigError> {
    let cfg: MatchConfig = serde_json::from_str(text).map_err(|e| ConfigError {
        line: e.line().max(1),
        message: e.to_string(),
    })?;
    cfg.validate().map_err(|e| ConfigError {
        line: locate(text, &e.field).unwrap_or(1),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

/// Line of the deepest key along a dotted path such as
/// `teams[1].agents` that is present in the document.
pub fn locate(text: &str, path: &str) -> Option<usize> {
    let mut segments = Vec::new();
    for part in path.split('.') {
        match part.split_once('[') {
            Some((key, idx)) => {
                segments.push(Seg::Key(key.to_string()));
                segments.push(Seg::Index(idx.trim_end_matches(']').parse().ok()?));
            }
            None => segments.push(Seg::Key(part.to_string())),
        }
    }
    let mut s = Scanner {
        bytes: text.as_bytes(),
        pos: 0,
        line: 1,
    };
    let mut best = None;
    s.find(&segments, &mut best);
    best
}

enum Seg {
    Key(String),
    Index(usize),
}

/// Just enough of a JSON reader to map key paths to lines.
struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl Scanner<'_> {
    fn skip_ws(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            match b {
                b'\n' => self.line += 1,
                b' ' | b'\t' | b'\r' | b',' | b':' => {}
                _ => return,
            }
            self.pos += 1;
        }
    }

    fn string(&mut self) -> String {
        let start = self.pos + 1;
        self.pos += 1;
        while let Some(&b) = self.bytes.get(self.pos) {
            match b {
                b'\\' => self.pos += 1,
                b'"' => break,
                b'\n' => self.line += 1,
                _ => {}
            }
            self.pos += 1;
        }
        let s = String::from_utf8_lossy(&self.bytes[start..self.pos.min(self.bytes.len())]).into_owned();
        self.pos += 1;
        s
    }

    /// Consumes one value; descends while it matches `path`.
    fn find(&mut self, path: &[Seg], best: &mut Option<usize>) {
        self.skip_ws();
        match self.bytes.get(self.pos) {
            Some(b'{') => {
                self.pos += 1;
                loop {
                    self.skip_ws();
                    match self.bytes.get(self.pos) {
                        Some(b'}') | None => {
                            self.pos += 1;
                            return;
                        }
                        Some(b'"') => {
                            let line = self.line;
                            let key = self.string();
                            match path.first() {
                                Some(Seg::Key(k)) if *k == key => {
                                    *best = Some(line);
                                    self.find(&path[1..], best);
                                }
                                _ => self.find(&[], best),
                            }
                        }
                        Some(_) => self.pos += 1,
                    }
                }
            }
            Some(b'[') => {
                self.pos += 1;
                let mut i = 0;
                loop {
                    self.skip_ws();
                    match self.bytes.get(self.pos) {
                        Some(b']') | None => {
                            self.pos += 1;
                            return;
                        }
                        _ => {
                            match path.first() {
                                Some(Seg::Index(n)) if *n == i => {
                                    *best = Some(self.line);
                                    self.find(&path[1..], best);
                                }
                                _ => self.find(&[], best),
                            }
                            i += 1;
                        }
                    }
                }
            }
            Some(b'"') => {
                self.string();
            }
            Some(_) => {
                while let Some(&b) = self.bytes.get(self.pos) {
                    if matches!(b, b',' | b'}' | b']' | b'\n' | b' ' | b'\t' | b'\r') {
                        break;
                    }
                    self.pos += 1;
                }
            }
            None => {}
        }
    }
}
