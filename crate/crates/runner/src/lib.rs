//! Match runner for `mapc-core`: configuration files, the event log,
//! metrics checked against ground truth, and replay verification.

pub mod config;
pub mod log;
pub mod metrics;
pub mod run;
pub mod summary;

pub use config::{parse_config, BudgetConfig, EngineKind, MatchConfig, TeamConfig};
pub use log::{read_log, write_log, LogRecord};
pub use run::{
    build_world, replay_verify, run_match, run_match_observed, state_hash, write_outputs, MatchOutput, Observation,
    ReplayError,
};
pub use summary::{summarize, MatchSummary};
