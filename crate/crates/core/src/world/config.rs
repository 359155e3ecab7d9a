use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A configuration value that failed validation. `field` is the dotted path
/// of the offending key.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    #[default]
    Bounded,
    Toroidal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskGenConfig {
    /// Block counts a generated task may have; one is drawn uniformly.
    pub sizes: Vec<u32>,
    /// A new task is considered every `spawn_period` steps.
    pub spawn_period: u32,
    /// Upper bound on simultaneously active tasks; 0 disables tasks.
    pub max_active: u32,
    /// Steps between spawning and the deadline.
    pub deadline: u32,
    pub reward_per_block: u32,
}

impl Default for TaskGenConfig {
    fn default() -> Self {
        TaskGenConfig {
            sizes: vec![2, 3],
            spawn_period: 20,
            max_active: 3,
            deadline: 80,
            reward_per_block: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub width: u32,
    pub height: u32,
    pub topology: Topology,
    pub obstacle_density: f64,
    pub smoothing_passes: u32,
    pub block_types: u32,
    pub dispensers_per_type: u32,
    pub goal_clusters: u32,
    pub goal_cluster_size: u32,
    pub vision_radius: u32,
    pub max_energy: u32,
    pub energy_recharge: u32,
    pub clear_cost: u32,
    pub clear_charge_steps: u32,
    pub clear_range: u32,
    pub clear_event_radius: u32,
    pub clear_event_warn_steps: u32,
    /// Per-step probability that a new clear event is scheduled.
    pub clear_event_rate: f64,
    /// When set, detonations scatter fresh obstacles inside their radius.
    pub obstacle_regrowth: bool,
    /// Side of the square each team's agents spawn in; `None` spreads them over the whole grid.
    pub spawn_spread: Option<u32>,
    pub tasks: TaskGenConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            width: 40,
            height: 40,
            topology: Topology::Bounded,
            obstacle_density: 0.15,
            smoothing_passes: 1,
            block_types: 2,
            dispensers_per_type: 2,
            goal_clusters: 1,
            goal_cluster_size: 8,
            vision_radius: 5,
            max_energy: 300,
            energy_recharge: 2,
            clear_cost: 30,
            clear_charge_steps: 3,
            clear_range: 2,
            clear_event_radius: 3,
            clear_event_warn_steps: 5,
            clear_event_rate: 0.02,
            obstacle_regrowth: false,
            spawn_spread: None,
            tasks: TaskGenConfig::default(),
        }
    }
}

fn positive(field: &str, value: u32) -> Result<(), ConfigError> {
    if value == 0 {
        Err(ConfigError::new(field, "must be positive"))
    } else {
        Ok(())
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.topology == Topology::Toroidal {
            return Err(ConfigError::new(
                "world.topology",
                "only \"bounded\" grids are supported",
            ));
        }
        positive("world.width", self.width)?;
        positive("world.height", self.height)?;
        positive("world.block_types", self.block_types)?;
        positive("world.vision_radius", self.vision_radius)?;
        positive("world.max_energy", self.max_energy)?;
        positive("world.clear_charge_steps", self.clear_charge_steps)?;
        positive("world.clear_range", self.clear_range)?;
        positive("world.clear_event_radius", self.clear_event_radius)?;
        if self.block_types > 26 {
            return Err(ConfigError::new("world.block_types", "at most 26 block types"));
        }
        if !(0.0..1.0).contains(&self.obstacle_density) {
            return Err(ConfigError::new("world.obstacle_density", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.clear_event_rate) {
            return Err(ConfigError::new("world.clear_event_rate", "must lie in [0, 1]"));
        }
        if self.width.saturating_mul(self.height) > 1 << 20 {
            return Err(ConfigError::new("world.width", "grid larger than 2^20 cells"));
        }
        if self.tasks.max_active > 0 {
            positive("world.tasks.spawn_period", self.tasks.spawn_period)?;
            positive("world.tasks.deadline", self.tasks.deadline)?;
            positive("world.tasks.reward_per_block", self.tasks.reward_per_block)?;
            if self.tasks.sizes.is_empty() {
                return Err(ConfigError::new("world.tasks.sizes", "must not be empty"));
            }
            if let Some(&bad) = self.tasks.sizes.iter().find(|&&s| s == 0 || s > 8) {
                return Err(ConfigError::new(
                    "world.tasks.sizes",
                    format!("size {bad} outside 1..=8"),
                ));
            }
        }
        if let Some(spread) = self.spawn_spread {
            positive("world.spawn_spread", spread)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert_eq!(WorldConfig::default().validate(), Ok(()));
    }

    #[test]
    fn toroidal_rejected() {
        let cfg = WorldConfig {
            topology: Topology::Toroidal,
            ..WorldConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().field, "world.topology");
    }

    #[test]
    fn zero_task_config_is_valid() {
        let mut cfg = WorldConfig::default();
        cfg.tasks.max_active = 0;
        cfg.tasks.sizes.clear();
        assert!(cfg.validate().is_ok());
    }
}
