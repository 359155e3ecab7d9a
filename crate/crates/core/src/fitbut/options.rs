//! Option plans and the fixed priority used to choose between them.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::Coord;
use crate::world::{Action, AgentId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    GoSubmit,
    Split,
    Dodge,
    GoConnect,
    Hoard,
    Roam,
    GoNearSubmit,
    Dig,
}

impl PlanKind {
    pub fn name(self) -> &'static str {
        match self {
            PlanKind::GoSubmit => "go_submit",
            PlanKind::Split => "split",
            PlanKind::Dodge => "dodge",
            PlanKind::GoConnect => "go_connect",
            PlanKind::Hoard => "hoard",
            PlanKind::Roam => "roam",
            PlanKind::GoNearSubmit => "go_near_submit",
            PlanKind::Dig => "dig",
        }
    }
}

/// A full action sequence serving one purpose. Only its first action is
/// ever executed; plans are rebuilt from scratch every step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptionPlan {
    pub kind: PlanKind,
    pub actions: Vec<Action>,
    pub task: Option<String>,
    pub partner: Option<AgentId>,
    pub target: Option<Coord>,
}

impl OptionPlan {
    /// Returns `None` for an empty action list.
    pub fn new(kind: PlanKind, actions: Vec<Action>) -> Option<Self> {
        if actions.is_empty() {
            return None;
        }
        Some(OptionPlan {
            kind,
            actions,
            task: None,
            partner: None,
            target: None,
        })
    }

    pub fn with_task(mut self, task: impl Into<String>) -> Self {
        self.task = Some(task.into());
        self
    }

    pub fn with_partner(mut self, partner: AgentId) -> Self {
        self.partner = Some(partner);
        self
    }

    pub fn with_target(mut self, target: Coord) -> Self {
        self.target = Some(target);
        self
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn first(&self) -> &Action {
        &self.actions[0]
    }

    /// Priority tier, 1 is best.
    ///
    /// A submit that can happen right now beats everything; a short walk to
    /// submit still beats dodging a clear event, a long one does not.
    pub fn tier(&self, short_len: usize) -> u8 {
        match self.kind {
            PlanKind::GoSubmit if self.len() == 1 => 1,
            PlanKind::Split => 2,
            PlanKind::GoSubmit if self.len() < short_len => 3,
            PlanKind::Dodge => 4,
            PlanKind::GoSubmit => 5,
            PlanKind::GoConnect => 6,
            PlanKind::Hoard => 7,
            PlanKind::Roam => 8,
            PlanKind::GoNearSubmit => 9,
            PlanKind::Dig => 10,
        }
    }
}

/// Plans in the order they should be tried. Split plans only count while
/// the agent is still connected to another agent. Equal tiers prefer the
/// shorter plan, then the earlier one.
pub fn ranked_plans(plans: &[OptionPlan], connected: bool, short_len: usize) -> Vec<&OptionPlan> {
    let mut keyed: Vec<(u8, usize, usize, &OptionPlan)> = plans
        .iter()
        .enumerate()
        .filter(|(_, p)| connected || p.kind != PlanKind::Split)
        .map(|(i, p)| (p.tier(short_len), p.len(), i, p))
        .collect();
    keyed.sort_by_key(|(t, l, i, _)| (*t, *l, *i));
    keyed.into_iter().map(|(_, _, _, p)| p).collect()
}

pub fn select_plan(plans: &[OptionPlan], connected: bool, short_len: usize) -> Option<&OptionPlan> {
    ranked_plans(plans, connected, short_len).into_iter().next()
}
