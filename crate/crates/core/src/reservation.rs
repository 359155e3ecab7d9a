//! Per-step action reservations inside one synchronized group.
//!
//! Before an agent commits to an action it asks the group's reservation map
//! for every cell the action could leave it in, success or failure. The
//! first claimant wins; later conflicting proposals are rejected and the
//! agent falls back to its next plan.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::Coord;
use crate::world::{Action, AgentId};

/// Non-cell resources that at most one claimant may hold per step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    /// Connect slot of an agent, held by the pair (low id, high id) using it.
    ConnectSlot(AgentId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Approved,
    Rejected { conflict: AgentId },
}

impl Verdict {
    pub fn is_approved(self) -> bool {
        self == Verdict::Approved
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReservationMap {
    step: u32,
    cells: BTreeMap<Coord, AgentId>,
    resources: BTreeMap<Resource, (AgentId, AgentId)>,
    resource_owner: BTreeMap<Resource, AgentId>,
    acted: BTreeSet<AgentId>,
}

/// Cells the footprint occupies if `action` succeeds, plus any extra cell
/// the action touches (spawn cell, clear target, newly attached block).
fn success_cells(pos: Coord, footprint: &BTreeSet<Coord>, action: &Action) -> Vec<Coord> {
    match action {
        Action::Move { dir } => footprint.iter().map(|&c| c + dir.delta()).collect(),
        Action::Rotate { turn } => footprint.iter().map(|&c| pos + (c - pos).rotate(*turn)).collect(),
        Action::Attach { dir } | Action::Request { dir } => alloc::vec![pos + dir.delta()],
        Action::Clear { target } => alloc::vec![pos + *target],
        _ => Vec::new(),
    }
}

impl ReservationMap {
    pub fn new(step: u32) -> Self {
        ReservationMap {
            step,
            ..Default::default()
        }
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    /// Drops every claim and moves to `step`.
    pub fn reset(&mut self, step: u32) {
        *self = ReservationMap::new(step);
    }

    /// Pre-claims the cells a claimant stands on right now, so nobody plans
    /// to enter them before the claimant's own action is known.
    pub fn presence(&mut self, claimant: AgentId, cells: impl IntoIterator<Item = Coord>) {
        for c in cells {
            self.cells.entry(c).or_insert(claimant);
        }
    }

    pub fn cell_claims(&self) -> &BTreeMap<Coord, AgentId> {
        &self.cells
    }

    pub fn claimant_of(&self, c: Coord) -> Option<AgentId> {
        self.cells.get(&c).copied()
    }

    /// Asks for the cells `action` needs. `claimant` identifies the moving
    /// component (its lowest agent id), `pos` is the acting agent's cell and
    /// `footprint` all cells of its component, in the group frame.
    ///
    /// A claimant gets at most one approved non-skip action per step.
    pub fn reserve_action(
        &mut self,
        claimant: AgentId,
        pos: Coord,
        action: &Action,
        footprint: &BTreeSet<Coord>,
    ) -> Verdict {
        if *action == Action::Skip {
            return Verdict::Approved;
        }
        if self.acted.contains(&claimant) {
            return Verdict::Rejected { conflict: claimant };
        }
        let mut needed: BTreeSet<Coord> = footprint.clone();
        needed.extend(success_cells(pos, footprint, action));
        for c in &needed {
            if let Some(&other) = self.cells.get(c) {
                if other != claimant {
                    return Verdict::Rejected { conflict: other };
                }
            }
        }
        let mut resources = Vec::new();
        if let Action::Connect { partner, .. } = action {
            let pair = (claimant.min(*partner), claimant.max(*partner));
            for slot in [Resource::ConnectSlot(claimant), Resource::ConnectSlot(*partner)] {
                if let Some(&held) = self.resources.get(&slot) {
                    if held != pair {
                        return Verdict::Rejected {
                            conflict: self.resource_owner[&slot],
                        };
                    }
                }
                resources.push((slot, pair));
            }
        }
        for c in needed {
            self.cells.insert(c, claimant);
        }
        for (slot, pair) in resources {
            self.resources.entry(slot).or_insert(pair);
            self.resource_owner.entry(slot).or_insert(claimant);
        }
        self.acted.insert(claimant);
        Verdict::Approved
    }
}
