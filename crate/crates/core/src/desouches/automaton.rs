//! Finite-state automaton a soldier runs inside a blocks scenario.

use serde::{Deserialize, Serialize};

/// Consecutive failures tolerated before the scenario is given up.
pub const RETRY_CAP: u8 = 5;
/// Restarts after losing the block before the scenario is given up.
pub const RESTART_CAP: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Commander,
    Lieutenant(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioState {
    GoToDispenser,
    GetBlock,
    GoToGoalPosition,
    RotateBlock,
    Connect,
    Detach,
    Submit,
    Done,
    Failed,
}

impl ScenarioState {
    pub fn is_terminal(self) -> bool {
        matches!(self, ScenarioState::Done | ScenarioState::Failed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutomatonEvent {
    GoalSucceeded,
    GoalFailed,
    BlockLost,
}

/// What the soldier should pursue next.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextGoal {
    /// Pursue the goal belonging to the current state.
    State(ScenarioState),
    /// Bounded random traversal before trying the dispenser again.
    RandomWalk,
    /// Terminal; nothing left to do.
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScenarioAutomaton {
    pub role: Role,
    pub state: ScenarioState,
    pub failures: u8,
    pub restarts: u8,
    /// Currently on the random detour that follows a dispenser failure.
    pub detour: bool,
}

impl ScenarioAutomaton {
    pub fn new(role: Role) -> Self {
        ScenarioAutomaton {
            role,
            state: ScenarioState::GoToDispenser,
            failures: 0,
            restarts: 0,
            detour: false,
        }
    }

    pub fn goal(&self) -> NextGoal {
        if self.state.is_terminal() {
            NextGoal::Stop
        } else if self.detour {
            NextGoal::RandomWalk
        } else {
            NextGoal::State(self.state)
        }
    }
}

fn advance(state: ScenarioState, role: Role) -> ScenarioState {
    use ScenarioState::*;
    match (state, role) {
        (GoToDispenser, _) => GetBlock,
        (GetBlock, _) => GoToGoalPosition,
        (GoToGoalPosition, _) => RotateBlock,
        (RotateBlock, _) => Connect,
        (Connect, Role::Commander) => Submit,
        (Connect, Role::Lieutenant(_)) => Detach,
        (Detach, _) | (Submit, _) => Done,
        (s, _) => s,
    }
}

/// One transition. Failures count against [`RETRY_CAP`] until some real
/// progress is made; a completed detour is not progress.
pub fn step_automaton(a: &ScenarioAutomaton, event: AutomatonEvent) -> (ScenarioAutomaton, NextGoal) {
    let mut n = *a;
    if n.state.is_terminal() {
        return (n, NextGoal::Stop);
    }
    match event {
        AutomatonEvent::GoalSucceeded if n.detour => n.detour = false,
        AutomatonEvent::GoalSucceeded => {
            n.state = advance(n.state, n.role);
            n.failures = 0;
        }
        AutomatonEvent::GoalFailed => {
            n.failures += 1;
            if n.failures >= RETRY_CAP {
                n.state = ScenarioState::Failed;
                n.detour = false;
            } else if n.state == ScenarioState::GoToDispenser {
                n.detour = !n.detour;
            }
        }
        AutomatonEvent::BlockLost => {
            n.restarts += 1;
            n.detour = false;
            n.failures = 0;
            n.state = if n.restarts > RESTART_CAP {
                ScenarioState::Failed
            } else {
                ScenarioState::GoToDispenser
            };
        }
    }
    (n, n.goal())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::{BTreeMap, BTreeSet};
    use alloc::vec::Vec;

    const EVENTS: [AutomatonEvent; 3] = [
        AutomatonEvent::GoalSucceeded,
        AutomatonEvent::GoalFailed,
        AutomatonEvent::BlockLost,
    ];

    #[test]
    fn examples() {
        let mut c = ScenarioAutomaton::new(Role::Commander);
        c.state = ScenarioState::Connect;
        let (c, g) = step_automaton(&c, AutomatonEvent::GoalSucceeded);
        assert_eq!(
            (c.state, g),
            (ScenarioState::Submit, NextGoal::State(ScenarioState::Submit))
        );

        let mut l = ScenarioAutomaton::new(Role::Lieutenant(0));
        l.state = ScenarioState::Connect;
        let (l, _) = step_automaton(&l, AutomatonEvent::GoalSucceeded);
        assert_eq!(l.state, ScenarioState::Detach);
        let (l, g) = step_automaton(&l, AutomatonEvent::GoalSucceeded);
        assert_eq!((l.state, g), (ScenarioState::Done, NextGoal::Stop));

        let mut a = ScenarioAutomaton::new(Role::Commander);
        a.state = ScenarioState::RotateBlock;
        let (a, g) = step_automaton(&a, AutomatonEvent::BlockLost);
        assert_eq!(g, NextGoal::State(ScenarioState::GoToDispenser));
        assert_eq!(a.state, ScenarioState::GoToDispenser);
    }

    #[test]
    fn dispenser_failure_detours_then_retries() {
        let a = ScenarioAutomaton::new(Role::Commander);
        let (a, g) = step_automaton(&a, AutomatonEvent::GoalFailed);
        assert_eq!(g, NextGoal::RandomWalk);
        let (a, g) = step_automaton(&a, AutomatonEvent::GoalSucceeded);
        assert_eq!(g, NextGoal::State(ScenarioState::GoToDispenser));
        assert_eq!(a.failures, 1);

        let mut b = ScenarioAutomaton::new(Role::Commander);
        b.state = ScenarioState::GoToGoalPosition;
        let (b, g) = step_automaton(&b, AutomatonEvent::GoalFailed);
        assert_eq!(g, NextGoal::State(ScenarioState::GoToGoalPosition));
        assert_eq!(b.failures, 1);
    }

    fn reachable(role: Role) -> BTreeMap<ScenarioAutomaton, Vec<ScenarioAutomaton>> {
        let start = ScenarioAutomaton::new(role);
        let mut graph = BTreeMap::new();
        let mut stack = alloc::vec![start];
        while let Some(a) = stack.pop() {
            if graph.contains_key(&a) {
                continue;
            }
            let next: Vec<ScenarioAutomaton> = EVENTS.iter().map(|&e| step_automaton(&a, e).0).collect();
            stack.extend(next.iter().copied());
            graph.insert(a, next);
        }
        graph
    }

    #[test]
    fn lieutenants_never_reach_submit() {
        for i in 0..3 {
            let g = reachable(Role::Lieutenant(i));
            assert!(g.keys().all(|a| a.state != ScenarioState::Submit));
            assert!(g.keys().any(|a| a.state == ScenarioState::Done));
        }
        assert!(reachable(Role::Commander)
            .keys()
            .any(|a| a.state == ScenarioState::Submit));
    }

    /// Longest event sequence before a terminal state, found by depth-first
    /// search that fails on any cycle among non-terminal states.
    fn longest(
        a: ScenarioAutomaton,
        g: &BTreeMap<ScenarioAutomaton, Vec<ScenarioAutomaton>>,
        on_path: &mut BTreeSet<ScenarioAutomaton>,
        memo: &mut BTreeMap<ScenarioAutomaton, usize>,
    ) -> usize {
        if a.state.is_terminal() {
            return 0;
        }
        if let Some(&d) = memo.get(&a) {
            return d;
        }
        assert!(on_path.insert(a), "cycle through {a:?}");
        let d = 1 + g[&a].iter().map(|&n| longest(n, g, on_path, memo)).max().unwrap();
        on_path.remove(&a);
        memo.insert(a, d);
        d
    }

    #[test]
    fn every_run_terminates() {
        for role in [Role::Commander, Role::Lieutenant(0)] {
            let g = reachable(role);
            let mut memo = BTreeMap::new();
            let d = longest(ScenarioAutomaton::new(role), &g, &mut BTreeSet::new(), &mut memo);
            assert!(d < 200, "{d}");
            // terminal states absorb every event
            for a in g.keys().filter(|a| a.state.is_terminal()) {
                assert!(g[a].iter().all(|n| n == a));
            }
        }
    }
}
