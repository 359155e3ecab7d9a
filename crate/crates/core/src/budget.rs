//! Per-step computation budgets for the group reasoning phase.
//!
//! The engines charge their work (search expansions) against a [`Budget`]
//! and stop discovering new options once it is exhausted, keeping whatever
//! plans were already complete.

/// Something that can be charged for work and report exhaustion.
pub trait Budget {
    fn charge(&mut self, ops: u64);
    fn exhausted(&self) -> bool;
}

/// Logical budget counting abstract operations; deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpBudget {
    limit: u64,
    used: u64,
}

impl OpBudget {
    pub fn new(limit: u64) -> Self {
        OpBudget { limit, used: 0 }
    }

    pub fn used(&self) -> u64 {
        self.used
    }
}

impl Budget for OpBudget {
    fn charge(&mut self, ops: u64) {
        self.used = self.used.saturating_add(ops);
    }

    fn exhausted(&self) -> bool {
        self.used >= self.limit
    }
}

/// Never runs out.
#[derive(Clone, Copy, Debug, Default)]
pub struct Unlimited;

impl Budget for Unlimited {
    fn charge(&mut self, _ops: u64) {}

    fn exhausted(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_budget_runs_out() {
        let mut b = OpBudget::new(10);
        b.charge(9);
        assert!(!b.exhausted());
        b.charge(1);
        assert!(b.exhausted());
    }
}
