//! Compute accounting in sample-usages: one unit is one example's
//! forward+backward inside a training pass. Evaluation passes are free by
//! default; an optional fraction lets sensitivity studies charge them.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeBudget {
    total: u64,
    consumed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeOutcome {
    /// The full amount fit and was charged.
    Charged,
    /// Only `admitted` units fit; they were charged and the budget is now
    /// exhausted.
    Exhausted { admitted: u64 },
}

impl ComputeBudget {
    pub fn new(total: u64) -> Self {
        ComputeBudget { total, consumed: 0 }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn remaining(&self) -> u64 {
        self.total - self.consumed
    }

    pub fn is_exhausted(&self) -> bool {
        self.consumed >= self.total
    }

    /// Charge `n` sample-usages. If fewer than `n` fit, the admissible
    /// remainder is charged and reported.
    pub fn charge(&mut self, n: u64) -> ChargeOutcome {
        let room = self.remaining();
        if n <= room {
            self.consumed += n;
            ChargeOutcome::Charged
        } else {
            self.consumed = self.total;
            ChargeOutcome::Exhausted { admitted: room }
        }
    }

    /// Carve a sub-budget out of this one (for an inner run); the parent is
    /// charged immediately for the full allocation.
    pub fn allocate(&mut self, n: u64) -> Result<ComputeBudget> {
        if n > self.remaining() {
            return Err(CoreError::Budget(format!(
                "allocation of {n} exceeds remaining {}",
                self.remaining()
            )));
        }
        self.consumed += n;
        Ok(ComputeBudget::new(n))
    }
}

/// Experiment-level record of training consumption, asserted against the
/// declared budget at exit.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Ledger {
    declared: Option<u64>,
    entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub samples: u64,
}

impl Ledger {
    pub fn new(declared: Option<u64>) -> Self {
        Ledger { declared, entries: Vec::new() }
    }

    pub fn declared(&self) -> Option<u64> {
        self.declared
    }

    pub fn record(&mut self, label: impl Into<String>, samples: u64) {
        self.entries.push(LedgerEntry { label: label.into(), samples });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.samples).sum()
    }

    /// Fold a child ledger into this one, in order.
    pub fn merge(&mut self, prefix: &str, child: Ledger) {
        for e in child.entries {
            self.entries.push(LedgerEntry { label: format!("{prefix}/{}", e.label), samples: e.samples });
        }
    }

    /// Total training consumption must not exceed the declared budget.
    pub fn assert_within(&self) -> Result<()> {
        if let Some(declared) = self.declared {
            let total = self.total();
            if total > declared {
                return Err(CoreError::Budget(format!(
                    "ledger total {total} exceeds declared budget {declared}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charge_exact_total() {
        let mut b = ComputeBudget::new(10);
        assert_eq!(b.charge(10), ChargeOutcome::Charged);
        assert_eq!(b.consumed(), 10);
        assert!(b.is_exhausted());
    }

    #[test]
    fn overcharge_reports_admissible_remainder() {
        let mut b = ComputeBudget::new(10);
        assert_eq!(b.charge(8), ChargeOutcome::Charged);
        assert_eq!(b.charge(5), ChargeOutcome::Exhausted { admitted: 2 });
        assert_eq!(b.consumed(), 10);
    }

    #[test]
    fn ledger_replay_sums_to_total() {
        let mut b = ComputeBudget::new(70);
        let mut ledger = Ledger::new(Some(70));
        for (i, n) in [10u64, 10, 10, 10, 10, 10, 10].iter().enumerate() {
            assert_eq!(b.charge(*n), ChargeOutcome::Charged);
            ledger.record(format!("batch{i}"), *n);
        }
        assert_eq!(ledger.total(), 70);
        assert_eq!(b.consumed(), 70);
        ledger.assert_within().unwrap();
    }

    #[test]
    fn ledger_flags_violation() {
        let mut ledger = Ledger::new(Some(5));
        ledger.record("run", 6);
        assert!(ledger.assert_within().is_err());
    }

    #[test]
    fn allocate_carves_and_charges_parent() {
        let mut b = ComputeBudget::new(100);
        let sub = b.allocate(40).unwrap();
        assert_eq!(sub.total(), 40);
        assert_eq!(b.remaining(), 60);
        assert!(b.allocate(61).is_err());
    }
}
