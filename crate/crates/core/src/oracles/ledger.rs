use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryPurpose {
    Training,
    Evaluation,
    WarmUp,
}

/// Monotone, purpose-partitioned query counter. Safe to share between
/// threads.
#[derive(Debug, Default)]
pub struct QueryLedger {
    training: AtomicU64,
    evaluation: AtomicU64,
    warm_up: AtomicU64,
    total: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerCounts {
    pub total: u64,
    pub training: u64,
    pub evaluation: u64,
    pub warm_up: u64,
}

impl LedgerCounts {
    pub fn get(&self, purpose: QueryPurpose) -> u64 {
        match purpose {
            QueryPurpose::Training => self.training,
            QueryPurpose::Evaluation => self.evaluation,
            QueryPurpose::WarmUp => self.warm_up,
        }
    }
}

impl QueryLedger {
    pub fn from_counts(counts: LedgerCounts) -> Self {
        QueryLedger {
            training: AtomicU64::new(counts.training),
            evaluation: AtomicU64::new(counts.evaluation),
            warm_up: AtomicU64::new(counts.warm_up),
            total: AtomicU64::new(counts.training + counts.evaluation + counts.warm_up),
        }
    }

    /// Books one query and returns its zero-based ordinal.
    pub fn record(&self, purpose: QueryPurpose) -> u64 {
        let slot = match purpose {
            QueryPurpose::Training => &self.training,
            QueryPurpose::Evaluation => &self.evaluation,
            QueryPurpose::WarmUp => &self.warm_up,
        };
        slot.fetch_add(1, Ordering::SeqCst);
        self.total.fetch_add(1, Ordering::SeqCst)
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::SeqCst)
    }

    pub fn counts(&self) -> LedgerCounts {
        LedgerCounts {
            total: self.total(),
            training: self.training.load(Ordering::SeqCst),
            evaluation: self.evaluation.load(Ordering::SeqCst),
            warm_up: self.warm_up.load(Ordering::SeqCst),
        }
    }
}
