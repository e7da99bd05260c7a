use std::collections::BTreeMap;

use crate::quorum::highest_qc;
use crate::types::{genesis_qc, Phase, QuorumCertificate, ViewNumber};

/// Per-node protocol memory: lock, key (highest certificate) and voting
/// record.
#[derive(Debug, Clone)]
pub struct SafetyState {
    pub locked_qc: QuorumCertificate,
    pub highest_qc: QuorumCertificate,
    pub highest_voted: BTreeMap<Phase, ViewNumber>,
    pub current_view: ViewNumber,
}

impl SafetyState {
    pub fn new(n: usize) -> Self {
        let g = genesis_qc(n);
        SafetyState {
            locked_qc: g.clone(),
            highest_qc: g,
            highest_voted: BTreeMap::new(),
            current_view: ViewNumber::GENESIS,
        }
    }

    pub fn voted(&self, phase: Phase) -> ViewNumber {
        self.highest_voted
            .get(&phase)
            .copied()
            .unwrap_or(ViewNumber::GENESIS)
    }

    pub fn record_vote(&mut self, phase: Phase, view: ViewNumber) {
        let slot = self.highest_voted.entry(phase).or_default();
        if view > *slot {
            *slot = view;
        }
    }

    /// Raises the key; returns whether it changed.
    pub fn observe_highest(&mut self, qc: &QuorumCertificate) -> bool {
        let next = highest_qc(&self.highest_qc, qc).clone();
        let changed = next != self.highest_qc;
        self.highest_qc = next;
        changed
    }

    /// Raises the lock (and the key with it); returns whether the lock moved.
    pub fn observe_lock(&mut self, qc: &QuorumCertificate) -> bool {
        let next = highest_qc(&self.locked_qc, qc).clone();
        let changed = next != self.locked_qc;
        self.locked_qc = next;
        self.observe_highest(qc);
        changed
    }
}
