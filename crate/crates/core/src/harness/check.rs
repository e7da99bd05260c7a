//! Safety and liveness checkers over traces.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::harness::scenario::ProtocolKind;
use crate::pacemaker::Timing;
use crate::types::{BlockId, NodeId, ViewNumber};

use super::trace::{RecordKind, StopReason, Trace};

/// Two commits that disagree at one height.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub height: u64,
    pub first: (NodeId, BlockId),
    pub second: (NodeId, BlockId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SafetyVerdict {
    Pass,
    Fail(Divergence),
    /// A correct node saw two certified blocks in one view.
    Equivocation { node: NodeId, view: ViewNumber },
}

impl SafetyVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, SafetyVerdict::Pass)
    }
}

/// Every pair of logs must be prefix-related. Reports the lowest height at
/// which two logs disagree.
pub fn check_safety(logs: &BTreeMap<NodeId, Vec<BlockId>>) -> SafetyVerdict {
    let longest = logs.values().map(Vec::len).max().unwrap_or(0);
    for h in 0..longest {
        let mut first: Option<(NodeId, BlockId)> = None;
        for (&node, log) in logs {
            let Some(&b) = log.get(h) else { continue };
            match first {
                None => first = Some((node, b)),
                Some((n0, b0)) if b0 != b => {
                    return SafetyVerdict::Fail(Divergence {
                        height: h as u64 + 1,
                        first: (n0, b0),
                        second: (node, b),
                    })
                }
                Some(_) => {}
            }
        }
    }
    SafetyVerdict::Pass
}

/// Safety over the correct nodes of a trace, including commit attempts
/// that conflicted with a node's own prefix.
pub fn check_trace_safety(trace: &Trace) -> SafetyVerdict {
    let correct = trace.config.correct_nodes();
    let logs: BTreeMap<NodeId, Vec<BlockId>> = correct.iter().map(|&id| (id, trace.log_of(id))).collect();
    let mut worst = match check_safety(&logs) {
        SafetyVerdict::Fail(d) => Some(d),
        _ => None,
    };
    for c in trace.commits.iter().filter(|c| c.conflicting && correct.contains(&c.node)) {
        let own = logs[&c.node].get(c.height as usize - 1).copied();
        let Some(own) = own else { continue };
        if own == c.block_id {
            continue;
        }
        let d = Divergence {
            height: c.height,
            first: (c.node, own),
            second: (c.node, c.block_id),
        };
        if worst.as_ref().map_or(true, |w| d.height < w.height) {
            worst = Some(d);
        }
    }
    if let Some(d) = worst {
        return SafetyVerdict::Fail(d);
    }
    let equivocation = trace
        .records
        .iter()
        .find(|r| r.kind == RecordKind::Equivocation && correct.contains(&r.node));
    if let Some(r) = equivocation {
        return SafetyVerdict::Equivocation {
            node: r.node,
            view: r.view.unwrap_or_default(),
        };
    }
    SafetyVerdict::Pass
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LivenessVerdict {
    Pass {
        /// Window length W.
        window: u64,
        /// Start of the checked interval (GST plus one synchronization
        /// period).
        from: u64,
        /// Longest stretch without a commit at any correct node.
        max_gap: u64,
    },
    Fail {
        node: NodeId,
        /// The stretch `(start, end]` without a commit.
        start: u64,
        end: u64,
        window: u64,
    },
    NotApplicable {
        reason: String,
    },
}

impl LivenessVerdict {
    /// Pass or not applicable.
    pub fn acceptable(&self) -> bool {
        !matches!(self, LivenessVerdict::Fail { .. })
    }
}

/// After GST plus one synchronization period, every correct node's
/// committed height must grow within every window of length
/// `W = (f + 2) × (largest view timeout armed)`.
pub fn check_liveness(trace: &Trace) -> LivenessVerdict {
    let cfg = &trace.config;
    let end = trace.footer.end_time;
    let Some(gst) = cfg.delay.gst else {
        return LivenessVerdict::NotApplicable {
            reason: "GST never arrives".into(),
        };
    };
    if gst >= end {
        return LivenessVerdict::NotApplicable {
            reason: format!("GST {gst} is not before the end of the run {end}"),
        };
    }
    let delta = cfg.delay.delta_cap;
    let timeout = trace
        .footer
        .max_timeout
        .max(Timing::for_delta(delta).base_timeout);
    let from = gst + timeout + 2 * delta;
    let window = (cfg.f as u64 + 2) * timeout;
    let mut max_gap = 0;
    if trace.footer.stop == StopReason::Commits || from >= end {
        return LivenessVerdict::Pass { window, from, max_gap };
    }
    for node in cfg.correct_nodes() {
        let mut height = 0;
        let mut last = from;
        let mut growth: Vec<u64> = Vec::new();
        for c in trace.commits.iter().filter(|c| c.node == node && !c.conflicting) {
            if c.height > height {
                height = c.height;
                if c.time > from {
                    growth.push(c.time);
                }
            }
        }
        growth.push(end);
        for t in growth {
            let gap = t.saturating_sub(last);
            if gap > window {
                return LivenessVerdict::Fail {
                    node,
                    start: last,
                    end: t,
                    window,
                };
            }
            max_gap = max_gap.max(gap);
            last = last.max(t);
        }
    }
    LivenessVerdict::Pass { window, from, max_gap }
}

/// Every Δ wait by a correct leader in view `v` is preceded by some correct
/// node's view timeout in `v - 1`. Returns the first unexplained wait.
pub fn check_delta_wait_soundness(trace: &Trace) -> Result<(), (NodeId, ViewNumber)> {
    let correct: BTreeSet<NodeId> = trace.config.correct_nodes().into_iter().collect();
    let mut timed_out: BTreeSet<ViewNumber> = BTreeSet::new();
    for r in &trace.records {
        if !correct.contains(&r.node) {
            continue;
        }
        match (r.kind, r.view) {
            (RecordKind::Timeout, Some(v)) => {
                timed_out.insert(v);
            }
            (RecordKind::DeltaWait, Some(v)) if v > ViewNumber(1) => {
                if !timed_out.contains(&v.prev()) {
                    return Err((r.node, v));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// HotStuff-2: each block committed by a Commit certificate was locked by at
/// least f+1 correct nodes before the first correct commit of it.
pub fn check_lock_before_commit(trace: &Trace) -> Result<(), BlockId> {
    if trace.config.protocol != ProtocolKind::HotStuff2 {
        return Ok(());
    }
    let correct: BTreeSet<NodeId> = trace.config.correct_nodes().into_iter().collect();
    let mut first_commit: BTreeMap<BlockId, u64> = BTreeMap::new();
    for c in &trace.commits {
        if c.direct && !c.conflicting && correct.contains(&c.node) {
            first_commit.entry(c.block_id).or_insert(c.time);
        }
    }
    let mut lockers: BTreeMap<BlockId, BTreeSet<NodeId>> = BTreeMap::new();
    for r in &trace.records {
        if r.kind != RecordKind::Lock || !correct.contains(&r.node) {
            continue;
        }
        let Some(b) = r.block else { continue };
        if first_commit.get(&b).is_some_and(|&t| r.time <= t) {
            lockers.entry(b).or_default().insert(r.node);
        }
    }
    for b in first_commit.keys() {
        if lockers.get(b).map_or(0, BTreeSet::len) <= trace.config.f {
            return Err(*b);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Digest32;

    fn id(x: u8) -> BlockId {
        Digest32([x; 32])
    }

    fn logs(entries: &[&[u8]]) -> BTreeMap<NodeId, Vec<BlockId>> {
        entries
            .iter()
            .enumerate()
            .map(|(i, l)| (NodeId(i as u32), l.iter().map(|&x| id(x)).collect()))
            .collect()
    }

    #[test]
    fn prefix_passes() {
        assert_eq!(check_safety(&logs(&[&[1, 2], &[1, 2, 3]])), SafetyVerdict::Pass);
    }

    #[test]
    fn divergence_reported_with_height() {
        assert_eq!(
            check_safety(&logs(&[&[1, 2], &[1, 3]])),
            SafetyVerdict::Fail(Divergence {
                height: 2,
                first: (NodeId(0), id(2)),
                second: (NodeId(1), id(3)),
            })
        );
    }

    #[test]
    fn empty_log_passes() {
        assert_eq!(check_safety(&logs(&[&[], &[7, 8, 9]])), SafetyVerdict::Pass);
    }

    #[test]
    fn earliest_divergence_wins() {
        let v = check_safety(&logs(&[&[1, 2, 3, 4], &[1, 2, 3, 5], &[1, 9]]));
        match v {
            SafetyVerdict::Fail(d) => assert_eq!(d.height, 2),
            other => panic!("{other:?}"),
        }
    }
}
