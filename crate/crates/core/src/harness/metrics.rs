//! Communication and latency metrics computed from a trace.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::protocol::MessageClass;
use crate::types::{BlockId, NodeId, ViewNumber};

use super::trace::{NodeCounters, RecordKind, Trace};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub max: u64,
}

impl Summary {
    pub fn of(values: &[u64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        Summary {
            mean: values.iter().sum::<u64>() as f64 / values.len() as f64,
            max: values.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub count: usize,
    pub mean: f64,
    pub min: u64,
    pub median: u64,
    pub max: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub end_time: u64,
    /// Height reached by every correct node.
    pub decisions: u64,
    pub messages: u64,
    pub units: u64,
    pub protocol_messages: u64,
    pub pacemaker_messages: u64,
    pub protocol_units: u64,
    pub pacemaker_units: u64,
    /// Messages sent between consecutive decisions, by decision.
    pub messages_per_decision: Summary,
    pub units_per_decision: Summary,
    pub per_node: Vec<NodeCounters>,
    /// First send of a proposal to its first commit at a correct node.
    pub latency: Latency,
    /// Views some correct node entered without a certificate.
    pub view_changes: u64,
    pub delta_waits: u64,
    pub responsive_entries: u64,
    /// Max over min of per-node sent units among correct nodes.
    pub load_balance: f64,
}

/// Height every correct node reached, with the time the last of them got
/// there, per height.
pub fn decision_times(trace: &Trace) -> Vec<u64> {
    let correct = trace.config.correct_nodes();
    let mut reached: BTreeMap<NodeId, Vec<u64>> = BTreeMap::new();
    for c in trace.commits.iter().filter(|c| !c.conflicting) {
        if !correct.contains(&c.node) {
            continue;
        }
        let times = reached.entry(c.node).or_default();
        if c.height as usize > times.len() {
            times.push(c.time);
        }
    }
    let common = correct
        .iter()
        .map(|id| reached.get(id).map_or(0, Vec::len))
        .min()
        .unwrap_or(0);
    (0..common)
        .map(|h| correct.iter().map(|id| reached[id][h]).max().unwrap_or(0))
        .collect()
}

/// Protocol messages sent per view, keyed by the view the message is about.
pub fn protocol_messages_by_view(trace: &Trace) -> BTreeMap<ViewNumber, u64> {
    let mut out = BTreeMap::new();
    for r in trace.sends() {
        if r.class == Some(MessageClass::Protocol) {
            if let Some(v) = r.view {
                *out.entry(v).or_insert(0) += 1;
            }
        }
    }
    out
}

/// First send of each proposal to its first commit by a correct node.
pub fn commit_latencies(trace: &Trace) -> Vec<u64> {
    let correct: BTreeSet<NodeId> = trace.config.correct_nodes().into_iter().collect();
    let mut proposed: BTreeMap<BlockId, u64> = BTreeMap::new();
    for r in &trace.records {
        let proposal = r.kind == RecordKind::Propose || (r.kind == RecordKind::Send && r.block.is_some());
        if let (true, Some(b)) = (proposal, r.block) {
            proposed.entry(b).or_insert(r.time);
        }
    }
    let mut committed: BTreeMap<BlockId, u64> = BTreeMap::new();
    for c in &trace.commits {
        if !c.conflicting && correct.contains(&c.node) {
            let t = committed.entry(c.block_id).or_insert(c.time);
            *t = (*t).min(c.time);
        }
    }
    committed
        .iter()
        .filter_map(|(b, &t)| proposed.get(b).map(|&p| t.saturating_sub(p)))
        .collect()
}

pub fn compute_metrics(trace: &Trace) -> Metrics {
    let correct: BTreeSet<NodeId> = trace.config.correct_nodes().into_iter().collect();
    let mut m = Metrics {
        end_time: trace.footer.end_time,
        per_node: trace.counters.clone(),
        ..Metrics::default()
    };
    for c in &trace.counters {
        m.messages += c.messages;
        m.units += c.units;
        m.protocol_messages += c.protocol_messages;
        m.pacemaker_messages += c.pacemaker_messages;
        m.protocol_units += c.protocol_units;
        m.pacemaker_units += c.pacemaker_units;
    }

    let decisions = decision_times(trace);
    m.decisions = decisions.len() as u64;
    let mut per_msgs = vec![0u64; decisions.len()];
    let mut per_units = vec![0u64; decisions.len()];
    for r in trace.sends() {
        let slot = decisions.partition_point(|&t| t < r.time);
        if slot < decisions.len() {
            per_msgs[slot] += 1;
            per_units[slot] += r.msg_size_units;
        }
    }
    m.messages_per_decision = Summary::of(&per_msgs);
    m.units_per_decision = Summary::of(&per_units);

    let mut lat = commit_latencies(trace);
    lat.sort_unstable();
    if !lat.is_empty() {
        m.latency = Latency {
            count: lat.len(),
            mean: lat.iter().sum::<u64>() as f64 / lat.len() as f64,
            min: lat[0],
            median: lat[lat.len() / 2],
            max: lat[lat.len() - 1],
        };
    }

    let mut sync_views = BTreeSet::new();
    for r in &trace.records {
        if !correct.contains(&r.node) {
            continue;
        }
        match r.kind {
            RecordKind::EnterView if r.detail == "sync" => {
                sync_views.insert(r.view);
            }
            RecordKind::DeltaWait => m.delta_waits += 1,
            RecordKind::Responsive => m.responsive_entries += 1,
            _ => {}
        }
    }
    m.view_changes = sync_views.len() as u64;

    let loads: Vec<u64> = trace
        .counters
        .iter()
        .filter(|c| correct.contains(&c.node))
        .map(|c| c.units)
        .collect();
    let lo = loads.iter().copied().min().unwrap_or(0);
    let hi = loads.iter().copied().max().unwrap_or(0);
    m.load_balance = if hi == 0 { 1.0 } else { hi as f64 / lo.max(1) as f64 };
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_empty_is_zero() {
        assert_eq!(Summary::of(&[]), Summary::default());
        let s = Summary::of(&[2, 4, 9]);
        assert_eq!(s.max, 9);
        assert!((s.mean - 5.0).abs() < 1e-12);
    }
}
