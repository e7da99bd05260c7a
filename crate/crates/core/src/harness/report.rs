//! Run reports: verdicts plus metrics, as JSON or a text table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::check::{
    check_delta_wait_soundness, check_liveness, check_lock_before_commit, check_trace_safety,
    LivenessVerdict, SafetyVerdict,
};
use super::metrics::{compute_metrics, Metrics};
use super::scenario::ProtocolKind;
use super::trace::{StopReason, Trace};
use crate::pacemaker::PacemakerKind;
use crate::types::{BlockId, NodeId, ViewNumber};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub protocol: ProtocolKind,
    pub pacemaker: PacemakerKind,
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub stop: StopReason,
    pub safety: SafetyVerdict,
    pub liveness: LivenessVerdict,
    /// First Δ wait not preceded by a view timeout.
    pub unexplained_wait: Option<(NodeId, ViewNumber)>,
    /// First directly committed block without f+1 prior locks.
    pub under_locked: Option<BlockId>,
    pub metrics: Metrics,
}

impl RunReport {
    pub fn from_trace(trace: &Trace) -> RunReport {
        let cfg = &trace.config;
        RunReport {
            protocol: cfg.protocol,
            pacemaker: cfg.pacemaker,
            n: cfg.n,
            f: cfg.f,
            seed: cfg.seed,
            stop: trace.footer.stop,
            safety: check_trace_safety(trace),
            liveness: check_liveness(trace),
            unexplained_wait: check_delta_wait_soundness(trace).err(),
            under_locked: check_lock_before_commit(trace).err(),
            metrics: compute_metrics(trace),
        }
    }

    /// Safety held and liveness did not fail.
    pub fn passed(&self) -> bool {
        self.safety.passed()
            && self.liveness.acceptable()
            && self.unexplained_wait.is_none()
            && self.under_locked.is_none()
    }
}

pub fn to_json(reports: &[RunReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

pub fn render_table(reports: &[RunReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:<9} {:>4} {:>6} {:>7} {:>10} {:>12} {:>10} {:>8} {:>6}  verdict",
        "protocol", "pacemaker", "n", "seed", "decided", "msgs/dec", "units/dec", "latency", "vchanges", "load"
    );
    for r in reports {
        let m = &r.metrics;
        let verdict = if r.passed() { "pass".to_string() } else { describe_failure(r) };
        let _ = writeln!(
            out,
            "{:<10} {:<9} {:>4} {:>6} {:>7} {:>10.1} {:>12.1} {:>10.1} {:>8} {:>6.2}  {}",
            format!("{:?}", r.protocol).to_lowercase(),
            format!("{:?}", r.pacemaker).to_lowercase(),
            r.n,
            r.seed,
            m.decisions,
            m.messages_per_decision.mean,
            m.units_per_decision.mean,
            m.latency.mean,
            m.view_changes,
            m.load_balance,
            verdict
        );
    }
    out
}

fn describe_failure(r: &RunReport) -> String {
    match &r.safety {
        SafetyVerdict::Fail(d) if d.first.0 == d.second.0 => {
            return format!("SAFETY: node {} committed conflicting blocks at height {}", d.first.0, d.height)
        }
        SafetyVerdict::Fail(d) => {
            return format!(
                "SAFETY: nodes {} and {} diverge at height {}",
                d.first.0, d.second.0, d.height
            )
        }
        SafetyVerdict::Equivocation { node, view } => {
            return format!("EQUIVOCATION seen by node {node} in view {view}")
        }
        SafetyVerdict::Pass => {}
    }
    if let LivenessVerdict::Fail { node, start, end, window } = &r.liveness {
        return format!("LIVENESS: node {node} idle over ({start}, {end}] > {window}");
    }
    if let Some((node, view)) = r.unexplained_wait {
        return format!("WAIT: node {node} waited in view {view} without a prior timeout");
    }
    if let Some(b) = r.under_locked {
        return format!("LOCK: block {} committed with too few locks", b.short());
    }
    "fail".into()
}
