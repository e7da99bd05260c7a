//! Run traces and their JSON Lines encoding.

use serde::{Deserialize, Serialize};

use crate::protocol::MessageClass;
use crate::types::{BlockId, NodeId, ViewNumber};

use super::scenario::{ScenarioConfig, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Start,
    Send,
    Deliver,
    /// A timer fired and was acted on.
    Timer,
    /// A timer fired after it stopped mattering.
    TimerStale,
    /// Pacemaker view timeout.
    Timeout,
    EnterView,
    Propose,
    Responsive,
    DeltaWait,
    Lock,
    Equivocation,
    SafetyViolation,
    Reject,
    Crash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: u64,
    pub node: NodeId,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<ViewNumber>,
    pub detail: String,
    pub msg_size_units: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<MessageClass>,
    /// Recipient of a send, sender of a delivery.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<BlockId>,
}

impl TraceRecord {
    pub fn new(time: u64, node: NodeId, kind: RecordKind) -> Self {
        TraceRecord {
            time,
            node,
            kind,
            view: None,
            detail: String::new(),
            msg_size_units: 0,
            class: None,
            peer: None,
            block: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub time: u64,
    pub node: NodeId,
    pub block_id: BlockId,
    pub height: u64,
    pub view: ViewNumber,
    /// The commit attempt conflicted with the node's own prefix.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub conflicting: bool,
    /// The block named by the certificate, as opposed to an ancestor
    /// committed along with it.
    pub direct: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCounters {
    pub node: NodeId,
    pub messages: u64,
    pub units: u64,
    pub protocol_messages: u64,
    pub pacemaker_messages: u64,
    pub protocol_units: u64,
    pub pacemaker_units: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Commits,
    Horizon,
    MaxTime,
    MaxEvents,
    Quiescent,
    /// A correct node saw two certified blocks in one view.
    Equivocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFooter {
    /// End of the observed run.
    pub end_time: u64,
    /// Largest view timeout any correct node armed.
    pub max_timeout: u64,
    pub stop: StopReason,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub config: ScenarioConfig,
    pub records: Vec<TraceRecord>,
    pub commits: Vec<CommitRecord>,
    pub counters: Vec<NodeCounters>,
    pub footer: TraceFooter,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "rec", rename_all = "snake_case")]
enum Line {
    Header { config: ScenarioConfig },
    Event(TraceRecord),
    Commit(CommitRecord),
    Counters(NodeCounters),
    Footer(TraceFooter),
}

impl Trace {
    /// JSON Lines: header, events, commits, counters, footer.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &Line| {
            out.push_str(&serde_json::to_string(line).expect("trace lines serialize"));
            out.push('\n');
        };
        push(&Line::Header {
            config: self.config.clone(),
        });
        for r in &self.records {
            push(&Line::Event(r.clone()));
        }
        for c in &self.commits {
            push(&Line::Commit(c.clone()));
        }
        for c in &self.counters {
            push(&Line::Counters(c.clone()));
        }
        push(&Line::Footer(self.footer.clone()));
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, ScenarioError> {
        let mut config = None;
        let mut records = Vec::new();
        let mut commits = Vec::new();
        let mut counters = Vec::new();
        let mut footer = None;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| ScenarioError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            match line {
                Line::Header { config: c } => config = Some(c),
                Line::Event(r) => records.push(r),
                Line::Commit(c) => commits.push(c),
                Line::Counters(c) => counters.push(c),
                Line::Footer(f) => footer = Some(f),
            }
        }
        let missing = |what: &str| ScenarioError::Parse {
            line: 0,
            reason: format!("trace has no {what} line"),
        };
        Ok(Trace {
            config: config.ok_or_else(|| missing("header"))?,
            records,
            commits,
            counters,
            footer: footer.ok_or_else(|| missing("footer"))?,
        })
    }

    /// Committed log of `node`, by height, ignoring conflicting attempts.
    pub fn log_of(&self, node: NodeId) -> Vec<BlockId> {
        let mut log: Vec<(u64, BlockId)> = self
            .commits
            .iter()
            .filter(|c| c.node == node && !c.conflicting)
            .map(|c| (c.height, c.block_id))
            .collect();
        log.sort_by_key(|(h, _)| *h);
        log.dedup_by_key(|(h, _)| *h);
        log.into_iter().map(|(_, b)| b).collect()
    }

    pub fn sends(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.kind == RecordKind::Send)
    }

    pub fn count(&self, kind: RecordKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }
}
