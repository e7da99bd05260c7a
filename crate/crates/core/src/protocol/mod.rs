//! Consensus state machines. Both protocols are pure: every entry point maps
//! `(state, input)` to `(state, ProtocolOutput)` and never touches a clock
//! or a socket.

mod fetch;
pub mod hotstuff;
pub mod hotstuff2;

use serde::{Deserialize, Serialize};

use crate::pacemaker::{leader_of, LeaderMode};
use crate::quorum::{fault_tolerance, quorum_threshold};
use crate::safety::SafetyState;
use crate::store::BlockStore;
use crate::types::{Block, BlockId, NodeId, QuorumCertificate, ViewNumber, Vote};
use crate::CoreError;

pub use hotstuff::HotStuffNode;
pub use hotstuff2::{EntryMode, HotStuff2Node, StatusMessage};

/// Deliberate protocol bugs used to validate the checkers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// Never move the lock.
    DropLock,
    /// Ignore the one-vote-per-view rule.
    DoubleVote,
    /// Chained HotStuff commits on a two-chain instead of a three-chain.
    TwoChainCommit,
}

/// Static cluster parameters every replica shares.
#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub n: usize,
    pub f: usize,
    pub quorum: usize,
    pub leaders: LeaderMode,
    /// Whether certificates cost one accounting unit (aggregated signature).
    pub aggregate: bool,
    /// Known delay bound, used by the HotStuff-2 status wait.
    pub delta: u64,
    pub payload_units: u64,
    pub mutation: Mutation,
}

impl ClusterConfig {
    pub fn new(n: usize, leaders: LeaderMode) -> Result<Self, CoreError> {
        Ok(ClusterConfig {
            n,
            f: fault_tolerance(n)?,
            quorum: quorum_threshold(n)?,
            leaders,
            aggregate: true,
            delta: 1000,
            payload_units: 1,
            mutation: Mutation::None,
        })
    }

    pub fn leader_of(&self, view: ViewNumber) -> NodeId {
        leader_of(view, self.n, self.leaders)
    }
}

/// Everything that travels between replicas, protocol and pacemaker alike.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Proposal(Block),
    Vote(Vote),
    /// Chained HotStuff view change: the sender's key and its latest vote,
    /// sent to the leader of `view`.
    NewView {
        view: ViewNumber,
        highest_qc: QuorumCertificate,
        last_vote: Option<Vote>,
    },
    /// HotStuff-2 certificate broadcast (Prepare or Commit phase).
    Certificate(QuorumCertificate),
    StatusRequest {
        view: ViewNumber,
    },
    Status(StatusMessage),
    FetchRequest {
        block_id: BlockId,
    },
    FetchResponse(Block),
    /// Baseline pacemaker: the sender wants to enter `view`.
    Sync {
        view: ViewNumber,
        highest_qc: QuorumCertificate,
    },
    /// Epoch pacemaker: the sender wants to enter `epoch`.
    EpochSync {
        epoch: u64,
        highest_qc: QuorumCertificate,
    },
    /// Relayer pacemaker: a wish to enter `view`, sent to one relayer.
    Wish {
        view: ViewNumber,
        highest_qc: QuorumCertificate,
    },
    /// Relayer pacemaker: aggregated wishes for `view`.
    ViewCert {
        view: ViewNumber,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageClass {
    Protocol,
    Pacemaker,
}

impl Message {
    pub fn class(&self) -> MessageClass {
        match self {
            Message::Sync { .. }
            | Message::EpochSync { .. }
            | Message::Wish { .. }
            | Message::ViewCert { .. } => MessageClass::Pacemaker,
            _ => MessageClass::Protocol,
        }
    }

    /// Accounting size: one unit per message, plus payload for anything
    /// carrying a block, plus the size of any carried certificate.
    pub fn size_units(&self) -> u64 {
        1 + match self {
            Message::Proposal(b) | Message::FetchResponse(b) => {
                b.payload_units + b.justify.size_units()
            }
            Message::NewView { highest_qc, .. }
            | Message::Sync { highest_qc, .. }
            | Message::EpochSync { highest_qc, .. }
            | Message::Wish { highest_qc, .. } => highest_qc.size_units(),
            Message::Certificate(qc) => qc.size_units(),
            Message::Status(s) => s.lock.size_units(),
            // Aggregated view certificate.
            Message::ViewCert { .. } => 1,
            Message::Vote(_) | Message::StatusRequest { .. } | Message::FetchRequest { .. } => 0,
        }
    }

    /// Payload units that drive the transmission-delay model.
    pub fn payload_units(&self) -> u64 {
        match self {
            Message::Proposal(b) | Message::FetchResponse(b) => b.payload_units,
            _ => 0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Proposal(_) => "proposal",
            Message::Vote(_) => "vote",
            Message::NewView { .. } => "new_view",
            Message::Certificate(_) => "certificate",
            Message::StatusRequest { .. } => "status_request",
            Message::Status(_) => "status",
            Message::FetchRequest { .. } => "fetch_request",
            Message::FetchResponse(_) => "fetch_response",
            Message::Sync { .. } => "sync",
            Message::EpochSync { .. } => "epoch_sync",
            Message::Wish { .. } => "wish",
            Message::ViewCert { .. } => "view_cert",
        }
    }

    /// The view a message pertains to, when it has one.
    pub fn view(&self) -> Option<ViewNumber> {
        match self {
            Message::Proposal(b) | Message::FetchResponse(b) => Some(b.view),
            Message::Vote(v) => Some(v.view),
            Message::NewView { view, .. }
            | Message::StatusRequest { view }
            | Message::Sync { view, .. }
            | Message::Wish { view, .. }
            | Message::ViewCert { view } => Some(*view),
            Message::Certificate(qc) => Some(qc.view),
            Message::Status(s) => Some(s.view),
            Message::EpochSync { .. } | Message::FetchRequest { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    To(NodeId),
    /// Every node except the sender.
    Others,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub dest: Dest,
    pub msg: Message,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Committed {
    pub block_id: BlockId,
    pub height: u64,
    pub view: ViewNumber,
    /// Set when the block conflicts with this node's committed prefix.
    pub conflicting: bool,
}

/// Timers a protocol asks the host to arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ProtocolTimer {
    DeltaWait(ViewNumber),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolEvent {
    Proposed { block_id: BlockId, view: ViewNumber },
    Responsive { view: ViewNumber },
    DeltaWait { view: ViewNumber },
    Locked { view: ViewNumber, block_id: BlockId },
    /// Two different blocks certified in one view.
    Equivocation { view: ViewNumber },
    SafetyViolation { height: u64 },
    Rejected { reason: String },
}

#[derive(Debug, Default, Clone)]
pub struct ProtocolOutput {
    pub messages: Vec<Outgoing>,
    pub committed: Vec<Committed>,
    /// A certificate for this view was observed; the pacemaker may advance.
    pub advance: Option<ViewNumber>,
    pub timers: Vec<(ProtocolTimer, u64)>,
    pub events: Vec<ProtocolEvent>,
}

impl ProtocolOutput {
    pub fn send(&mut self, to: NodeId, msg: Message) {
        self.messages.push(Outgoing {
            dest: Dest::To(to),
            msg,
        });
    }

    pub fn broadcast(&mut self, msg: Message) {
        self.messages.push(Outgoing {
            dest: Dest::Others,
            msg,
        });
    }

    pub fn signal_advance(&mut self, view: ViewNumber) {
        self.advance = Some(self.advance.map_or(view, |v| v.max(view)));
    }

    pub fn merge(&mut self, other: ProtocolOutput) {
        self.messages.extend(other.messages);
        self.committed.extend(other.committed);
        if let Some(v) = other.advance {
            self.signal_advance(v);
        }
        self.timers.extend(other.timers);
        self.events.extend(other.events);
    }

    pub fn votes(&self) -> impl Iterator<Item = &Vote> {
        self.messages.iter().filter_map(|o| match &o.msg {
            Message::Vote(v) => Some(v),
            _ => None,
        })
    }

    pub fn proposals(&self) -> impl Iterator<Item = &Block> {
        self.messages.iter().filter_map(|o| match &o.msg {
            Message::Proposal(b) => Some(b),
            _ => None,
        })
    }
}

/// Host-facing contract shared by both protocol state machines.
pub trait Replica {
    fn id(&self) -> NodeId;

    fn config(&self) -> &ClusterConfig;

    fn safety(&self) -> &SafetyState;

    fn store(&self) -> &BlockStore;

    /// The pacemaker granted `view`; `via_qc` tells whether entry was caused
    /// by a certificate for the preceding view.
    fn enter_view(&mut self, view: ViewNumber, via_qc: bool) -> ProtocolOutput;

    /// A protocol message delivered from `from`.
    fn on_message(&mut self, from: NodeId, msg: &Message) -> ProtocolOutput;

    fn on_timer(&mut self, timer: ProtocolTimer) -> ProtocolOutput;

    /// A certificate learned out of band (pacemaker traffic).
    fn observe_qc(&mut self, from: NodeId, qc: &QuorumCertificate) -> ProtocolOutput;

    /// Local view timeout reported by the pacemaker.
    fn on_local_timeout(&mut self, _view: ViewNumber) -> ProtocolOutput {
        ProtocolOutput::default()
    }

    /// Inserts a block the node itself fabricated (used by Byzantine
    /// strategies); the parent must already be stored.
    fn adopt_block(&mut self, block: Block);
}

/// Structural checks every proposal must pass before a replica looks at it.
pub(crate) fn proposal_well_formed(cfg: &ClusterConfig, block: &Block) -> Result<(), String> {
    if !block.id_matches() {
        return Err("digest mismatch".into());
    }
    if block.proposer != cfg.leader_of(block.view) {
        return Err(format!("{} does not lead view {}", block.proposer, block.view));
    }
    if block.view <= block.justify.view {
        return Err("view does not exceed justify view".into());
    }
    if block.parent != block.justify.block_id {
        return Err("parent differs from justified block".into());
    }
    if !crate::quorum::verify_qc(&block.justify, cfg.n) {
        return Err("justify does not verify".into());
    }
    Ok(())
}
