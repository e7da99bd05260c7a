use thiserror::Error;

use crate::types::{BlockId, NodeId, ViewNumber};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoreError {
    #[error("cluster size {0} is not of the form 3f+1 with f >= 1")]
    MalformedClusterSize(usize),
    #[error("only {have} distinct votes, quorum needs {need}")]
    InsufficientVotes { have: usize, need: usize },
    #[error("votes disagree on block, view or phase")]
    MixedSubjects,
    #[error("vote from {0} carries a token it did not sign")]
    BadSignatureToken(NodeId),
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("node {node} is not the leader of view {view}")]
    NotLeader { node: NodeId, view: ViewNumber },
    #[error("view {requested} is stale, node is in view {current}")]
    StaleView {
        requested: ViewNumber,
        current: ViewNumber,
    },
    #[error("quorum certificate failed verification")]
    InvalidQc,
    #[error("block {0} does not match its digest or proposer")]
    InvalidBlock(BlockId),
    #[error("parent {0} is unknown; block buffered")]
    UnknownParent(BlockId),
    #[error(transparent)]
    Core(#[from] CoreError),
}
