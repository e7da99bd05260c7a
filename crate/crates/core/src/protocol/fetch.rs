//! Parent fetching for out-of-order proposals and certificates.

use std::collections::{BTreeMap, BTreeSet};

use crate::types::{Block, BlockId, NodeId, QuorumCertificate};

use super::{Message, ProtocolOutput};

/// Work parked until a missing block arrives.
#[derive(Debug, Clone)]
pub(crate) enum Parked {
    Proposal(NodeId, Block),
    Fetched(NodeId, Block),
    Qc(NodeId, QuorumCertificate),
}

#[derive(Debug, Default, Clone)]
pub(crate) struct Fetcher {
    waiting: BTreeMap<BlockId, Vec<Parked>>,
    requested: BTreeSet<(BlockId, NodeId)>,
}

impl Fetcher {
    /// Parks `item` behind `missing` and asks `peer` for it once.
    pub fn park(&mut self, missing: BlockId, peer: NodeId, me: NodeId, item: Parked, out: &mut ProtocolOutput) {
        self.waiting.entry(missing).or_default().push(item);
        if peer != me && self.requested.insert((missing, peer)) {
            out.send(peer, Message::FetchRequest { block_id: missing });
        }
    }

    /// Everything that was waiting on `id`.
    pub fn release(&mut self, id: &BlockId) -> Vec<Parked> {
        self.waiting.remove(id).unwrap_or_default()
    }

    pub fn pending(&self) -> usize {
        self.waiting.values().map(Vec::len).sum()
    }
}
