//! Domain values shared by both protocols: identifiers, blocks, votes and
//! quorum certificates.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Index of a replica in `[0, n)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ViewNumber(pub u64);

impl ViewNumber {
    pub const GENESIS: ViewNumber = ViewNumber(0);

    pub fn next(self) -> ViewNumber {
        ViewNumber(self.0 + 1)
    }

    /// The preceding view, saturating at genesis.
    pub fn prev(self) -> ViewNumber {
        ViewNumber(self.0.saturating_sub(1))
    }
}

impl fmt::Display for ViewNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Vote phase. Chained HotStuff only ever uses `Generic`; HotStuff-2 uses
/// `Prepare` and `Commit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Generic,
    Prepare,
    Commit,
}

impl Phase {
    fn tag(self) -> u8 {
        match self {
            Phase::Generic => 0,
            Phase::Prepare => 1,
            Phase::Commit => 2,
        }
    }
}

/// 32-byte structural digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Digest32(#[serde(with = "hex_bytes")] pub [u8; 32]);

impl Digest32 {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.short())
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.short())
    }
}

mod hex_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        let raw = hex::decode(&text).map_err(D::Error::custom)?;
        raw.try_into()
            .map_err(|_| D::Error::custom("expected 32 bytes of hex"))
    }
}

pub type BlockId = Digest32;

/// Abstract signature: who signed and over what subject. Unforgeability is
/// enforced by the simulator, not by cryptography.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SignatureToken {
    pub signer: NodeId,
    pub subject: Digest32,
}

impl SignatureToken {
    pub fn sign(signer: NodeId, block_id: &BlockId, view: ViewNumber, phase: Phase) -> Self {
        SignatureToken {
            signer,
            subject: vote_subject(block_id, view, phase),
        }
    }
}

/// Digest a vote signs over.
pub fn vote_subject(block_id: &BlockId, view: ViewNumber, phase: Phase) -> Digest32 {
    let mut h = Sha256::new();
    h.update(b"vote");
    h.update(block_id.0);
    h.update(view.0.to_be_bytes());
    h.update([phase.tag()]);
    Digest32(h.finalize().into())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vote {
    pub block_id: BlockId,
    pub view: ViewNumber,
    pub phase: Phase,
    pub voter: NodeId,
    pub sig: SignatureToken,
}

impl Vote {
    pub fn new(block_id: BlockId, view: ViewNumber, phase: Phase, voter: NodeId) -> Self {
        Vote {
            block_id,
            view,
            phase,
            voter,
            sig: SignatureToken::sign(voter, &block_id, view, phase),
        }
    }

    /// Token signer matches the voter and signs this vote's subject.
    pub fn token_valid(&self) -> bool {
        self.sig.signer == self.voter
            && self.sig.subject == vote_subject(&self.block_id, self.view, self.phase)
    }
}

/// Aggregated evidence that a quorum voted for one block in one view/phase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuorumCertificate {
    pub block_id: BlockId,
    pub view: ViewNumber,
    pub phase: Phase,
    pub tokens: Vec<SignatureToken>,
    /// When set, the certificate costs one accounting unit on the wire.
    pub aggregated: bool,
}

impl QuorumCertificate {
    pub fn signers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.tokens.iter().map(|t| t.signer)
    }

    pub fn size_units(&self) -> u64 {
        if self.aggregated {
            1
        } else {
            self.tokens.len() as u64
        }
    }

    pub fn is_genesis(&self) -> bool {
        self.view == ViewNumber::GENESIS && self.block_id == genesis_id()
    }
}

/// A proposal: the unit of replication.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub parent: BlockId,
    pub view: ViewNumber,
    pub justify: QuorumCertificate,
    pub payload_units: u64,
    pub proposer: NodeId,
}

impl Block {
    pub fn new(
        parent: BlockId,
        view: ViewNumber,
        justify: QuorumCertificate,
        payload_units: u64,
        proposer: NodeId,
    ) -> Self {
        let id = block_digest(&parent, view, &justify, payload_units, proposer);
        Block {
            id,
            parent,
            view,
            justify,
            payload_units,
            proposer,
        }
    }

    /// Recomputes the digest and compares it with `id`.
    pub fn id_matches(&self) -> bool {
        if self.is_genesis() {
            return self.id == genesis_id();
        }
        self.id
            == block_digest(
                &self.parent,
                self.view,
                &self.justify,
                self.payload_units,
                self.proposer,
            )
    }

    pub fn is_genesis(&self) -> bool {
        self.view == ViewNumber::GENESIS && self.id == genesis_id()
    }
}

fn block_digest(
    parent: &BlockId,
    view: ViewNumber,
    justify: &QuorumCertificate,
    payload_units: u64,
    proposer: NodeId,
) -> BlockId {
    let mut h = Sha256::new();
    h.update(b"block");
    h.update(parent.0);
    h.update(view.0.to_be_bytes());
    h.update(justify.block_id.0);
    h.update(justify.view.0.to_be_bytes());
    h.update([justify.phase.tag()]);
    for t in &justify.tokens {
        h.update(t.signer.0.to_be_bytes());
    }
    h.update(payload_units.to_be_bytes());
    h.update(proposer.0.to_be_bytes());
    Digest32(h.finalize().into())
}

pub fn genesis_id() -> BlockId {
    let mut h = Sha256::new();
    h.update(b"genesis");
    Digest32(h.finalize().into())
}

/// Synthetic view-0 certificate signed by every node.
pub fn genesis_qc(n: usize) -> QuorumCertificate {
    let id = genesis_id();
    QuorumCertificate {
        block_id: id,
        view: ViewNumber::GENESIS,
        phase: Phase::Generic,
        tokens: (0..n as u32)
            .map(|i| SignatureToken::sign(NodeId(i), &id, ViewNumber::GENESIS, Phase::Generic))
            .collect(),
        aggregated: true,
    }
}

pub fn genesis_block(n: usize) -> Block {
    Block {
        id: genesis_id(),
        parent: genesis_id(),
        view: ViewNumber::GENESIS,
        justify: genesis_qc(n),
        payload_units: 0,
        proposer: NodeId(0),
    }
}
