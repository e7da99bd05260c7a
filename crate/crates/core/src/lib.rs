//! Deterministic BFT consensus laboratory: chained HotStuff and HotStuff-2
//! as pure state machines, a seeded partial-synchrony simulator, and the
//! checkers and metrics that audit them.

pub mod error;
pub mod harness;
pub mod pacemaker;
pub mod protocol;
pub mod quorum;
pub mod safety;
pub mod simnet;
pub mod store;
pub mod types;

pub use error::{CoreError, ProtocolError};
pub use quorum::{fault_tolerance, form_qc, highest_qc, quorum_threshold, verify_qc};
pub use safety::SafetyState;
pub use store::BlockStore;
pub use types::{
    genesis_block, genesis_id, genesis_qc, Block, BlockId, Digest32, NodeId, Phase,
    QuorumCertificate, SignatureToken, ViewNumber, Vote,
};
