//! Scripted Byzantine behaviour.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::protocol::Message;
use crate::store::BlockStore;
use crate::types::Block;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "strategy")]
pub enum ByzantineStrategy {
    /// Stops sending and processing at `at`.
    Crash { at: u64 },
    /// Never sends its own proposals.
    SilentLeader,
    /// Proposes two conflicting blocks in each view it leads.
    Equivocator,
    /// Never votes.
    VoteWithholder,
    /// Every message arrives at the latest legal instant.
    MaxDelay,
}

impl ByzantineStrategy {
    pub const ALL: [ByzantineStrategy; 5] = [
        ByzantineStrategy::Crash { at: 0 },
        ByzantineStrategy::SilentLeader,
        ByzantineStrategy::Equivocator,
        ByzantineStrategy::VoteWithholder,
        ByzantineStrategy::MaxDelay,
    ];
}

impl fmt::Display for ByzantineStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ByzantineStrategy::Crash { at } => write!(f, "crash@{at}"),
            ByzantineStrategy::SilentLeader => f.write_str("silent-leader"),
            ByzantineStrategy::Equivocator => f.write_str("equivocator"),
            ByzantineStrategy::VoteWithholder => f.write_str("vote-withholder"),
            ByzantineStrategy::MaxDelay => f.write_str("max-delay"),
        }
    }
}

impl FromStr for ByzantineStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("crash") {
            let at = match rest.strip_prefix('@') {
                Some(t) => t
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad crash time in {s:?}"))?,
                None if rest.is_empty() => 0,
                None => return Err(format!("unknown strategy {s:?}")),
            };
            return Ok(ByzantineStrategy::Crash { at });
        }
        match s {
            "silent-leader" => Ok(ByzantineStrategy::SilentLeader),
            "equivocator" => Ok(ByzantineStrategy::Equivocator),
            "vote-withholder" => Ok(ByzantineStrategy::VoteWithholder),
            "max-delay" => Ok(ByzantineStrategy::MaxDelay),
            _ => Err(format!("unknown strategy {s:?}")),
        }
    }
}

/// What happens to one outgoing message of a corrupted node.
#[derive(Debug, Clone, PartialEq)]
pub enum Disposition {
    Drop,
    Send(Message),
    /// Deliver at the latest legal instant.
    SendLate(Message),
}

/// Filters one message. Equivocation is not handled here: it needs the
/// node's block store and is applied by the simulator.
pub fn apply_strategy(strategy: ByzantineStrategy, now: u64, msg: Message) -> Disposition {
    match strategy {
        ByzantineStrategy::Crash { at } if now >= at => Disposition::Drop,
        ByzantineStrategy::SilentLeader => match msg {
            Message::Proposal(_) => Disposition::Drop,
            m => Disposition::Send(m),
        },
        ByzantineStrategy::VoteWithholder => match msg {
            Message::Vote(_) => Disposition::Drop,
            Message::NewView {
                view, highest_qc, ..
            } => Disposition::Send(Message::NewView {
                view,
                highest_qc,
                last_vote: None,
            }),
            m => Disposition::Send(m),
        },
        ByzantineStrategy::MaxDelay => Disposition::SendLate(msg),
        _ => Disposition::Send(msg),
    }
}

/// A block conflicting with `a` in the same view. Depth 1 reuses `a`'s
/// parent; depth `d > 1` extends the certificate `d - 1` justify links
/// further back, so the fork undercuts deeper locks.
pub fn fork_block(store: &BlockStore, a: &Block, depth: u32) -> Block {
    let mut justify = a.justify.clone();
    for _ in 1..depth {
        match store.get(&justify.block_id) {
            Some(b) if !b.is_genesis() => justify = b.justify.clone(),
            _ => break,
        }
    }
    let payload = if justify == a.justify {
        a.payload_units + 1
    } else {
        a.payload_units
    };
    Block::new(justify.block_id, a.view, justify, payload, a.proposer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{genesis_qc, NodeId, Phase, ViewNumber, Vote};

    #[test]
    fn strategy_round_trips_text() {
        for s in ByzantineStrategy::ALL {
            assert_eq!(s.to_string().parse::<ByzantineStrategy>().unwrap(), s);
        }
        assert_eq!(
            "crash@250".parse::<ByzantineStrategy>().unwrap(),
            ByzantineStrategy::Crash { at: 250 }
        );
        assert!("sleepy".parse::<ByzantineStrategy>().is_err());
    }

    #[test]
    fn filters() {
        let g = genesis_qc(4);
        let b = Block::new(g.block_id, ViewNumber(1), g.clone(), 1, NodeId(1));
        let v = Vote::new(b.id, b.view, Phase::Generic, NodeId(1));
        let prop = Message::Proposal(b);
        let vote = Message::Vote(v.clone());
        assert_eq!(apply_strategy(ByzantineStrategy::SilentLeader, 0, prop.clone()), Disposition::Drop);
        assert_eq!(
            apply_strategy(ByzantineStrategy::SilentLeader, 0, vote.clone()),
            Disposition::Send(vote.clone())
        );
        assert_eq!(apply_strategy(ByzantineStrategy::VoteWithholder, 0, vote.clone()), Disposition::Drop);
        let nv = Message::NewView {
            view: ViewNumber(2),
            highest_qc: g.clone(),
            last_vote: Some(v),
        };
        assert_eq!(
            apply_strategy(ByzantineStrategy::VoteWithholder, 0, nv),
            Disposition::Send(Message::NewView {
                view: ViewNumber(2),
                highest_qc: g,
                last_vote: None
            })
        );
        assert_eq!(
            apply_strategy(ByzantineStrategy::Crash { at: 5 }, 4, prop.clone()),
            Disposition::Send(prop.clone())
        );
        assert_eq!(apply_strategy(ByzantineStrategy::Crash { at: 5 }, 5, prop), Disposition::Drop);
    }

    #[test]
    fn fork_conflicts_with_original() {
        let store = BlockStore::new(4);
        let g = genesis_qc(4);
        let a = Block::new(g.block_id, ViewNumber(1), g, 1, NodeId(1));
        let b = fork_block(&store, &a, 1);
        assert_ne!(a.id, b.id);
        assert_eq!(a.view, b.view);
        assert_eq!(a.parent, b.parent);
    }
}
