//! Chained (pipelined) three-phase HotStuff.
//!
//! Every block is one generic step: a certificate on block `b` is a one-chain
//! (raises the key), locks `b`'s justified parent (two-chain) and commits the
//! grandparent when the three blocks sit in consecutive views (three-chain).
//! Votes flow to the leader of the next view, which aggregates them into the
//! certificate its own proposal carries.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::ProtocolError;
use crate::quorum::{form_qc_with, verify_qc};
use crate::safety::SafetyState;
use crate::store::BlockStore;
use crate::types::{Block, BlockId, NodeId, Phase, QuorumCertificate, ViewNumber, Vote};

use super::fetch::{Fetcher, Parked};
use super::{
    proposal_well_formed, ClusterConfig, Committed, Message, Mutation, ProtocolEvent,
    ProtocolOutput, ProtocolTimer, Replica,
};

#[derive(Debug, Clone)]
pub struct HotStuffNode {
    id: NodeId,
    cfg: ClusterConfig,
    safety: SafetyState,
    store: BlockStore,
    pending_votes: BTreeMap<(ViewNumber, BlockId), BTreeMap<NodeId, Vote>>,
    formed: BTreeSet<(ViewNumber, BlockId)>,
    new_views: BTreeMap<ViewNumber, BTreeSet<NodeId>>,
    proposed: BTreeSet<ViewNumber>,
    last_vote: Option<Vote>,
    fetcher: Fetcher,
    inbox: VecDeque<(NodeId, Message)>,
}

impl HotStuffNode {
    pub fn new(id: NodeId, cfg: ClusterConfig) -> Self {
        HotStuffNode {
            id,
            safety: SafetyState::new(cfg.n),
            store: BlockStore::new(cfg.n),
            cfg,
            pending_votes: BTreeMap::new(),
            formed: BTreeSet::new(),
            new_views: BTreeMap::new(),
            proposed: BTreeSet::new(),
            last_vote: None,
            fetcher: Fetcher::default(),
            inbox: VecDeque::new(),
        }
    }

    pub fn last_vote(&self) -> Option<&Vote> {
        self.last_vote.as_ref()
    }

    pub fn pending_vote_views(&self) -> impl Iterator<Item = ViewNumber> + '_ {
        self.pending_votes.keys().map(|(v, _)| *v)
    }

    pub fn parked(&self) -> usize {
        self.fetcher.pending()
    }

    /// Builds (without sending) this node's proposal for `view`, extending
    /// the highest certificate it knows.
    pub fn make_proposal(&self, view: ViewNumber, payload_units: u64) -> Result<Block, ProtocolError> {
        if self.cfg.leader_of(view) != self.id {
            return Err(ProtocolError::NotLeader {
                node: self.id,
                view,
            });
        }
        if self.safety.current_view != view {
            return Err(ProtocolError::StaleView {
                requested: view,
                current: self.safety.current_view,
            });
        }
        let key = &self.safety.highest_qc;
        Ok(Block::new(key.block_id, view, key.clone(), payload_units, self.id))
    }

    pub fn on_proposal(&mut self, from: NodeId, block: &Block) -> Result<ProtocolOutput, ProtocolError> {
        if let Err(reason) = proposal_well_formed(&self.cfg, block) {
            return Err(if reason.contains("justify") {
                ProtocolError::InvalidQc
            } else {
                ProtocolError::InvalidBlock(block.id)
            });
        }
        Ok(self.on_message(from, &Message::Proposal(block.clone())))
    }

    pub fn on_vote(&mut self, vote: &Vote) -> Result<ProtocolOutput, ProtocolError> {
        if !vote.token_valid() || vote.phase != Phase::Generic {
            return Err(crate::CoreError::BadSignatureToken(vote.voter).into());
        }
        Ok(self.on_message(vote.voter, &Message::Vote(vote.clone())))
    }

    pub fn process_qc(&mut self, qc: &QuorumCertificate) -> Result<ProtocolOutput, ProtocolError> {
        if !verify_qc(qc, self.cfg.n) {
            return Err(ProtocolError::InvalidQc);
        }
        let mut out = ProtocolOutput::default();
        self.absorb_qc(self.id, qc, &mut out);
        self.drain(&mut out);
        Ok(out)
    }

    fn route(&mut self, to: NodeId, msg: Message, out: &mut ProtocolOutput) {
        if to == self.id {
            self.inbox.push_back((to, msg));
        } else {
            out.send(to, msg);
        }
    }

    fn drain(&mut self, out: &mut ProtocolOutput) {
        while let Some((from, msg)) = self.inbox.pop_front() {
            self.handle(from, &msg, out);
        }
    }

    fn handle(&mut self, from: NodeId, msg: &Message, out: &mut ProtocolOutput) {
        match msg {
            Message::Proposal(b) => self.handle_proposal(from, b.clone(), out),
            Message::Vote(v) => self.handle_vote(from, v, out),
            Message::NewView {
                view,
                highest_qc,
                last_vote,
            } => self.handle_new_view(from, *view, highest_qc, last_vote.as_ref(), out),
            Message::FetchRequest { block_id } => {
                if let Some(b) = self.store.get(block_id) {
                    let reply = Message::FetchResponse(b.clone());
                    self.route(from, reply, out);
                }
            }
            Message::FetchResponse(b) => self.handle_fetched(from, b.clone(), out),
            Message::Certificate(qc) => self.absorb_qc(from, qc, out),
            _ => {}
        }
    }

    fn handle_proposal(&mut self, from: NodeId, block: Block, out: &mut ProtocolOutput) {
        if let Err(reason) = proposal_well_formed(&self.cfg, &block) {
            out.events.push(ProtocolEvent::Rejected { reason });
            return;
        }
        if !self.store.contains(&block.parent) {
            let parent = block.parent;
            self.fetcher
                .park(parent, from, self.id, Parked::Proposal(from, block), out);
            return;
        }
        let id = block.id;
        let fresh_insert = self.store.insert(block.clone()).unwrap_or(false);
        self.absorb_qc(from, &block.justify, out);
        self.maybe_vote(&block, out);
        if fresh_insert {
            self.release(&id, out);
        }
    }

    fn maybe_vote(&mut self, block: &Block, out: &mut ProtocolOutput) {
        let s = &self.safety;
        let fresh = self.cfg.mutation == Mutation::DoubleVote || block.view > s.voted(Phase::Generic);
        let current = block.view >= s.current_view;
        let lock = &s.locked_qc;
        let safe = block.justify.view > lock.view
            || self.store.extends(&block.id, &lock.block_id).unwrap_or(false);
        if !(fresh && current && safe) {
            return;
        }
        let vote = Vote::new(block.id, block.view, Phase::Generic, self.id);
        self.safety.record_vote(Phase::Generic, block.view);
        self.last_vote = Some(vote.clone());
        let next_leader = self.cfg.leader_of(block.view.next());
        self.route(next_leader, Message::Vote(vote), out);
    }

    fn handle_fetched(&mut self, from: NodeId, block: Block, out: &mut ProtocolOutput) {
        if !block.id_matches() || !verify_qc(&block.justify, self.cfg.n) {
            return;
        }
        if self.store.contains(&block.id) {
            return;
        }
        if !self.store.contains(&block.parent) {
            let parent = block.parent;
            self.fetcher
                .park(parent, from, self.id, Parked::Fetched(from, block), out);
            return;
        }
        let id = block.id;
        if self.store.insert(block).unwrap_or(false) {
            self.release(&id, out);
        }
    }

    fn release(&mut self, id: &BlockId, out: &mut ProtocolOutput) {
        for item in self.fetcher.release(id) {
            match item {
                Parked::Proposal(from, b) => self.handle_proposal(from, b, out),
                Parked::Fetched(from, b) => self.handle_fetched(from, b, out),
                Parked::Qc(from, qc) => self.absorb_qc(from, &qc, out),
            }
        }
    }

    fn handle_vote(&mut self, from: NodeId, vote: &Vote, out: &mut ProtocolOutput) {
        if vote.phase != Phase::Generic || !vote.token_valid() {
            out.events.push(ProtocolEvent::Rejected {
                reason: format!("bad vote token from {from}"),
            });
            return;
        }
        if vote.view < self.safety.highest_qc.view {
            return;
        }
        let key = (vote.view, vote.block_id);
        if self.formed.contains(&key) {
            return;
        }
        let bucket = self.pending_votes.entry(key).or_default();
        bucket.insert(vote.voter, vote.clone());
        if bucket.len() < self.cfg.quorum {
            return;
        }
        let votes: Vec<Vote> = bucket.values().cloned().collect();
        let qc = match form_qc_with(&votes, self.cfg.n, self.cfg.aggregate) {
            Ok(qc) => qc,
            Err(e) => {
                out.events.push(ProtocolEvent::Rejected {
                    reason: e.to_string(),
                });
                return;
            }
        };
        self.formed.insert(key);
        self.pending_votes.remove(&key);
        self.absorb_qc(vote.voter, &qc, out);
    }

    fn handle_new_view(
        &mut self,
        from: NodeId,
        view: ViewNumber,
        highest_qc: &QuorumCertificate,
        last_vote: Option<&Vote>,
        out: &mut ProtocolOutput,
    ) {
        if self.cfg.leader_of(view) != self.id {
            return;
        }
        // Absorb the carried key and vote before counting the sender, so a
        // certificate they complete is in hand when the proposal goes out.
        self.absorb_qc(from, highest_qc, out);
        if let Some(v) = last_vote {
            if v.voter == from {
                self.handle_vote(from, v, out);
            }
        }
        if view >= self.safety.current_view {
            self.new_views.entry(view).or_default().insert(from);
        }
        self.try_propose(out);
    }

    /// One-chain, two-chain and three-chain processing of a certificate.
    fn absorb_qc(&mut self, from: NodeId, qc: &QuorumCertificate, out: &mut ProtocolOutput) {
        if !verify_qc(qc, self.cfg.n) {
            out.events.push(ProtocolEvent::Rejected {
                reason: format!("invalid certificate from {from}"),
            });
            return;
        }
        if qc.is_genesis() {
            return;
        }
        if !self.store.contains(&qc.block_id) {
            self.fetcher
                .park(qc.block_id, from, self.id, Parked::Qc(from, qc.clone()), out);
            return;
        }
        let raised = self.safety.observe_highest(qc);
        let b = self.store.get(&qc.block_id).cloned().expect("checked above");
        if self.cfg.mutation != Mutation::DropLock && !b.justify.is_genesis() {
            if self.safety.observe_lock(&b.justify) {
                out.events.push(ProtocolEvent::Locked {
                    view: self.safety.locked_qc.view,
                    block_id: self.safety.locked_qc.block_id,
                });
            }
        }
        self.apply_commit_rule(&b, out);
        out.signal_advance(qc.view);
        if raised {
            let floor = self.safety.highest_qc.view;
            self.pending_votes.retain(|(v, _), _| *v >= floor);
            self.formed.retain(|(v, _)| *v >= floor);
        }
        self.try_propose(out);
    }

    fn apply_commit_rule(&mut self, head: &Block, out: &mut ProtocolOutput) {
        let Some(mid) = self.store.get(&head.justify.block_id).cloned() else {
            return;
        };
        let chained = |child: &Block, parent: &Block| {
            child.parent == parent.id && child.view == parent.view.next()
        };
        if self.cfg.mutation == Mutation::TwoChainCommit {
            if !mid.is_genesis() && chained(head, &mid) {
                self.commit(&mid.id, out);
            }
            return;
        }
        if mid.is_genesis() {
            return;
        }
        let Some(tail) = self.store.get(&mid.justify.block_id).cloned() else {
            return;
        };
        if !tail.is_genesis() && chained(head, &mid) && chained(&mid, &tail) {
            self.commit(&tail.id, out);
        }
    }

    fn commit(&mut self, target: &BlockId, out: &mut ProtocolOutput) {
        match self.store.commit(target) {
            Ok(ids) => {
                for id in ids {
                    let b = self.store.get(&id).expect("committed blocks are stored");
                    out.committed.push(Committed {
                        block_id: id,
                        height: self.store.height(&id).unwrap_or_default(),
                        view: b.view,
                        conflicting: false,
                    });
                }
            }
            Err(conflict) => {
                for (id, height) in conflict.branch {
                    let view = self.store.get(&id).map(|b| b.view).unwrap_or_default();
                    out.events.push(ProtocolEvent::SafetyViolation { height });
                    out.committed.push(Committed {
                        block_id: id,
                        height,
                        view,
                        conflicting: true,
                    });
                }
            }
        }
    }

    fn try_propose(&mut self, out: &mut ProtocolOutput) {
        let view = self.safety.current_view;
        if view == ViewNumber::GENESIS
            || self.cfg.leader_of(view) != self.id
            || self.proposed.contains(&view)
        {
            return;
        }
        let keyed = self.safety.highest_qc.view.next() == view;
        let gathered = self
            .new_views
            .get(&view)
            .is_some_and(|s| s.len() >= self.cfg.quorum);
        if !(keyed || gathered) {
            return;
        }
        let Ok(block) = self.make_proposal(view, self.cfg.payload_units) else {
            return;
        };
        self.proposed.insert(view);
        out.events.push(ProtocolEvent::Proposed {
            block_id: block.id,
            view,
        });
        out.broadcast(Message::Proposal(block.clone()));
        self.handle_proposal(self.id, block, out);
    }
}

impl Replica for HotStuffNode {
    fn id(&self) -> NodeId {
        self.id
    }

    fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    fn safety(&self) -> &SafetyState {
        &self.safety
    }

    fn store(&self) -> &BlockStore {
        &self.store
    }

    fn enter_view(&mut self, view: ViewNumber, via_qc: bool) -> ProtocolOutput {
        let mut out = ProtocolOutput::default();
        if view <= self.safety.current_view {
            return out;
        }
        self.safety.current_view = view;
        self.new_views.retain(|v, _| *v >= view);
        if !via_qc {
            let nv = Message::NewView {
                view,
                highest_qc: self.safety.highest_qc.clone(),
                last_vote: self.last_vote.clone(),
            };
            let leader = self.cfg.leader_of(view);
            self.route(leader, nv, &mut out);
        }
        self.try_propose(&mut out);
        self.drain(&mut out);
        out
    }

    fn on_message(&mut self, from: NodeId, msg: &Message) -> ProtocolOutput {
        let mut out = ProtocolOutput::default();
        self.handle(from, msg, &mut out);
        self.drain(&mut out);
        out
    }

    fn on_timer(&mut self, _timer: ProtocolTimer) -> ProtocolOutput {
        ProtocolOutput::default()
    }

    fn observe_qc(&mut self, from: NodeId, qc: &QuorumCertificate) -> ProtocolOutput {
        let mut out = ProtocolOutput::default();
        self.absorb_qc(from, qc, &mut out);
        self.drain(&mut out);
        out
    }

    fn adopt_block(&mut self, block: Block) {
        let _ = self.store.insert(block);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pacemaker::LeaderMode;
    use crate::protocol::Dest;
    use crate::quorum::form_qc;
    use crate::types::genesis_qc;

    fn cfg() -> ClusterConfig {
        ClusterConfig::new(4, LeaderMode::RoundRobin).unwrap()
    }

    fn qc_for(block: &Block, voters: &[u32]) -> QuorumCertificate {
        let votes: Vec<Vote> = voters
            .iter()
            .map(|&i| Vote::new(block.id, block.view, Phase::Generic, NodeId(i)))
            .collect();
        form_qc(&votes, 4).unwrap()
    }

    /// Builds a certified chain at the given views, each block justified by
    /// the previous one. Returns blocks and their certificates.
    fn chain(views: &[u64]) -> (Vec<Block>, Vec<QuorumCertificate>) {
        let mut blocks = Vec::new();
        let mut qcs = Vec::new();
        let mut justify = genesis_qc(4);
        for &v in views {
            let view = ViewNumber(v);
            let leader = cfg().leader_of(view);
            let b = Block::new(justify.block_id, view, justify.clone(), 1, leader);
            let qc = qc_for(&b, &[0, 1, 2]);
            justify = qc.clone();
            blocks.push(b);
            qcs.push(qc);
        }
        (blocks, qcs)
    }

    fn feed(node: &mut HotStuffNode, blocks: &[Block]) {
        for b in blocks {
            node.adopt_block(b.clone());
        }
    }

    fn votes_in(out: &ProtocolOutput) -> Vec<(Dest, Vote)> {
        out.messages
            .iter()
            .filter_map(|o| match &o.msg {
                Message::Vote(v) => Some((o.dest, v.clone())),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn proposal_extends_highest_qc() {
        let (blocks, qcs) = chain(&[1, 2, 3, 4, 5]);
        // Leader of view 6 at n = 4 is node 2.
        let mut node = HotStuffNode::new(NodeId(2), cfg());
        feed(&mut node, &blocks);
        node.process_qc(&qcs[4]).unwrap();
        node.enter_view(ViewNumber(6), true);
        // enter_view already proposed; rebuild to inspect.
        let b6 = node.make_proposal(ViewNumber(6), 1).unwrap();
        assert_eq!(b6.parent, blocks[4].id);
        assert_eq!(b6.justify, qcs[4]);
        assert_eq!(b6.view, ViewNumber(6));
    }

    #[test]
    fn stale_view_and_not_leader() {
        let mut node = HotStuffNode::new(NodeId(2), cfg());
        node.enter_view(ViewNumber(7), false);
        assert!(matches!(
            node.make_proposal(ViewNumber(6), 1),
            Err(ProtocolError::StaleView { .. })
        ));
        assert!(matches!(
            node.make_proposal(ViewNumber(7), 1),
            Err(ProtocolError::NotLeader { .. })
        ));
    }

    #[test]
    fn view_change_leader_learns_key_from_one_holder() {
        // Node 2 leads view 6 but only knows the certificate for b4; node 3
        // holds qc(b5). After the view change, node 2's proposal must be
        // justified by qc(b5).
        let (blocks, qcs) = chain(&[1, 2, 3, 4, 5]);
        let mut leader = HotStuffNode::new(NodeId(2), cfg());
        feed(&mut leader, &blocks);
        leader.process_qc(&qcs[3]).unwrap();
        let out = leader.enter_view(ViewNumber(6), false);
        assert_eq!(out.proposals().count(), 0, "must wait for keys");
        for (from, key) in [(0u32, &qcs[3]), (3, &qcs[4])] {
            let out = leader.on_message(
                NodeId(from),
                &Message::NewView {
                    view: ViewNumber(6),
                    highest_qc: key.clone(),
                    last_vote: None,
                },
            );
            if from == 3 {
                let p: Vec<_> = out.proposals().cloned().collect();
                assert_eq!(p.len(), 1);
                assert_eq!(p[0].justify, qcs[4]);
                assert_eq!(p[0].parent, blocks[4].id);
            }
        }
    }

    #[test]
    fn votes_go_to_next_leader() {
        let (blocks, _) = chain(&[1]);
        let mut node = HotStuffNode::new(NodeId(0), cfg());
        node.enter_view(ViewNumber(1), true);
        let out = node.on_proposal(NodeId(1), &blocks[0]).unwrap();
        let votes = votes_in(&out);
        assert_eq!(votes.len(), 1);
        assert_eq!(votes[0].0, Dest::To(NodeId(2)));
        assert_eq!(votes[0].1.block_id, blocks[0].id);
        // A second proposal for the same view gets no vote.
        let alt = Block::new(blocks[0].parent, ViewNumber(1), genesis_qc(4), 9, NodeId(1));
        let out = node.on_proposal(NodeId(1), &alt).unwrap();
        assert!(votes_in(&out).is_empty());
    }

    fn locked_on_b2() -> (HotStuffNode, Vec<Block>, Vec<QuorumCertificate>) {
        // Node 2 leads neither view 4 nor view 5.
        let (blocks, qcs) = chain(&[1, 2, 3]);
        let mut node = HotStuffNode::new(NodeId(2), cfg());
        feed(&mut node, &blocks);
        node.process_qc(&qcs[2]).unwrap();
        assert_eq!(node.safety().locked_qc, qcs[1]);
        node.enter_view(ViewNumber(4), true);
        (node, blocks, qcs)
    }

    #[test]
    fn vote_when_extending_lock() {
        let (mut node, blocks, qcs) = locked_on_b2();
        let b4 = Block::new(blocks[2].id, ViewNumber(4), qcs[2].clone(), 1, NodeId(0));
        let out = node.on_proposal(NodeId(0), &b4).unwrap();
        assert_eq!(votes_in(&out).len(), 1);
    }

    #[test]
    fn vote_on_conflict_with_higher_justify() {
        // Lock on b2 (view 2); a conflicting branch certified at view 3
        // unlocks.
        let (mut node, blocks, qcs) = locked_on_b2();
        let fork = Block::new(blocks[0].id, ViewNumber(3), qcs[0].clone(), 7, NodeId(3));
        let fork_qc = qc_for(&fork, &[1, 2, 3]);
        node.adopt_block(fork.clone());
        let b4 = Block::new(fork.id, ViewNumber(4), fork_qc, 1, NodeId(0));
        assert!(!node.store().extends(&fork.id, &qcs[1].block_id).unwrap());
        let out = node.on_proposal(NodeId(0), &b4).unwrap();
        assert_eq!(votes_in(&out).len(), 1);
    }

    #[test]
    fn no_vote_on_conflict_with_lower_justify() {
        let (mut node, blocks, qcs) = locked_on_b2();
        let b4 = Block::new(blocks[0].id, ViewNumber(4), qcs[0].clone(), 1, NodeId(0));
        let out = node.on_proposal(NodeId(0), &b4).unwrap();
        assert!(votes_in(&out).is_empty());
    }

    #[test]
    fn three_chain_commits_tail() {
        let (blocks, qcs) = chain(&[1, 2, 3]);
        let mut node = HotStuffNode::new(NodeId(0), cfg());
        feed(&mut node, &blocks);
        let out = node.process_qc(&qcs[2]).unwrap();
        assert_eq!(out.committed.len(), 1);
        assert_eq!(out.committed[0].block_id, blocks[0].id);
        assert_eq!(out.committed[0].height, 1);
        assert_eq!(out.advance, Some(ViewNumber(3)));
    }

    #[test]
    fn view_gap_locks_but_does_not_commit() {
        let (blocks, qcs) = chain(&[1, 2, 4]);
        let mut node = HotStuffNode::new(NodeId(0), cfg());
        feed(&mut node, &blocks);
        let out = node.process_qc(&qcs[2]).unwrap();
        assert!(out.committed.is_empty());
        assert_eq!(node.safety().locked_qc, qcs[1]);
    }

    #[test]
    fn old_qc_leaves_state_unchanged() {
        let (blocks, qcs) = chain(&[1, 2, 3]);
        let mut node = HotStuffNode::new(NodeId(0), cfg());
        feed(&mut node, &blocks);
        node.process_qc(&qcs[2]).unwrap();
        let before = node.safety().clone();
        let out = node.process_qc(&qcs[0]).unwrap();
        assert!(out.committed.is_empty());
        assert_eq!(node.safety().highest_qc, before.highest_qc);
        assert_eq!(node.safety().locked_qc, before.locked_qc);
    }

    #[test]
    fn two_chain_mutation_commits_early() {
        let (blocks, qcs) = chain(&[1, 2]);
        let mut c = cfg();
        c.mutation = Mutation::TwoChainCommit;
        let mut node = HotStuffNode::new(NodeId(0), c);
        feed(&mut node, &blocks);
        let out = node.process_qc(&qcs[1]).unwrap();
        assert_eq!(out.committed.len(), 1);
        assert_eq!(out.committed[0].block_id, blocks[0].id);
    }

    #[test]
    fn quorum_of_votes_forms_qc_once() {
        let (blocks, _) = chain(&[1]);
        // Node 2 leads view 2 and collects votes for b1.
        let mut node = HotStuffNode::new(NodeId(2), cfg());
        node.enter_view(ViewNumber(1), true);
        node.adopt_block(blocks[0].clone());
        let vote = |i| Vote::new(blocks[0].id, ViewNumber(1), Phase::Generic, NodeId(i));
        assert_eq!(node.on_vote(&vote(0)).unwrap().advance, None);
        assert_eq!(node.on_vote(&vote(1)).unwrap().advance, None);
        let third = node.on_vote(&vote(3)).unwrap();
        assert_eq!(third.advance, Some(ViewNumber(1)));
        assert_eq!(node.safety().highest_qc.block_id, blocks[0].id);
        let fourth = node.on_vote(&vote(2)).unwrap();
        assert!(fourth.messages.is_empty() && fourth.advance.is_none());
    }

    #[test]
    fn equivocating_voter_counts_per_block() {
        // Node 3 votes for both A and B in view 1; correct voters split.
        // Enumerate every split of the correct votes: exactly the blocks with
        // three distinct voters certify, never both.
        let (blocks, _) = chain(&[1]);
        let a = blocks[0].clone();
        let b = Block::new(a.parent, a.view, a.justify.clone(), 99, a.proposer);
        for mask in 0u32..8 {
            let mut node = HotStuffNode::new(NodeId(2), cfg());
            node.enter_view(ViewNumber(1), true);
            node.adopt_block(a.clone());
            node.adopt_block(b.clone());
            let mut certified = Vec::new();
            let mut cast = |node: &mut HotStuffNode, blk: &Block, voter: u32| {
                let v = Vote::new(blk.id, blk.view, Phase::Generic, NodeId(voter));
                if node.on_vote(&v).unwrap().advance.is_some() {
                    certified.push(blk.id);
                }
            };
            cast(&mut node, &a, 3);
            cast(&mut node, &b, 3);
            for i in 0..3 {
                let blk = if mask & (1 << i) != 0 { &a } else { &b };
                cast(&mut node, blk, i);
            }
            assert!(certified.len() <= 1, "mask {mask:03b}");
            let a_votes = mask.count_ones() + 1;
            assert_eq!(certified.contains(&a.id), a_votes >= 3);
        }
    }

    #[test]
    fn unknown_parent_is_fetched_from_sender() {
        let (blocks, qcs) = chain(&[1, 2]);
        let mut node = HotStuffNode::new(NodeId(1), cfg());
        node.enter_view(ViewNumber(2), true);
        let b3 = Block::new(blocks[1].id, ViewNumber(3), qcs[1].clone(), 1, NodeId(3));
        let out = node.on_proposal(NodeId(3), &b3).unwrap();
        assert!(out
            .messages
            .iter()
            .any(|o| o.msg == Message::FetchRequest { block_id: blocks[1].id }
                && o.dest == Dest::To(NodeId(3))));
        assert!(votes_in(&out).is_empty());
        assert_eq!(node.parked(), 1);
        node.on_message(NodeId(3), &Message::FetchResponse(blocks[1].clone()));
        let out = node.on_message(NodeId(3), &Message::FetchResponse(blocks[0].clone()));
        assert_eq!(node.parked(), 0);
        assert_eq!(votes_in(&out).len(), 1, "buffered proposal voted once resolved");
    }

    #[test]
    fn pending_votes_pruned_below_key() {
        let (blocks, qcs) = chain(&[1, 2, 3]);
        let mut node = HotStuffNode::new(NodeId(1), cfg());
        feed(&mut node, &blocks);
        node.on_vote(&Vote::new(blocks[0].id, ViewNumber(1), Phase::Generic, NodeId(0)))
            .unwrap();
        assert_eq!(node.pending_vote_views().count(), 1);
        node.process_qc(&qcs[2]).unwrap();
        assert!(node.pending_vote_views().all(|v| v >= ViewNumber(3)));
    }
}
