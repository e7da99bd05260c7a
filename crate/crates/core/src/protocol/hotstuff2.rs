//! Two-phase HotStuff-2, view by view.
//!
//! A view runs propose → Prepare votes → Prepare-QC (lock) → Commit votes →
//! Commit-QC (decide). Both vote rounds return to the view's leader, which
//! broadcasts each certificate. A leader that enters its view without a
//! certificate from the preceding view first collects locks for Δ.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryMode {
    /// Held a certificate from the preceding view; proposed at once.
    Responsive,
    /// Waited Δ for status reports before proposing.
    DeltaWait,
}

/// A replica's lock, reported to a leader waiting out Δ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusMessage {
    pub sender: NodeId,
    pub view: ViewNumber,
    pub lock: QuorumCertificate,
}

type VoteKey = (ViewNumber, Phase, BlockId);

#[derive(Debug, Clone)]
pub struct HotStuff2Node {
    id: NodeId,
    cfg: ClusterConfig,
    safety: SafetyState,
    store: BlockStore,
    votes: BTreeMap<VoteKey, BTreeMap<NodeId, Vote>>,
    formed: BTreeSet<VoteKey>,
    certified: BTreeMap<ViewNumber, BlockId>,
    statuses: BTreeMap<ViewNumber, BTreeMap<NodeId, QuorumCertificate>>,
    entry_modes: BTreeMap<ViewNumber, EntryMode>,
    waiting: Option<ViewNumber>,
    proposed: BTreeSet<ViewNumber>,
    halted: bool,
    fetcher: Fetcher,
    inbox: VecDeque<(NodeId, Message)>,
}

impl HotStuff2Node {
    pub fn new(id: NodeId, cfg: ClusterConfig) -> Self {
        HotStuff2Node {
            id,
            safety: SafetyState::new(cfg.n),
            store: BlockStore::new(cfg.n),
            cfg,
            votes: BTreeMap::new(),
            formed: BTreeSet::new(),
            certified: BTreeMap::new(),
            statuses: BTreeMap::new(),
            entry_modes: BTreeMap::new(),
            waiting: None,
            proposed: BTreeSet::new(),
            halted: false,
            fetcher: Fetcher::default(),
            inbox: VecDeque::new(),
        }
    }

    /// How this node entered `view` as its leader, if it led it.
    pub fn entry_mode(&self, view: ViewNumber) -> Option<EntryMode> {
        self.entry_modes.get(&view).copied()
    }

    /// Set once two different blocks were certified in one view.
    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn statuses(&self, view: ViewNumber) -> usize {
        self.statuses.get(&view).map_or(0, BTreeMap::len)
    }

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

    pub fn on_proposal_hs2(&mut self, from: NodeId, block: &Block) -> Result<ProtocolOutput, ProtocolError> {
        if let Err(reason) = proposal_well_formed(&self.cfg, block) {
            return Err(if reason.contains("justify") {
                ProtocolError::InvalidQc
            } else {
                ProtocolError::InvalidBlock(block.id)
            });
        }
        Ok(self.on_message(from, &Message::Proposal(block.clone())))
    }

    pub fn on_prepare_qc(&mut self, qc: &QuorumCertificate) -> Result<ProtocolOutput, ProtocolError> {
        self.checked_cert(qc, Phase::Prepare)
    }

    pub fn on_commit_qc(&mut self, qc: &QuorumCertificate) -> Result<ProtocolOutput, ProtocolError> {
        self.checked_cert(qc, Phase::Commit)
    }

    fn checked_cert(&mut self, qc: &QuorumCertificate, phase: Phase) -> Result<ProtocolOutput, ProtocolError> {
        if qc.phase != phase || !verify_qc(qc, self.cfg.n) {
            return Err(ProtocolError::InvalidQc);
        }
        let mut out = ProtocolOutput::default();
        self.absorb_cert(self.id, qc, &mut out);
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
        if self.halted {
            return;
        }
        match msg {
            Message::Proposal(b) => self.handle_proposal(from, b.clone(), out),
            Message::Vote(v) => self.handle_vote(from, v, out),
            Message::Certificate(qc) => self.absorb_cert(from, qc, out),
            Message::StatusRequest { view } => {
                if self.cfg.leader_of(*view) == from {
                    let status = StatusMessage {
                        sender: self.id,
                        view: *view,
                        lock: self.safety.locked_qc.clone(),
                    };
                    self.route(from, Message::Status(status), out);
                }
            }
            Message::Status(s) => self.handle_status(from, s, out),
            Message::FetchRequest { block_id } => {
                if let Some(b) = self.store.get(block_id) {
                    let reply = Message::FetchResponse(b.clone());
                    self.route(from, reply, out);
                }
            }
            Message::FetchResponse(b) => self.handle_fetched(from, b.clone(), out),
            _ => {}
        }
    }

    fn handle_status(&mut self, from: NodeId, s: &StatusMessage, out: &mut ProtocolOutput) {
        if s.sender != from || self.cfg.leader_of(s.view) != self.id {
            return;
        }
        if !verify_qc(&s.lock, self.cfg.n) {
            out.events.push(ProtocolEvent::Rejected {
                reason: format!("status from {from} carries an invalid lock"),
            });
            return;
        }
        self.statuses
            .entry(s.view)
            .or_default()
            .insert(from, s.lock.clone());
        // The reported lock is a certified block; it raises the key so the
        // Δ-wait proposal extends it.
        self.absorb_cert(from, &s.lock, out);
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
        self.absorb_cert(from, &block.justify, out);
        if self.halted {
            return;
        }
        self.maybe_prepare_vote(&block, out);
        if fresh_insert {
            self.release(&id, out);
        }
    }

    fn maybe_prepare_vote(&mut self, block: &Block, out: &mut ProtocolOutput) {
        let s = &self.safety;
        let fresh = self.cfg.mutation == Mutation::DoubleVote || block.view > s.voted(Phase::Prepare);
        let current = block.view >= s.current_view;
        let lock = &s.locked_qc;
        let safe = block.justify.view >= lock.view
            || self.store.extends(&block.id, &lock.block_id).unwrap_or(false);
        if !(fresh && current && safe) {
            return;
        }
        self.safety.record_vote(Phase::Prepare, block.view);
        let vote = Vote::new(block.id, block.view, Phase::Prepare, self.id);
        self.route(block.proposer, Message::Vote(vote), out);
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
                Parked::Qc(from, qc) => self.absorb_cert(from, &qc, out),
            }
        }
    }

    fn handle_vote(&mut self, from: NodeId, vote: &Vote, out: &mut ProtocolOutput) {
        if vote.phase == Phase::Generic || !vote.token_valid() {
            out.events.push(ProtocolEvent::Rejected {
                reason: format!("bad vote token from {from}"),
            });
            return;
        }
        if self.cfg.leader_of(vote.view) != self.id {
            return;
        }
        let key = (vote.view, vote.phase, vote.block_id);
        if self.formed.contains(&key) {
            return;
        }
        let bucket = self.votes.entry(key).or_default();
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
        self.votes.remove(&key);
        out.broadcast(Message::Certificate(qc.clone()));
        self.absorb_cert(vote.voter, &qc, out);
    }

    /// Lock and key update, then the phase-specific step.
    fn absorb_cert(&mut self, from: NodeId, qc: &QuorumCertificate, out: &mut ProtocolOutput) {
        if self.halted {
            return;
        }
        if !verify_qc(qc, self.cfg.n) {
            out.events.push(ProtocolEvent::Rejected {
                reason: format!("invalid certificate from {from}"),
            });
            return;
        }
        if qc.is_genesis() || qc.phase == Phase::Generic {
            return;
        }
        if !self.store.contains(&qc.block_id) {
            self.fetcher
                .park(qc.block_id, from, self.id, Parked::Qc(from, qc.clone()), out);
            return;
        }
        match self.certified.get(&qc.view) {
            Some(seen) if *seen != qc.block_id => {
                out.events.push(ProtocolEvent::Equivocation { view: qc.view });
                self.halted = true;
                return;
            }
            Some(_) => {}
            None => {
                self.certified.insert(qc.view, qc.block_id);
            }
        }
        if self.cfg.mutation == Mutation::DropLock {
            self.safety.observe_highest(qc);
        } else if self.safety.observe_lock(qc) {
            out.events.push(ProtocolEvent::Locked {
                view: self.safety.locked_qc.view,
                block_id: self.safety.locked_qc.block_id,
            });
        }
        match qc.phase {
            Phase::Prepare => self.maybe_commit_vote(qc, out),
            Phase::Commit => {
                self.commit(&qc.block_id, out);
                out.signal_advance(qc.view);
            }
            Phase::Generic => {}
        }
    }

    fn maybe_commit_vote(&mut self, qc: &QuorumCertificate, out: &mut ProtocolOutput) {
        let fresh = self.cfg.mutation == Mutation::DoubleVote || qc.view > self.safety.voted(Phase::Commit);
        if qc.view < self.safety.current_view || !fresh {
            return;
        }
        self.safety.record_vote(Phase::Commit, qc.view);
        let vote = Vote::new(qc.block_id, qc.view, Phase::Commit, self.id);
        let leader = self.cfg.leader_of(qc.view);
        self.route(leader, Message::Vote(vote), out);
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

    fn propose(&mut self, view: ViewNumber, out: &mut ProtocolOutput) {
        if self.proposed.contains(&view) {
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

impl Replica for HotStuff2Node {
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

    fn enter_view(&mut self, view: ViewNumber, _via_qc: bool) -> ProtocolOutput {
        let mut out = ProtocolOutput::default();
        if self.halted || view <= self.safety.current_view {
            return out;
        }
        self.safety.current_view = view;
        self.waiting = None;
        if self.cfg.leader_of(view) != self.id {
            return out;
        }
        if self.safety.highest_qc.view.next() == view {
            self.entry_modes.insert(view, EntryMode::Responsive);
            out.events.push(ProtocolEvent::Responsive { view });
            self.propose(view, &mut out);
        } else {
            self.entry_modes.insert(view, EntryMode::DeltaWait);
            out.events.push(ProtocolEvent::DeltaWait { view });
            self.waiting = Some(view);
            out.broadcast(Message::StatusRequest { view });
            out.timers.push((ProtocolTimer::DeltaWait(view), self.cfg.delta));
        }
        self.drain(&mut out);
        out
    }

    fn on_message(&mut self, from: NodeId, msg: &Message) -> ProtocolOutput {
        let mut out = ProtocolOutput::default();
        self.handle(from, msg, &mut out);
        self.drain(&mut out);
        out
    }

    fn on_timer(&mut self, timer: ProtocolTimer) -> ProtocolOutput {
        let mut out = ProtocolOutput::default();
        let ProtocolTimer::DeltaWait(view) = timer;
        if self.halted || self.waiting != Some(view) || self.safety.current_view != view {
            return out;
        }
        self.waiting = None;
        self.propose(view, &mut out);
        self.drain(&mut out);
        out
    }

    fn observe_qc(&mut self, from: NodeId, qc: &QuorumCertificate) -> ProtocolOutput {
        let mut out = ProtocolOutput::default();
        self.absorb_cert(from, qc, &mut out);
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

    fn cert(block: &Block, phase: Phase, voters: &[u32]) -> QuorumCertificate {
        let votes: Vec<Vote> = voters
            .iter()
            .map(|&i| Vote::new(block.id, block.view, phase, NodeId(i)))
            .collect();
        form_qc(&votes, 4).unwrap()
    }

    fn block_at(parent: &QuorumCertificate, view: u64, payload: u64) -> Block {
        let view = ViewNumber(view);
        Block::new(parent.block_id, view, parent.clone(), payload, cfg().leader_of(view))
    }

    /// Chain of blocks at `views`, each justified by the previous block's
    /// Prepare certificate.
    fn chain(views: &[u64]) -> (Vec<Block>, Vec<QuorumCertificate>) {
        let mut justify = genesis_qc(4);
        let mut blocks = Vec::new();
        let mut qcs = Vec::new();
        for &v in views {
            let b = block_at(&justify, v, 1);
            justify = cert(&b, Phase::Prepare, &[0, 1, 2]);
            blocks.push(b);
            qcs.push(justify.clone());
        }
        (blocks, qcs)
    }

    fn votes_of(out: &ProtocolOutput, phase: Phase) -> Vec<(Dest, Vote)> {
        out.messages
            .iter()
            .filter_map(|o| match &o.msg {
                Message::Vote(v) if v.phase == phase => Some((o.dest, v.clone())),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn responsive_entry_with_previous_view_qc() {
        let (blocks, qcs) = chain(&[7]);
        // Leader of view 8 at n = 4 is node 0.
        let mut node = HotStuff2Node::new(NodeId(0), cfg());
        node.adopt_block(blocks[0].clone());
        node.on_prepare_qc(&qcs[0]).unwrap();
        let out = node.enter_view(ViewNumber(8), true);
        assert_eq!(node.entry_mode(ViewNumber(8)), Some(EntryMode::Responsive));
        assert!(out.timers.is_empty());
        let p: Vec<_> = out.proposals().cloned().collect();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].justify, qcs[0]);
    }

    #[test]
    fn delta_wait_entry_then_propose_from_best_lock() {
        let (blocks, qcs) = chain(&[5, 6]);
        let mut node = HotStuff2Node::new(NodeId(0), cfg());
        node.adopt_block(blocks[0].clone());
        node.adopt_block(blocks[1].clone());
        node.on_prepare_qc(&qcs[0]).unwrap();
        let out = node.enter_view(ViewNumber(8), false);
        assert_eq!(node.entry_mode(ViewNumber(8)), Some(EntryMode::DeltaWait));
        assert_eq!(out.proposals().count(), 0);
        assert_eq!(out.timers, vec![(ProtocolTimer::DeltaWait(ViewNumber(8)), 1000)]);
        assert!(out
            .messages
            .iter()
            .any(|o| o.msg == Message::StatusRequest { view: ViewNumber(8) }));
        // Node 2 reports a lock on view 6.
        node.on_message(
            NodeId(2),
            &Message::Status(StatusMessage {
                sender: NodeId(2),
                view: ViewNumber(8),
                lock: qcs[1].clone(),
            }),
        );
        let out = node.on_timer(ProtocolTimer::DeltaWait(ViewNumber(8)));
        let p: Vec<_> = out.proposals().cloned().collect();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].justify, qcs[1]);
        // The timer is one-shot.
        assert_eq!(node.on_timer(ProtocolTimer::DeltaWait(ViewNumber(8))).proposals().count(), 0);
    }

    #[test]
    fn qc_delivered_only_to_leader_still_responsive() {
        let (blocks, qcs) = chain(&[6, 7]);
        let mut node = HotStuff2Node::new(NodeId(0), cfg());
        for b in &blocks {
            node.adopt_block(b.clone());
        }
        node.on_prepare_qc(&qcs[1]).unwrap();
        node.enter_view(ViewNumber(8), true);
        assert_eq!(node.entry_mode(ViewNumber(8)), Some(EntryMode::Responsive));
    }

    #[test]
    fn prepare_vote_rules() {
        let (blocks, qcs) = chain(&[1, 2]);
        let mut node = HotStuff2Node::new(NodeId(2), cfg());
        node.adopt_block(blocks[0].clone());
        node.adopt_block(blocks[1].clone());
        node.on_prepare_qc(&qcs[1]).unwrap();
        node.enter_view(ViewNumber(3), true);
        assert_eq!(node.safety().locked_qc, qcs[1]);

        // Conflicting proposal justified below the lock: refused.
        let low = block_at(&qcs[0], 3, 5);
        let out = node.on_proposal_hs2(low.proposer, &low).unwrap();
        assert!(votes_of(&out, Phase::Prepare).is_empty());

        // Justified at the lock's view and extending it: vote to proposer.
        let good = block_at(&qcs[1], 3, 1);
        let out = node.on_proposal_hs2(good.proposer, &good).unwrap();
        let v = votes_of(&out, Phase::Prepare);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].0, Dest::To(good.proposer));

        // Same view again: no second vote.
        let again = block_at(&qcs[1], 3, 2);
        let out = node.on_proposal_hs2(again.proposer, &again).unwrap();
        assert!(votes_of(&out, Phase::Prepare).is_empty());
    }

    #[test]
    fn prepare_qc_locks_and_commit_votes_once() {
        let (blocks, qcs) = chain(&[1]);
        let mut node = HotStuff2Node::new(NodeId(2), cfg());
        node.adopt_block(blocks[0].clone());
        node.enter_view(ViewNumber(1), true);
        let out = node.on_prepare_qc(&qcs[0]).unwrap();
        assert_eq!(node.safety().locked_qc, qcs[0]);
        let v = votes_of(&out, Phase::Commit);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].0, Dest::To(NodeId(1)));
        let out = node.on_prepare_qc(&qcs[0]).unwrap();
        assert!(votes_of(&out, Phase::Commit).is_empty());
    }

    #[test]
    fn stale_prepare_qc_raises_lock_without_vote() {
        let (blocks, qcs) = chain(&[1]);
        let mut node = HotStuff2Node::new(NodeId(2), cfg());
        node.adopt_block(blocks[0].clone());
        node.enter_view(ViewNumber(3), false);
        let out = node.on_prepare_qc(&qcs[0]).unwrap();
        assert_eq!(node.safety().locked_qc, qcs[0]);
        assert!(votes_of(&out, Phase::Commit).is_empty());
    }

    #[test]
    fn conflicting_certificates_in_one_view_halt() {
        let g = genesis_qc(4);
        let a = block_at(&g, 1, 1);
        let b = block_at(&g, 1, 2);
        let mut node = HotStuff2Node::new(NodeId(3), cfg());
        node.adopt_block(a.clone());
        node.adopt_block(b.clone());
        node.on_prepare_qc(&cert(&a, Phase::Prepare, &[0, 1, 2])).unwrap();
        let out = node.on_prepare_qc(&cert(&b, Phase::Prepare, &[1, 2, 3])).unwrap();
        assert!(out.events.contains(&ProtocolEvent::Equivocation { view: ViewNumber(1) }));
        assert!(node.halted());
    }

    #[test]
    fn commit_qc_commits_ancestors_in_order() {
        // b5 committed earlier, b7 uncommitted, Commit-QC on b8.
        let (blocks, qcs) = chain(&[5, 7, 8]);
        let mut node = HotStuff2Node::new(NodeId(1), cfg());
        for b in &blocks {
            node.adopt_block(b.clone());
        }
        let first = node.on_commit_qc(&cert(&blocks[0], Phase::Commit, &[0, 1, 2])).unwrap();
        assert_eq!(first.committed.len(), 1);
        let c8 = cert(&blocks[2], Phase::Commit, &[0, 1, 3]);
        let out = node.on_commit_qc(&c8).unwrap();
        let ids: Vec<_> = out.committed.iter().map(|c| c.block_id).collect();
        assert_eq!(ids, vec![blocks[1].id, blocks[2].id]);
        assert_eq!(out.advance, Some(ViewNumber(8)));
        let dup = node.on_commit_qc(&c8).unwrap();
        assert!(dup.committed.is_empty());
        let _ = qcs;
    }

    #[test]
    fn wrong_phase_certificate_is_rejected() {
        let (blocks, qcs) = chain(&[1]);
        let mut node = HotStuff2Node::new(NodeId(1), cfg());
        node.adopt_block(blocks[0].clone());
        assert!(matches!(node.on_commit_qc(&qcs[0]), Err(ProtocolError::InvalidQc)));
    }

    #[test]
    fn leader_runs_both_phases() {
        // Node 1 leads view 1. Feed it the other replicas' votes.
        let mut leader = HotStuff2Node::new(NodeId(1), cfg());
        let out = leader.enter_view(ViewNumber(1), true);
        let block = out.proposals().next().cloned().unwrap();
        let mut certs = Vec::new();
        for phase in [Phase::Prepare, Phase::Commit] {
            for i in [0u32, 2] {
                let out = leader.on_message(NodeId(i), &Message::Vote(Vote::new(block.id, block.view, phase, NodeId(i))));
                for o in &out.messages {
                    if let Message::Certificate(qc) = &o.msg {
                        certs.push(qc.phase);
                    }
                }
                if phase == Phase::Commit && i == 2 {
                    assert_eq!(out.committed.len(), 1);
                    assert_eq!(out.advance, Some(ViewNumber(1)));
                }
            }
        }
        assert_eq!(certs, vec![Phase::Prepare, Phase::Commit]);
    }
}
