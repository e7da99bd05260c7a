//! Seeded discrete-event simulator of partial synchrony.
//!
//! Events are ordered by `(time, seq)`; `seq` follows insertion order, so a
//! run is a pure function of its [`ScenarioConfig`].

pub mod byzantine;
pub mod delay;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::harness::scenario::{ProtocolKind, ScenarioConfig, ScenarioError, StopCondition};
use crate::harness::trace::{
    CommitRecord, NodeCounters, RecordKind, StopReason, Trace, TraceFooter, TraceRecord,
};
use crate::pacemaker::{Pacemaker, PacemakerDecision, PacemakerEvent, PacemakerTimer, Timing};
use crate::protocol::{
    ClusterConfig, Dest, HotStuff2Node, HotStuffNode, Message, MessageClass, Outgoing,
    ProtocolEvent, ProtocolOutput, ProtocolTimer, Replica,
};
use crate::types::{Block, BlockId, NodeId, Phase, ViewNumber, Vote};

pub use byzantine::{apply_strategy, fork_block, ByzantineStrategy, Disposition};
pub use delay::{DelayModel, PreGstPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    Pacemaker(PacemakerTimer),
    Protocol(ProtocolTimer),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Start(NodeId),
}

#[derive(Debug, Clone)]
pub enum SimEventKind {
    Deliver { from: NodeId, to: NodeId, msg: Message },
    TimerFire { node: NodeId, timer: Timer },
    Inject(Control),
}

#[derive(Debug, Clone)]
pub struct SimEvent {
    pub time: u64,
    pub seq: u64,
    pub kind: SimEventKind,
}

struct NodeSlot {
    replica: Box<dyn Replica>,
    pm: Pacemaker,
    strategy: Option<ByzantineStrategy>,
    crashed: bool,
    height: u64,
    counters: NodeCounters,
}

pub struct Simulator {
    cfg: ScenarioConfig,
    rng: ChaCha8Rng,
    now: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), SimEventKind>,
    nodes: Vec<NodeSlot>,
    records: Vec<TraceRecord>,
    commits: Vec<CommitRecord>,
    stop: Option<StopReason>,
    processed: u64,
}

/// Runs a scenario to its stop condition.
pub fn run(config: &ScenarioConfig) -> Result<Trace, ScenarioError> {
    let mut sim = Simulator::new(config.clone())?;
    sim.run_to_end();
    Ok(sim.finish())
}

impl Simulator {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let bad = |e: crate::CoreError| ScenarioError::ConfigInvalid {
            field: "n".into(),
            reason: e.to_string(),
        };
        let mut cluster = ClusterConfig::new(cfg.n, cfg.leaders).map_err(bad)?;
        cluster.aggregate = cfg.aggregate;
        cluster.delta = cfg.delay.delta_cap;
        cluster.payload_units = cfg.payload_units;
        cluster.mutation = cfg.mutation;
        let timing = Timing::for_delta(cfg.delay.delta_cap);
        let mut nodes = Vec::with_capacity(cfg.n);
        for i in 0..cfg.n as u32 {
            let id = NodeId(i);
            let replica: Box<dyn Replica> = match cfg.protocol {
                ProtocolKind::HotStuff3 => Box::new(HotStuffNode::new(id, cluster.clone())),
                ProtocolKind::HotStuff2 => Box::new(HotStuff2Node::new(id, cluster.clone())),
            };
            let pm = Pacemaker::new(id, cfg.n, cfg.leaders, cfg.pacemaker, timing).map_err(bad)?;
            nodes.push(NodeSlot {
                replica,
                pm,
                strategy: cfg.strategy_of(id),
                crashed: false,
                height: 0,
                counters: NodeCounters {
                    node: id,
                    ..NodeCounters::default()
                },
            });
        }
        Ok(Simulator {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            nodes,
            records: Vec::new(),
            commits: Vec::new(),
            stop: None,
            processed: 0,
        })
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn replica(&self, id: NodeId) -> &dyn Replica {
        self.nodes[id.index()].replica.as_ref()
    }

    pub fn pacemaker(&self, id: NodeId) -> &Pacemaker {
        &self.nodes[id.index()].pm
    }

    fn schedule(&mut self, time: u64, kind: SimEventKind) {
        self.queue.insert((time, self.seq), kind);
        self.seq += 1;
    }

    fn commits_reached(&self) -> bool {
        let StopCondition::Commits(k) = self.cfg.stop else {
            return false;
        };
        self.nodes
            .iter()
            .filter(|s| s.strategy.is_none())
            .all(|s| s.height >= k)
    }

    /// Pops and dispatches one event; `None` once the run is over.
    pub fn step(&mut self) -> Option<SimEvent> {
        if self.stop.is_some() {
            return None;
        }
        if self.processed == 0 && self.seq == 0 {
            for i in 0..self.cfg.n as u32 {
                self.schedule(0, SimEventKind::Inject(Control::Start(NodeId(i))));
            }
        }
        if self.commits_reached() {
            self.stop = Some(StopReason::Commits);
            return None;
        }
        let Some((&(time, seq), _)) = self.queue.first_key_value() else {
            self.stop = Some(StopReason::Quiescent);
            return None;
        };
        if let StopCondition::Horizon(h) = self.cfg.stop {
            if time >= h {
                self.stop = Some(StopReason::Horizon);
                return None;
            }
        }
        if time > self.cfg.max_time {
            self.stop = Some(StopReason::MaxTime);
            return None;
        }
        if self.processed >= self.cfg.max_events {
            self.stop = Some(StopReason::MaxEvents);
            return None;
        }
        let kind = self.queue.remove(&(time, seq)).expect("peeked");
        assert!(time >= self.now, "ClockRegression: {} -> {}", self.now, time);
        self.now = time;
        self.processed += 1;
        self.dispatch(kind.clone());
        Some(SimEvent { time, seq, kind })
    }

    pub fn run_to_end(&mut self) {
        while self.step().is_some() {}
    }

    pub fn finish(self) -> Trace {
        let end_time = match (self.stop, self.cfg.stop) {
            (Some(StopReason::Horizon), StopCondition::Horizon(h)) => h,
            _ => self.now,
        };
        let max_timeout = self
            .nodes
            .iter()
            .filter(|s| s.strategy.is_none())
            .map(|s| s.pm.max_timeout())
            .max()
            .unwrap_or(0);
        Trace {
            footer: TraceFooter {
                end_time,
                max_timeout,
                stop: self.stop.unwrap_or(StopReason::Quiescent),
                events: self.processed,
            },
            counters: self.nodes.into_iter().map(|s| s.counters).collect(),
            config: self.cfg,
            records: self.records,
            commits: self.commits,
        }
    }

    fn record(&mut self, node: NodeId, kind: RecordKind) -> &mut TraceRecord {
        self.records.push(TraceRecord::new(self.now, node, kind));
        self.records.last_mut().expect("just pushed")
    }

    /// False once a crashed node's crash time has passed.
    fn alive(&mut self, id: NodeId) -> bool {
        let slot = &mut self.nodes[id.index()];
        match slot.strategy {
            Some(ByzantineStrategy::Crash { at }) if self.now >= at => {
                if !slot.crashed {
                    slot.crashed = true;
                    self.record(id, RecordKind::Crash);
                }
                false
            }
            _ => true,
        }
    }

    fn dispatch(&mut self, kind: SimEventKind) {
        match kind {
            SimEventKind::Inject(Control::Start(id)) => {
                if !self.alive(id) {
                    return;
                }
                self.record(id, RecordKind::Start);
                let d = self.nodes[id.index()].pm.start();
                self.apply_pacemaker(id, d);
            }
            SimEventKind::Deliver { from, to, msg } => {
                if !self.alive(to) {
                    return;
                }
                let r = self.record(to, RecordKind::Deliver);
                r.view = msg.view();
                r.detail = msg.kind().to_string();
                r.msg_size_units = msg.size_units();
                r.class = Some(msg.class());
                r.peer = Some(from);
                match msg.class() {
                    MessageClass::Pacemaker => {
                        let slot = &mut self.nodes[to.index()];
                        let ev = PacemakerEvent::SyncMessage { sender: from, msg };
                        let d = slot.pm.step(ev, &slot.replica.safety().highest_qc);
                        self.apply_pacemaker(to, d);
                    }
                    MessageClass::Protocol => {
                        let out = self.nodes[to.index()].replica.on_message(from, &msg);
                        self.apply_protocol(to, out);
                    }
                }
            }
            SimEventKind::TimerFire { node, timer } => {
                if !self.alive(node) {
                    return;
                }
                self.fire(node, timer);
            }
        }
    }

    fn fire(&mut self, node: NodeId, timer: Timer) {
        let current = self.nodes[node.index()].pm.view();
        match timer {
            Timer::Pacemaker(PacemakerTimer::View(v)) => {
                if v != current {
                    self.record(node, RecordKind::TimerStale).view = Some(v);
                    return;
                }
                self.record(node, RecordKind::Timeout).view = Some(v);
                let out = self.nodes[node.index()].replica.on_local_timeout(v);
                self.apply_protocol(node, out);
                let slot = &mut self.nodes[node.index()];
                let d = slot
                    .pm
                    .step(PacemakerEvent::LocalTimeout(v), &slot.replica.safety().highest_qc);
                self.apply_pacemaker(node, d);
            }
            Timer::Pacemaker(PacemakerTimer::Relay { view, stage }) => {
                if view <= current {
                    self.record(node, RecordKind::TimerStale).view = Some(view);
                    return;
                }
                let r = self.record(node, RecordKind::Timer);
                r.view = Some(view);
                r.detail = format!("relay stage {stage}");
                let slot = &mut self.nodes[node.index()];
                let d = slot.pm.step(
                    PacemakerEvent::RelayTimeout { view, stage },
                    &slot.replica.safety().highest_qc,
                );
                self.apply_pacemaker(node, d);
            }
            Timer::Protocol(t) => {
                let ProtocolTimer::DeltaWait(v) = t;
                let r = self.record(node, RecordKind::Timer);
                r.view = Some(v);
                r.detail = "delta_wait".into();
                let out = self.nodes[node.index()].replica.on_timer(t);
                self.apply_protocol(node, out);
            }
        }
    }

    fn apply_pacemaker(&mut self, id: NodeId, d: PacemakerDecision) {
        self.emit(id, d.messages);
        for (t, dur) in d.timers {
            let at = self.now + dur;
            self.schedule(
                at,
                SimEventKind::TimerFire {
                    node: id,
                    timer: Timer::Pacemaker(t),
                },
            );
        }
        if let Some(v) = d.enter_view {
            let r = self.record(id, RecordKind::EnterView);
            r.view = Some(v);
            r.detail = if d.via_qc { "qc" } else { "sync" }.into();
            let out = self.nodes[id.index()].replica.enter_view(v, d.via_qc);
            self.apply_protocol(id, out);
        }
        for (from, qc) in d.learned {
            let out = self.nodes[id.index()].replica.observe_qc(from, &qc);
            self.apply_protocol(id, out);
        }
    }

    fn apply_protocol(&mut self, id: NodeId, out: ProtocolOutput) {
        let correct = self.nodes[id.index()].strategy.is_none();
        for ev in out.events {
            self.record_event(id, correct, ev);
        }
        let last = out.committed.len().saturating_sub(1);
        for (i, c) in out.committed.into_iter().enumerate() {
            if !c.conflicting {
                let slot = &mut self.nodes[id.index()];
                slot.height = slot.height.max(c.height);
            }
            self.commits.push(CommitRecord {
                time: self.now,
                node: id,
                block_id: c.block_id,
                height: c.height,
                view: c.view,
                conflicting: c.conflicting,
                direct: i == last,
            });
        }
        for (t, dur) in out.timers {
            let at = self.now + dur;
            self.schedule(
                at,
                SimEventKind::TimerFire {
                    node: id,
                    timer: Timer::Protocol(t),
                },
            );
        }
        self.emit(id, out.messages);
        if let Some(v) = out.advance {
            let slot = &mut self.nodes[id.index()];
            let d = slot
                .pm
                .step(PacemakerEvent::QcObserved(v), &slot.replica.safety().highest_qc);
            self.apply_pacemaker(id, d);
        }
    }

    fn record_event(&mut self, id: NodeId, correct: bool, ev: ProtocolEvent) {
        let (kind, view, block, detail) = match ev {
            ProtocolEvent::Proposed { block_id, view } => (RecordKind::Propose, Some(view), Some(block_id), String::new()),
            ProtocolEvent::Responsive { view } => (RecordKind::Responsive, Some(view), None, String::new()),
            ProtocolEvent::DeltaWait { view } => (RecordKind::DeltaWait, Some(view), None, String::new()),
            ProtocolEvent::Locked { view, block_id } => (RecordKind::Lock, Some(view), Some(block_id), String::new()),
            ProtocolEvent::Equivocation { view } => {
                if correct {
                    self.stop = Some(StopReason::Equivocation);
                }
                (RecordKind::Equivocation, Some(view), None, String::new())
            }
            ProtocolEvent::SafetyViolation { height } => {
                (RecordKind::SafetyViolation, None, None, format!("height {height}"))
            }
            ProtocolEvent::Rejected { reason } => (RecordKind::Reject, None, None, reason),
        };
        let r = self.record(id, kind);
        r.view = view;
        r.block = block;
        r.detail = detail;
    }

    fn targets(&self, from: NodeId, dest: Dest) -> Vec<NodeId> {
        match dest {
            Dest::To(to) => vec![to],
            Dest::Others => (0..self.cfg.n as u32)
                .map(NodeId)
                .filter(|&j| j != from)
                .collect(),
        }
    }

    fn emit(&mut self, from: NodeId, messages: Vec<Outgoing>) {
        let strategy = self.nodes[from.index()].strategy;
        for o in messages {
            assert_unforged(from, &o.msg);
            if strategy == Some(ByzantineStrategy::Equivocator) {
                if let (Message::Proposal(a), Dest::Others) = (&o.msg, o.dest) {
                    if a.proposer == from {
                        self.equivocate(from, a.clone());
                        continue;
                    }
                }
            }
            let (msg, late) = match strategy.map(|s| apply_strategy(s, self.now, o.msg.clone())) {
                None => (o.msg, false),
                Some(Disposition::Drop) => continue,
                Some(Disposition::Send(m)) => (m, false),
                Some(Disposition::SendLate(m)) => (m, true),
            };
            for to in self.targets(from, o.dest) {
                self.send_one(from, to, msg.clone(), late);
            }
        }
    }

    /// Sends block `a` to the lower half of the ids and a conflicting fork
    /// to the upper half, then leaks each block to the other half. The
    /// corrupted node votes for the fork as well.
    fn equivocate(&mut self, from: NodeId, a: Block) {
        let depth = self.rng.gen_range(1..=4);
        let slot = &mut self.nodes[from.index()];
        let b = fork_block(slot.replica.store(), &a, depth);
        slot.replica.adopt_block(b.clone());
        let half = (self.cfg.n / 2) as u32;
        let others = self.targets(from, Dest::Others);
        let (lower, upper): (Vec<NodeId>, Vec<NodeId>) = others.iter().partition(|j| j.0 < half);
        for (group, first, second) in [(&lower, &a, &b), (&upper, &b, &a)] {
            for &to in group {
                self.send_one(from, to, Message::Proposal(first.clone()), false);
            }
            for &to in group {
                self.send_one(from, to, Message::Proposal(second.clone()), false);
            }
        }
        let (phase, collector) = match self.cfg.protocol {
            ProtocolKind::HotStuff3 => (Phase::Generic, self.nodes[from.index()].replica.config().leader_of(b.view.next())),
            ProtocolKind::HotStuff2 => (Phase::Prepare, from),
        };
        let vote = Message::Vote(Vote::new(b.id, b.view, phase, from));
        if collector == from {
            let out = self.nodes[from.index()].replica.on_message(from, &vote);
            self.apply_protocol(from, out);
        } else {
            self.send_one(from, collector, vote, false);
        }
    }

    fn send_one(&mut self, from: NodeId, to: NodeId, msg: Message, late: bool) {
        let size = msg.size_units();
        let class = msg.class();
        let r = self.record(from, RecordKind::Send);
        r.view = msg.view();
        r.detail = msg.kind().to_string();
        r.msg_size_units = size;
        r.class = Some(class);
        r.peer = Some(to);
        if let Message::Proposal(b) = &msg {
            r.block = Some(b.id);
        }
        let c = &mut self.nodes[from.index()].counters;
        c.messages += 1;
        c.units += size;
        match class {
            MessageClass::Protocol => {
                c.protocol_messages += 1;
                c.protocol_units += size;
            }
            MessageClass::Pacemaker => {
                c.pacemaker_messages += 1;
                c.pacemaker_units += size;
            }
        }
        let payload = msg.payload_units();
        let at = if late {
            self.cfg.delay.latest(self.now, payload)
        } else {
            self.cfg.delay.delivery_time(self.now, payload, &mut self.rng)
        };
        if let Some(at) = at {
            self.schedule(at, SimEventKind::Deliver { from, to, msg });
        }
    }
}

/// Unforgeability: a node only ever sends votes it signed itself.
fn assert_unforged(from: NodeId, msg: &Message) {
    let vote = match msg {
        Message::Vote(v) => Some(v),
        Message::NewView { last_vote, .. } => last_vote.as_ref(),
        _ => None,
    };
    if let Some(v) = vote {
        assert!(
            v.voter == from && v.sig.signer == from,
            "ForgedToken: node {from} sent a vote signed by {}",
            v.sig.signer
        );
    }
}

/// Block ids proposed in the trace, keyed by first send time.
pub fn proposal_send_times(trace: &Trace) -> BTreeMap<BlockId, u64> {
    let mut first = BTreeMap::new();
    for r in trace.sends() {
        if let Some(b) = r.block {
            first.entry(b).or_insert(r.time);
        }
    }
    first
}

/// Views entered without a certificate for the preceding view, per node.
pub fn sync_entries(trace: &Trace) -> BTreeMap<NodeId, Vec<ViewNumber>> {
    let mut out: BTreeMap<NodeId, Vec<ViewNumber>> = BTreeMap::new();
    for r in &trace.records {
        if r.kind == RecordKind::EnterView && r.detail == "sync" {
            if let Some(v) = r.view {
                out.entry(r.node).or_default().push(v);
            }
        }
    }
    out
}
