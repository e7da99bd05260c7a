//! View synchronization. Three interchangeable strategies decide when a node
//! enters each view:
//!
//! * `Baseline`: on timeout, all-to-all `Sync`; 2f+1 of them open the view.
//! * `Epoch`: epochs of f+1 views. Only the first view of an epoch needs an
//!   all-to-all `EpochSync` (with an f+1 echo); interior views advance on
//!   local timeouts without messages.
//! * `Relayer`: on timeout, a `Wish` goes to the next leader only, which
//!   aggregates 2f+1 into a `ViewCert`. Up to f+1 relayers are tried, one
//!   timeout apart.
//!
//! Every strategy enters `v+1` as soon as a certificate for `v` is observed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::protocol::{Dest, Message, Outgoing};
use crate::quorum::{fault_tolerance, quorum_threshold};
use crate::types::{NodeId, QuorumCertificate, ViewNumber};
use crate::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "seed")]
pub enum LeaderMode {
    RoundRobin,
    SeededRandom(u64),
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn leader_of(view: ViewNumber, n: usize, mode: LeaderMode) -> NodeId {
    let n = n as u64;
    let idx = match mode {
        LeaderMode::RoundRobin => view.0 % n,
        LeaderMode::SeededRandom(seed) => splitmix64(seed ^ splitmix64(view.0)) % n,
    };
    NodeId(idx as u32)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacemakerKind {
    #[default]
    Baseline,
    Epoch,
    Relayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacemakerTimer {
    /// Local timeout for a view.
    View(ViewNumber),
    /// Escalate the wish for `view` past relayer `stage`.
    Relay { view: ViewNumber, stage: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PacemakerEvent {
    LocalTimeout(ViewNumber),
    RelayTimeout { view: ViewNumber, stage: u64 },
    QcObserved(ViewNumber),
    /// A pacemaker message (`Sync`, `EpochSync`, `Wish`, `ViewCert`).
    SyncMessage { sender: NodeId, msg: Message },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PacemakerDecision {
    pub enter_view: Option<ViewNumber>,
    /// Entry was caused by a certificate for the preceding view.
    pub via_qc: bool,
    pub messages: Vec<Outgoing>,
    pub timers: Vec<(PacemakerTimer, u64)>,
    /// Certificates carried by received pacemaker messages.
    pub learned: Vec<(NodeId, QuorumCertificate)>,
}

impl PacemakerDecision {
    fn broadcast(&mut self, msg: Message) {
        self.messages.push(Outgoing {
            dest: Dest::Others,
            msg,
        });
    }

    fn send(&mut self, to: NodeId, msg: Message) {
        self.messages.push(Outgoing {
            dest: Dest::To(to),
            msg,
        });
    }
}

/// Timeout schedule shared by all strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub base_timeout: u64,
    pub backoff: u64,
    /// Cap on the backoff exponent.
    pub max_exponent: u32,
    /// Delay before a wish is escalated to the next relayer.
    pub relay_timeout: u64,
}

impl Timing {
    /// Base timeout 4Δ, doubling per consecutive failure.
    pub fn for_delta(delta: u64) -> Self {
        Timing {
            base_timeout: 4 * delta,
            backoff: 2,
            max_exponent: 10,
            relay_timeout: 4 * delta,
        }
    }

    pub fn timeout(&self, failures: u32) -> u64 {
        let exp = failures.min(self.max_exponent);
        self.base_timeout
            .saturating_mul(self.backoff.saturating_pow(exp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochConfig {
    pub epoch_length: u64,
    pub base_timeout: u64,
    pub backoff: u64,
}

impl EpochConfig {
    pub fn new(f: usize, timing: &Timing) -> Self {
        EpochConfig {
            epoch_length: f as u64 + 1,
            base_timeout: timing.base_timeout,
            backoff: timing.backoff,
        }
    }

    pub fn epoch_of(&self, view: ViewNumber) -> u64 {
        view.0 / self.epoch_length
    }

    pub fn first_view(&self, epoch: u64) -> ViewNumber {
        ViewNumber(epoch * self.epoch_length)
    }

    pub fn is_boundary(&self, view: ViewNumber) -> bool {
        view.0 % self.epoch_length == 0
    }
}

/// One node's pacemaker.
#[derive(Debug, Clone)]
pub struct Pacemaker {
    me: NodeId,
    n: usize,
    f: usize,
    quorum: usize,
    leaders: LeaderMode,
    kind: PacemakerKind,
    timing: Timing,
    epochs: EpochConfig,
    view: ViewNumber,
    failures: u32,
    max_timeout: u64,
    syncs: BTreeMap<ViewNumber, BTreeSet<NodeId>>,
    sent: BTreeSet<u64>,
    epoch_syncs: BTreeMap<u64, BTreeSet<NodeId>>,
    wishes: BTreeMap<NodeId, ViewNumber>,
    certified: ViewNumber,
}

impl Pacemaker {
    pub fn new(
        me: NodeId,
        n: usize,
        leaders: LeaderMode,
        kind: PacemakerKind,
        timing: Timing,
    ) -> Result<Self, CoreError> {
        let f = fault_tolerance(n)?;
        Ok(Pacemaker {
            me,
            n,
            f,
            quorum: quorum_threshold(n)?,
            leaders,
            kind,
            timing,
            epochs: EpochConfig::new(f, &timing),
            view: ViewNumber::GENESIS,
            failures: 0,
            max_timeout: 0,
            syncs: BTreeMap::new(),
            sent: BTreeSet::new(),
            epoch_syncs: BTreeMap::new(),
            wishes: BTreeMap::new(),
            certified: ViewNumber::GENESIS,
        })
    }

    pub fn view(&self) -> ViewNumber {
        self.view
    }

    pub fn kind(&self) -> PacemakerKind {
        self.kind
    }

    pub fn failures(&self) -> u32 {
        self.failures
    }

    /// Largest view timeout armed so far.
    pub fn max_timeout(&self) -> u64 {
        self.max_timeout
    }

    pub fn epochs(&self) -> &EpochConfig {
        &self.epochs
    }

    /// Everyone starts in view 1, justified by genesis.
    pub fn start(&mut self) -> PacemakerDecision {
        let mut d = PacemakerDecision::default();
        self.enter(ViewNumber(1), true, &mut d);
        d
    }

    pub fn step(&mut self, event: PacemakerEvent, highest: &QuorumCertificate) -> PacemakerDecision {
        match self.kind {
            PacemakerKind::Baseline => baseline_step(self, event, highest),
            PacemakerKind::Epoch => epoch_step(self, event, highest),
            PacemakerKind::Relayer => relayer_step(self, event, highest),
        }
    }

    fn enter(&mut self, view: ViewNumber, via_qc: bool, d: &mut PacemakerDecision) {
        if view <= self.view {
            return;
        }
        self.view = view;
        if via_qc {
            self.failures = 0;
        }
        let timeout = self.timing.timeout(self.failures);
        self.max_timeout = self.max_timeout.max(timeout);
        d.timers.push((PacemakerTimer::View(view), timeout));
        d.enter_view = Some(view);
        d.via_qc = via_qc;
        self.syncs.retain(|v, _| *v > view);
        let epoch = self.epochs.epoch_of(view);
        self.epoch_syncs.retain(|e, _| *e > epoch);
    }

    fn leader(&self, view: ViewNumber) -> NodeId {
        leader_of(view, self.n, self.leaders)
    }

    fn learn(&self, sender: NodeId, qc: &QuorumCertificate, d: &mut PacemakerDecision) {
        if !qc.is_genesis() {
            d.learned.push((sender, qc.clone()));
        }
    }
}

/// All-to-all timeout pacemaker.
pub fn baseline_step(pm: &mut Pacemaker, event: PacemakerEvent, highest: &QuorumCertificate) -> PacemakerDecision {
    let mut d = PacemakerDecision::default();
    match event {
        PacemakerEvent::QcObserved(v) => pm.enter(v.next(), true, &mut d),
        PacemakerEvent::LocalTimeout(v) if v == pm.view => {
            pm.failures += 1;
            let target = v.next();
            if pm.sent.insert(target.0) {
                d.broadcast(Message::Sync {
                    view: target,
                    highest_qc: highest.clone(),
                });
            }
            pm.syncs.entry(target).or_default().insert(pm.me);
            baseline_check(pm, target, &mut d);
        }
        PacemakerEvent::SyncMessage {
            sender,
            msg: Message::Sync { view, highest_qc },
        } => {
            pm.learn(sender, &highest_qc, &mut d);
            if view > pm.view {
                pm.syncs.entry(view).or_default().insert(sender);
                baseline_check(pm, view, &mut d);
            }
        }
        _ => {}
    }
    d
}

fn baseline_check(pm: &mut Pacemaker, target: ViewNumber, d: &mut PacemakerDecision) {
    if pm.syncs.get(&target).is_some_and(|s| s.len() >= pm.quorum) {
        pm.enter(target, false, d);
    }
}

/// Epoch pacemaker: synchronize only at epoch boundaries.
pub fn epoch_step(pm: &mut Pacemaker, event: PacemakerEvent, highest: &QuorumCertificate) -> PacemakerDecision {
    let mut d = PacemakerDecision::default();
    match event {
        PacemakerEvent::QcObserved(v) => pm.enter(v.next(), true, &mut d),
        PacemakerEvent::LocalTimeout(v) if v == pm.view => {
            pm.failures += 1;
            let next = v.next();
            if pm.epochs.is_boundary(next) {
                let epoch = pm.epochs.epoch_of(next);
                epoch_send(pm, epoch, highest, &mut d);
                epoch_check(pm, epoch, &mut d);
            } else {
                pm.enter(next, false, &mut d);
            }
        }
        PacemakerEvent::SyncMessage {
            sender,
            msg: Message::EpochSync { epoch, highest_qc },
        } => {
            pm.learn(sender, &highest_qc, &mut d);
            if pm.epochs.first_view(epoch) > pm.view {
                pm.epoch_syncs.entry(epoch).or_default().insert(sender);
                // f+1 senders include a correct one: echo.
                let seen = pm.epoch_syncs[&epoch].len();
                if seen > pm.f {
                    epoch_send(pm, epoch, highest, &mut d);
                }
                epoch_check(pm, epoch, &mut d);
            }
        }
        _ => {}
    }
    d
}

fn epoch_send(pm: &mut Pacemaker, epoch: u64, highest: &QuorumCertificate, d: &mut PacemakerDecision) {
    if pm.sent.insert(epoch) {
        d.broadcast(Message::EpochSync {
            epoch,
            highest_qc: highest.clone(),
        });
        pm.epoch_syncs.entry(epoch).or_default().insert(pm.me);
    }
}

fn epoch_check(pm: &mut Pacemaker, epoch: u64, d: &mut PacemakerDecision) {
    if pm.epoch_syncs.get(&epoch).is_some_and(|s| s.len() >= pm.quorum) {
        let first = pm.epochs.first_view(epoch);
        pm.enter(first, false, d);
    }
}

/// Relayer pacemaker: wishes go to one leader, which certifies the view.
pub fn relayer_step(pm: &mut Pacemaker, event: PacemakerEvent, highest: &QuorumCertificate) -> PacemakerDecision {
    let mut d = PacemakerDecision::default();
    match event {
        PacemakerEvent::QcObserved(v) => pm.enter(v.next(), true, &mut d),
        PacemakerEvent::LocalTimeout(v) if v == pm.view => {
            pm.failures += 1;
            relayer_wish(pm, v.next(), 0, highest, &mut d);
        }
        PacemakerEvent::RelayTimeout { view, stage } if view > pm.view => {
            relayer_wish(pm, view, stage + 1, highest, &mut d);
        }
        PacemakerEvent::SyncMessage {
            sender,
            msg: Message::Wish { view, highest_qc },
        } => {
            pm.learn(sender, &highest_qc, &mut d);
            relayer_record(pm, sender, view, &mut d);
        }
        PacemakerEvent::SyncMessage {
            msg: Message::ViewCert { view },
            ..
        } => pm.enter(view, false, &mut d),
        _ => {}
    }
    d
}

fn relayer_wish(pm: &mut Pacemaker, view: ViewNumber, stage: u64, highest: &QuorumCertificate, d: &mut PacemakerDecision) {
    let offset = stage % (pm.f as u64 + 1);
    let relayer = pm.leader(ViewNumber(view.0 + offset));
    if relayer == pm.me {
        relayer_record(pm, pm.me, view, d);
    } else {
        d.send(
            relayer,
            Message::Wish {
                view,
                highest_qc: highest.clone(),
            },
        );
    }
    d.timers
        .push((PacemakerTimer::Relay { view, stage }, pm.timing.relay_timeout));
}

/// A wish for `view` also stands for every earlier view.
fn relayer_record(pm: &mut Pacemaker, sender: NodeId, view: ViewNumber, d: &mut PacemakerDecision) {
    let slot = pm.wishes.entry(sender).or_default();
    if view > *slot {
        *slot = view;
    }
    let mut wished: Vec<ViewNumber> = pm.wishes.values().copied().collect();
    if wished.len() < pm.quorum {
        return;
    }
    wished.sort_unstable_by(|a, b| b.cmp(a));
    let supported = wished[pm.quorum - 1];
    if supported > pm.certified {
        pm.certified = supported;
        d.broadcast(Message::ViewCert { view: supported });
        pm.enter(supported, false, d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::genesis_qc;

    #[test]
    fn round_robin_leaders() {
        assert_eq!(leader_of(ViewNumber(5), 4, LeaderMode::RoundRobin), NodeId(1));
        assert_eq!(leader_of(ViewNumber(0), 4, LeaderMode::RoundRobin), NodeId(0));
    }

    #[test]
    fn seeded_random_is_deterministic_and_covers_nodes() {
        let mode = LeaderMode::SeededRandom(42);
        let a: Vec<_> = (0..400).map(|v| leader_of(ViewNumber(v), 7, mode)).collect();
        let b: Vec<_> = (0..400).map(|v| leader_of(ViewNumber(v), 7, mode)).collect();
        assert_eq!(a, b);
        let mut counts = [0usize; 7];
        for l in &a {
            counts[l.index()] += 1;
        }
        // Uniform draws: each node within a generous band around 400/7.
        assert!(counts.iter().all(|&c| (30..=90).contains(&c)), "{counts:?}");
        let other: Vec<_> = (0..400)
            .map(|v| leader_of(ViewNumber(v), 7, LeaderMode::SeededRandom(43)))
            .collect();
        assert_ne!(a, other);
    }

    #[test]
    fn timeout_backoff_is_capped() {
        let t = Timing::for_delta(100);
        assert_eq!(t.timeout(0), 400);
        assert_eq!(t.timeout(3), 3200);
        assert_eq!(t.timeout(50), 400 << 10);
    }

    /// Lock-step cluster of pacemakers. Delivers messages instantly and
    /// counts every point-to-point message.
    struct Cluster {
        pms: Vec<Pacemaker>,
        sent: usize,
        silent: BTreeSet<u32>,
    }

    impl Cluster {
        fn new(n: usize, kind: PacemakerKind) -> Self {
            let pms = (0..n as u32)
                .map(|i| {
                    let mut pm = Pacemaker::new(NodeId(i), n, LeaderMode::RoundRobin, kind, Timing::for_delta(100)).unwrap();
                    pm.start();
                    pm
                })
                .collect();
            Cluster {
                pms,
                sent: 0,
                silent: BTreeSet::new(),
            }
        }

        fn views(&self) -> Vec<u64> {
            self.pms
                .iter()
                .filter(|p| !self.silent.contains(&p.me.0))
                .map(|p| p.view.0)
                .collect()
        }

        fn deliver(&mut self, from: NodeId, d: PacemakerDecision, relays: &mut Vec<(NodeId, PacemakerTimer)>) {
            for (t, _) in &d.timers {
                if let PacemakerTimer::Relay { .. } = t {
                    relays.push((from, *t));
                }
            }
            let n = self.pms.len() as u32;
            for o in d.messages {
                let targets: Vec<u32> = match o.dest {
                    Dest::To(t) => vec![t.0],
                    Dest::Others => (0..n).filter(|&i| i != from.0).collect(),
                };
                for t in targets {
                    self.sent += 1;
                    if self.silent.contains(&t) {
                        continue;
                    }
                    let g = genesis_qc(self.pms.len());
                    let ev = PacemakerEvent::SyncMessage {
                        sender: from,
                        msg: o.msg.clone(),
                    };
                    let d2 = self.pms[t as usize].step(ev, &g);
                    self.deliver(NodeId(t), d2, relays);
                }
            }
        }

        /// Every live node times out in its current view.
        fn timeout_all(&mut self) {
            let n = self.pms.len();
            let mut relays = Vec::new();
            // All timers fire before any message lands.
            let mut fired = Vec::new();
            for i in 0..n {
                if self.silent.contains(&(i as u32)) {
                    continue;
                }
                let v = self.pms[i].view;
                let g = genesis_qc(n);
                fired.push((i, self.pms[i].step(PacemakerEvent::LocalTimeout(v), &g)));
            }
            for (i, d) in fired {
                self.deliver(NodeId(i as u32), d, &mut relays);
            }
            // Fire relay escalations of nodes still waiting, in stage order.
            let mut rounds = 0;
            while !relays.is_empty() {
                rounds += 1;
                assert!(rounds < 1000, "relay escalation does not settle");
                let batch = std::mem::take(&mut relays);
                for (node, t) in batch {
                    if let PacemakerTimer::Relay { view, stage } = t {
                        let g = genesis_qc(n);
                        let d = self.pms[node.index()].step(PacemakerEvent::RelayTimeout { view, stage }, &g);
                        self.deliver(node, d, &mut relays);
                    }
                }
            }
        }
    }

    #[test]
    fn baseline_sync_threshold() {
        let mut pm = Pacemaker::new(NodeId(0), 4, LeaderMode::RoundRobin, PacemakerKind::Baseline, Timing::for_delta(10)).unwrap();
        pm.start();
        pm.enter(ViewNumber(8), true, &mut PacemakerDecision::default());
        let g = genesis_qc(4);
        for (i, s) in [1u32, 2, 3].iter().enumerate() {
            let d = pm.step(
                PacemakerEvent::SyncMessage {
                    sender: NodeId(*s),
                    msg: Message::Sync {
                        view: ViewNumber(9),
                        highest_qc: g.clone(),
                    },
                },
                &g,
            );
            assert_eq!(d.enter_view.is_some(), i == 2);
        }
        assert_eq!(pm.view(), ViewNumber(9));
    }

    #[test]
    fn qc_observed_enters_next_view_and_resets_backoff() {
        for kind in [PacemakerKind::Baseline, PacemakerKind::Epoch, PacemakerKind::Relayer] {
            let mut pm = Pacemaker::new(NodeId(0), 4, LeaderMode::RoundRobin, kind, Timing::for_delta(10)).unwrap();
            pm.start();
            pm.failures = 3;
            pm.enter(ViewNumber(8), false, &mut PacemakerDecision::default());
            let d = pm.step(PacemakerEvent::QcObserved(ViewNumber(8)), &genesis_qc(4));
            assert_eq!(d.enter_view, Some(ViewNumber(9)));
            assert!(d.via_qc);
            assert!(d.messages.is_empty());
            assert_eq!(d.timers, vec![(PacemakerTimer::View(ViewNumber(9)), 40)]);
            // Stale observation is ignored.
            let d = pm.step(PacemakerEvent::QcObserved(ViewNumber(3)), &genesis_qc(4));
            assert_eq!(d.enter_view, None);
        }
    }

    #[test]
    fn baseline_failed_view_costs_n_squared() {
        for n in [4usize, 7, 10] {
            let mut c = Cluster::new(n, PacemakerKind::Baseline);
            c.timeout_all();
            assert_eq!(c.sent, n * (n - 1), "n={n}");
            assert!(c.views().iter().all(|&v| v == 2));
        }
    }

    #[test]
    fn epoch_boundaries_and_interior_views() {
        let mut c = Cluster::new(4, PacemakerKind::Epoch);
        assert_eq!(c.pms[0].epochs().epoch_length, 2);
        // View 1 → 2 crosses into epoch 1: synchronized.
        c.timeout_all();
        assert_eq!(c.sent, 12);
        assert!(c.views().iter().all(|&v| v == 2));
        // View 2 → 3 is interior: no messages.
        c.timeout_all();
        assert_eq!(c.sent, 12);
        assert!(c.views().iter().all(|&v| v == 3));
        c.timeout_all();
        assert_eq!(c.sent, 24);
        assert!(c.views().iter().all(|&v| v == 4));
    }

    #[test]
    fn epoch_cascade_cost_is_one_sync_per_epoch() {
        for n in [4usize, 7, 10] {
            let f = (n - 1) / 3;
            let mut epoch = Cluster::new(n, PacemakerKind::Epoch);
            let mut base = Cluster::new(n, PacemakerKind::Baseline);
            // f + 1 consecutive failed views starting from view f+1 (the
            // first view of epoch 1) cover exactly one epoch.
            for c in [&mut epoch, &mut base] {
                for _ in 0..f {
                    c.timeout_all();
                }
                c.sent = 0;
                for _ in 0..=f {
                    c.timeout_all();
                }
            }
            assert_eq!(epoch.sent, n * (n - 1), "n={n}");
            assert_eq!(base.sent, (f + 1) * n * (n - 1), "n={n}");
        }
    }

    #[test]
    fn epoch_echo_amplifies_f_plus_one() {
        let mut pm = Pacemaker::new(NodeId(0), 4, LeaderMode::RoundRobin, PacemakerKind::Epoch, Timing::for_delta(10)).unwrap();
        pm.start();
        let g = genesis_qc(4);
        let sync = |s| PacemakerEvent::SyncMessage {
            sender: NodeId(s),
            msg: Message::EpochSync {
                epoch: 1,
                highest_qc: g.clone(),
            },
        };
        assert!(pm.step(sync(1), &g).messages.is_empty());
        let d = pm.step(sync(2), &g);
        assert_eq!(d.messages.len(), 1, "echo after f+1");
        assert_eq!(d.enter_view, Some(ViewNumber(2)), "own echo completes 2f+1");
    }

    #[test]
    fn relayer_view_change_is_linear() {
        for n in [4usize, 7, 10] {
            let mut c = Cluster::new(n, PacemakerKind::Relayer);
            c.timeout_all();
            assert_eq!(c.sent, 2 * (n - 1), "n={n}");
            assert!(c.views().iter().all(|&v| v == 2));
        }
    }

    #[test]
    fn relayer_falls_back_past_silent_relayer() {
        for n in [4usize, 7, 10] {
            let f = (n - 1) / 3;
            let mut c = Cluster::new(n, PacemakerKind::Relayer);
            // Leaders of views 2..=f+1 are silent; the (f+1)-th relayer is
            // correct.
            for v in 2..(2 + f as u64) {
                c.silent.insert(leader_of(ViewNumber(v), n, LeaderMode::RoundRobin).0);
            }
            c.timeout_all();
            assert!(c.views().iter().all(|&v| v == 2), "n={n}: {:?}", c.views());
            // Wishes only come from live nodes; the bound counts all n.
            assert!(c.sent <= (f + 1) * 2 * (n - 1), "n={n}: {}", c.sent);
        }
    }
}
