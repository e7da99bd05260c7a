//! Scenario generators for batch runs: randomized adversarial cells,
//! faultless baselines and the leader-crash cascade.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pacemaker::{LeaderMode, PacemakerKind};
use crate::protocol::Mutation;
use crate::simnet::{ByzantineStrategy, DelayModel, PreGstPolicy};
use crate::types::NodeId;

use super::scenario::{ProtocolKind, ScenarioConfig, StopCondition};

pub const PACEMAKERS: [PacemakerKind; 3] = [PacemakerKind::Baseline, PacemakerKind::Epoch, PacemakerKind::Relayer];
pub const PROTOCOLS: [ProtocolKind; 2] = [ProtocolKind::HotStuff3, ProtocolKind::HotStuff2];

fn with_n(n: usize) -> ScenarioConfig {
    ScenarioConfig {
        n,
        f: (n - 1) / 3,
        ..ScenarioConfig::default()
    }
}

/// Faultless, synchronous from time zero, fixed δ.
pub fn faultless(n: usize, protocol: ProtocolKind, delta: u64, commits: u64) -> ScenarioConfig {
    ScenarioConfig {
        protocol,
        delay: DelayModel {
            gst: Some(0),
            delta_cap: delta,
            delta_min: 10,
            delta_max: 10,
            payload_cost: 0,
            pre_gst: PreGstPolicy::AdversarialHold,
        },
        stop: StopCondition::Commits(commits),
        ..with_n(n)
    }
}

/// Up to f distinct corrupted nodes with random strategies.
fn random_byzantine(rng: &mut ChaCha8Rng, n: usize, f: usize, crash_by: u64) -> Vec<(NodeId, ByzantineStrategy)> {
    let k = rng.gen_range(0..=f);
    let mut ids: Vec<u32> = (0..n as u32).collect();
    ids.shuffle(rng);
    let mut picked: Vec<u32> = ids.into_iter().take(k).collect();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| {
            let s = match *ByzantineStrategy::ALL.choose(rng).expect("non-empty") {
                ByzantineStrategy::Crash { .. } => ByzantineStrategy::Crash {
                    at: rng.gen_range(0..=crash_by),
                },
                other => other,
            };
            (NodeId(i), s)
        })
        .collect()
}

fn random_delay(rng: &mut ChaCha8Rng, gst: u64, pre_gst: PreGstPolicy) -> DelayModel {
    let delta = [100u64, 200][rng.gen_range(0..2)];
    let delta_min = rng.gen_range(1..=delta / 10);
    let delta_max = rng.gen_range(delta_min..=delta / 2);
    DelayModel {
        gst: Some(gst),
        delta_cap: delta,
        delta_min,
        delta_max,
        payload_cost: rng.gen_range(0..=1),
        pre_gst,
    }
}

/// Cell `index` of the randomized safety batch: n in {4, 7, 10}, up to f
/// corrupted nodes of any strategy, every message held until GST + Δ.
pub fn safety_cell(index: u64, protocol: ProtocolKind) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5AFE_0000 ^ index);
    let n = [4usize, 7, 10][rng.gen_range(0..3)];
    let f = (n - 1) / 3;
    let gst = rng.gen_range(0..=4_000);
    let delay = random_delay(&mut rng, gst, PreGstPolicy::AdversarialHold);
    ScenarioConfig {
        protocol,
        pacemaker: *PACEMAKERS.choose(&mut rng).expect("non-empty"),
        leaders: if rng.gen_bool(0.5) {
            LeaderMode::RoundRobin
        } else {
            LeaderMode::SeededRandom(index)
        },
        byzantine: random_byzantine(&mut rng, n, f, gst + 2_000),
        payload_units: rng.gen_range(0..=3),
        seed: index,
        stop: StopCondition::Horizon(gst + 8_000),
        delay,
        ..with_n(n)
    }
}

/// Cell `index` of the liveness batch: finite GST, mild or adversarial
/// pre-GST delays, up to f corrupted nodes.
pub fn liveness_cell(index: u64, protocol: ProtocolKind, pacemaker: PacemakerKind) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11FE_0000 ^ index);
    let n = [4usize, 7][rng.gen_range(0..2)];
    let f = (n - 1) / 3;
    let gst = rng.gen_range(0..=3_000);
    let pre = if rng.gen_bool(0.5) {
        PreGstPolicy::AdversarialHold
    } else {
        PreGstPolicy::RandomUpTo(rng.gen_range(100..=2_000))
    };
    let delay = random_delay(&mut rng, gst, pre);
    ScenarioConfig {
        protocol,
        pacemaker,
        byzantine: random_byzantine(&mut rng, n, f, gst),
        payload_units: rng.gen_range(0..=2),
        seed: index,
        stop: StopCondition::Horizon(gst + 25_000),
        delay,
        ..with_n(n)
    }
}

/// An equivocating leader at n = 4 under noisy pre-GST delivery; the batch
/// used to show the checker catches broken protocol builds.
pub fn adversarial_cell(seed: u64, protocol: ProtocolKind, mutation: Mutation) -> ScenarioConfig {
    ScenarioConfig {
        protocol,
        mutation,
        byzantine: vec![(NodeId(1), ByzantineStrategy::Equivocator)],
        delay: DelayModel {
            gst: Some(3_000),
            delta_cap: 100,
            delta_min: 5,
            delta_max: 60,
            payload_cost: 0,
            pre_gst: PreGstPolicy::RandomUpTo(600),
        },
        seed,
        stop: StopCondition::Horizon(12_000),
        ..with_n(4)
    }
}

/// The leaders of views 1..=f crash at time zero; runs to the first commit.
pub fn cascade(n: usize, protocol: ProtocolKind, pacemaker: PacemakerKind) -> ScenarioConfig {
    let f = (n - 1) / 3;
    ScenarioConfig {
        protocol,
        pacemaker,
        byzantine: (1..=f as u32).map(|i| (NodeId(i), ByzantineStrategy::Crash { at: 0 })).collect(),
        delay: DelayModel {
            gst: Some(0),
            delta_cap: 100,
            delta_min: 10,
            delta_max: 10,
            payload_cost: 0,
            pre_gst: PreGstPolicy::AdversarialHold,
        },
        stop: StopCondition::Commits(1),
        ..with_n(n)
    }
}
