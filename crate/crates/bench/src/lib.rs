//! Workloads shared by the benchmarks.

use stufflab::harness::suite::{cascade, faultless};
use stufflab::harness::{ProtocolKind, ScenarioConfig};
use stufflab::pacemaker::PacemakerKind;

pub const SIZES: [usize; 3] = [4, 16, 31];

/// Faultless runs to 20 commits, one per protocol and size.
pub fn steady_state() -> Vec<(String, ScenarioConfig)> {
    let mut out = Vec::new();
    for p in [ProtocolKind::HotStuff3, ProtocolKind::HotStuff2] {
        for n in SIZES {
            out.push((format!("{p:?}/n={n}").to_lowercase(), faultless(n, p, 1000, 20)));
        }
    }
    out
}

/// Leader-crash cascades to the first commit, per pacemaker.
pub fn cascades(n: usize) -> Vec<(String, ScenarioConfig)> {
    [PacemakerKind::Baseline, PacemakerKind::Epoch, PacemakerKind::Relayer]
        .into_iter()
        .map(|pm| (format!("{pm:?}/n={n}").to_lowercase(), cascade(n, ProtocolKind::HotStuff2, pm)))
        .collect()
}
